"""FFT 2-D trên hai trục cuối: thuận không chuẩn hóa, nghịch nhân 1/(HW)"""

import numpy as np

from core.tensor import ComplexGrid, Tensor


def fft2(x: Tensor) -> ComplexGrid:
    dtype = x.dtype if x.dtype == np.float64 else np.float32
    return ComplexGrid.from_complex(np.fft.fft2(x.astype(np.float64), axes=(-2, -1)), dtype=dtype)


def ifft2(grid: ComplexGrid) -> Tensor:
    """Phần thực của IFFT; dtype theo dtype của mặt phẳng re"""
    z = np.fft.ifft2(grid.to_complex(), axes=(-2, -1))
    return np.ascontiguousarray(z.real, dtype=grid.re.dtype)


def fft_magnitude(x: Tensor) -> np.ndarray:
    """|F(x)| float64 theo từng kênh (phục vụ tiêu chí FGO và phổ dư)"""
    return np.abs(np.fft.fft2(x.astype(np.float64), axes=(-2, -1)))


def fftshift2(z: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(z, axes=(-2, -1))


def ifftshift2(z: np.ndarray) -> np.ndarray:
    return np.fft.ifftshift(z, axes=(-2, -1))


def centered_radius(h: int, w: int) -> np.ndarray:
    """Khoảng cách Euclid tới tâm phổ (h//2, w//2) sau fftshift"""
    yy = np.arange(h, dtype=np.float64)[:, None] - h // 2
    xx = np.arange(w, dtype=np.float64)[None, :] - w // 2
    return np.sqrt(yy * yy + xx * xx)
