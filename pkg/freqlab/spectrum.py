"""Phổ log-biên độ trung bình theo bán kính và bản đồ phổ dư"""

from dataclasses import dataclass
from typing import List

import numpy as np

from core.spectral import centered_radius, fft_magnitude, fftshift2
from core.tensor import TensorShapeError
from metrics.quality import rgb_to_luma


@dataclass
class SpectrumReport:
    radii: np.ndarray
    values: np.ndarray

    def to_rows(self) -> List[tuple]:
        return [(int(r), float(v)) for r, v in zip(self.radii, self.values)]

    def peak_radius(self, min_radius: int = 1) -> int:
        mask = self.radii >= min_radius
        return int(self.radii[mask][np.argmax(self.values[mask])])


def _gray(image: np.ndarray) -> np.ndarray:
    if image.ndim == 2:
        return image.astype(np.float64)
    if image.ndim == 3 and image.shape[0] == 3:
        return rgb_to_luma(image, benchmark=False)
    if image.ndim == 3 and image.shape[0] == 1:
        return image[0].astype(np.float64)
    raise TensorShapeError(f"cần ảnh (H, W), (1, H, W) hoặc (3, H, W), nhận {tuple(image.shape)}")


def radial_profile(centered_map: np.ndarray) -> SpectrumReport:
    """Trung bình của bản đồ đã dời tâm theo bán kính nguyên (làm tròn) tính từ DC"""
    h, w = centered_map.shape[-2:]
    radius = np.rint(centered_radius(h, w)).astype(np.int64).ravel()
    values = centered_map.reshape(-1, h * w).mean(axis=0) if centered_map.ndim > 2 else centered_map.ravel()
    sums = np.bincount(radius, weights=values)
    counts = np.bincount(radius)
    present = counts > 0
    radii = np.nonzero(present)[0]
    return SpectrumReport(radii=radii, values=sums[present] / counts[present])


def log_amplitude_spectrum(image: np.ndarray) -> SpectrumReport:
    """Luma BT.601 → |F| dời tâm → log(1 + |F|) trung bình theo bán kính"""
    gray = _gray(image)
    amplitude = fftshift2(fft_magnitude(gray))
    return radial_profile(np.log1p(amplitude))


def residual_spectrum(img_a: np.ndarray, img_b: np.ndarray) -> np.ndarray:
    """| |F(a)| − |F(b)| | theo từng kênh, đã dời tâm"""
    if img_a.shape != img_b.shape:
        raise TensorShapeError(f"shape {tuple(img_a.shape)} khác {tuple(img_b.shape)}")
    return np.abs(fftshift2(fft_magnitude(img_a)) - fftshift2(fft_magnitude(img_b)))
