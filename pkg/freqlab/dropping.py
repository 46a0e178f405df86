"""
Bỏ thành phần tần số cao và suy giảm bằng lọc trung bình
- drop_high_freq: FFT → dời tâm → xếp bin theo khoảng cách tới tâm → zero ⌊γ·L⌋ bin xa nhất → IFFT
- mean_filter_degrade: boxcar θ×θ theo từng kênh
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from core.resample import mean_filter
from core.spectral import centered_radius, fftshift2, ifftshift2
from core.tensor import Tensor, TensorShapeError

THETAS = (3, 5, 7, 9, 11)


class DropSpecError(ValueError):
    """Tham số γ / θ không hợp lệ"""
    pass


@dataclass(frozen=True)
class DropSpec:
    """Một điểm thí nghiệm: tỉ lệ bỏ γ hoặc cửa sổ lọc θ (đúng một trong hai)"""
    gamma: Optional[float] = None
    theta: Optional[int] = None

    def __post_init__(self):
        if (self.gamma is None) == (self.theta is None):
            raise DropSpecError("DropSpec cần đúng một trong gamma hoặc theta")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise DropSpecError(f"gamma phải nằm trong [0, 1], nhận {self.gamma}")
        if self.theta is not None and (self.theta < 1 or self.theta % 2 == 0):
            raise DropSpecError(f"theta phải là số lẻ >= 1, nhận {self.theta}")

    @property
    def x(self) -> float:
        return float(self.gamma) if self.gamma is not None else float(self.theta)

    def apply(self, image: Tensor) -> Tensor:
        if self.gamma is not None:
            return drop_high_freq(image, self.gamma)
        return mean_filter_degrade(image, self.theta)


@lru_cache(maxsize=32)
def drop_order(h: int, w: int) -> np.ndarray:
    """
    Chỉ số row-major (trên phổ đã dời tâm) xếp tăng dần theo (khoảng cách, chỉ số).
    ⌊γ·L⌋ phần tử cuối là các bin bị bỏ.
    """
    dist = centered_radius(h, w).ravel()
    order = np.lexsort((np.arange(h * w), dist))
    order.setflags(write=False)
    return order


def drop_mask(h: int, w: int, gamma: float) -> np.ndarray:
    """Mặt nạ giữ lại (True = giữ) trên phổ đã dời tâm"""
    n_drop = int(np.floor(gamma * h * w))
    keep = np.ones(h * w, dtype=bool)
    if n_drop:
        keep[drop_order(h, w)[h * w - n_drop:]] = False
    return keep.reshape(h, w)


def drop_high_freq(image: Tensor, gamma: float) -> Tensor:
    """Áp dụng trên hai trục cuối, độc lập cho từng kênh"""
    if not 0.0 <= gamma <= 1.0:
        raise DropSpecError(f"gamma phải nằm trong [0, 1], nhận {gamma}")
    if image.ndim < 2:
        raise TensorShapeError(f"cần ảnh tối thiểu 2-D, nhận {tuple(image.shape)}")
    h, w = image.shape[-2:]
    if int(np.floor(gamma * h * w)) == 0:
        return image.copy()
    spectrum = fftshift2(np.fft.fft2(image.astype(np.float64), axes=(-2, -1)))
    spectrum = spectrum * drop_mask(h, w, gamma)
    restored = np.fft.ifft2(ifftshift2(spectrum), axes=(-2, -1)).real
    return restored.astype(image.dtype, copy=False)


def mean_filter_degrade(image: Tensor, theta: int) -> Tensor:
    if theta < 1 or theta % 2 == 0:
        raise DropSpecError(f"theta phải là số lẻ >= 1, nhận {theta}")
    return mean_filter(image, theta)
