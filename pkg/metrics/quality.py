"""
Đo chất lượng ảnh: PSNR, SSIM, chuyển luma BT.601

Quy ước benchmark SR: luma YCbCr (16–235) và cắt `scale` pixel viền.
Thử nghiệm toy: RGB, không cắt viền, peak 1.0.
"""

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.tensor import TensorShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
_YCBCR_WEIGHTS = np.array([65.481, 128.553, 24.966]) / 255.0


def rgb_to_luma(image: np.ndarray, benchmark: bool = True) -> np.ndarray:
    """
    (..., 3, H, W) trong [0, 1] → (..., H, W)
    benchmark=True: Y của YCbCr BT.601 (16/255 + ...), như imresize/rgb2ycbcr
    benchmark=False: tổng có trọng số 0.299 / 0.587 / 0.114
    """
    if image.ndim < 3 or image.shape[-3] != 3:
        raise TensorShapeError(f"cần ảnh RGB (..., 3, H, W), nhận {tuple(image.shape)}")
    x = image.astype(np.float64)
    if benchmark:
        return np.tensordot(_YCBCR_WEIGHTS, np.moveaxis(x, -3, 0), axes=1) + 16.0 / 255.0
    return np.tensordot(_LUMA_WEIGHTS, np.moveaxis(x, -3, 0), axes=1)


def _crop(x: np.ndarray, crop: int) -> np.ndarray:
    if crop <= 0:
        return x
    return x[..., crop:-crop, crop:-crop]


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0, crop: int = 0,
         luma_only: bool = False, cap: Optional[float] = None) -> float:
    """10·log10(peak² / MSE); ảnh giống hệt → +inf (hoặc `cap` nếu có)"""
    if a.shape != b.shape:
        raise TensorShapeError(f"psnr: shape {tuple(a.shape)} khác {tuple(b.shape)}")
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    if luma_only:
        x, y = rgb_to_luma(x), rgb_to_luma(y)
    x, y = _crop(x, crop), _crop(y, crop)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf if cap is None else float(cap)
    value = 10.0 * math.log10(peak * peak / mse)
    return value if cap is None else min(value, float(cap))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Lọc Gaussian tách được, chỉ giữ vùng 'valid'"""
    rows = sliding_window_view(x, g.size, axis=-1) @ g
    return sliding_window_view(rows, g.size, axis=-2) @ g


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0, crop: int = 0) -> float:
    """
    SSIM trung bình trên ảnh xám (H, W); ảnh RGB (3, H, W) được đổi sang luma trước.
    Cửa sổ Gaussian 11×11, σ = 1.5, K1 = 0.01, K2 = 0.03.
    """
    if a.shape != b.shape:
        raise TensorShapeError(f"ssim: shape {tuple(a.shape)} khác {tuple(b.shape)}")
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    if x.ndim == 3:
        x, y = rgb_to_luma(x), rgb_to_luma(y)
    if x.ndim != 2:
        raise TensorShapeError(f"ssim cần ảnh 2-D hoặc RGB, nhận {tuple(a.shape)}")
    x, y = _crop(x, crop), _crop(y, crop)
    if min(x.shape) < SSIM_WINDOW:
        raise TensorShapeError(f"ảnh {tuple(x.shape)} nhỏ hơn cửa sổ SSIM {SSIM_WINDOW}")

    g = gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x * mu_x
    syy = _filter_valid(y * y, g) - mu_y * mu_y
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    n_images: int = 1
    names: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {'psnr': self.psnr, 'ssim': self.ssim, 'n_images': self.n_images}

    @classmethod
    def mean_of(cls, reports: Iterable['MetricReport']) -> 'MetricReport':
        reports = list(reports)
        if not reports:
            raise ValueError("không có ảnh nào để tổng hợp")
        return cls(
            psnr=float(np.mean([r.psnr for r in reports])),
            ssim=float(np.mean([r.ssim for r in reports])),
            n_images=sum(r.n_images for r in reports),
            names=[n for r in reports for n in r.names],
        )


def evaluate_pair(sr: np.ndarray, hr: np.ndarray, scale: int = 0, benchmark: bool = True,
                  peak: float = 1.0, name: str = '') -> MetricReport:
    """PSNR/SSIM của một cặp ảnh (3, H, W) theo giao thức benchmark hoặc toy"""
    if benchmark:
        y_sr, y_hr = rgb_to_luma(sr), rgb_to_luma(hr)
        return MetricReport(psnr=psnr(y_sr, y_hr, peak, crop=scale), ssim=ssim(y_sr, y_hr, peak, crop=scale),
                            names=[name] if name else [])
    return MetricReport(psnr=psnr(sr, hr, peak), ssim=ssim(sr, hr, peak), names=[name] if name else [])
