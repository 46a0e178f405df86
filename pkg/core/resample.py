"""
Lấy mẫu lại ảnh
- bicubic_resize: kernel Keys (a = -0.5), biên replicate, mặc định khử răng cưa khi thu nhỏ
  (quy ước imresize dùng trong các benchmark SR); antialias=False cho Keys thuần
- mean_filter: lọc trung bình cửa sổ lẻ, biên replicate
"""

from functools import lru_cache

import numpy as np
from scipy import ndimage

from core.tensor import Tensor, TensorShapeError

KEYS_A = -0.5


def keys_kernel(t: np.ndarray, a: float = KEYS_A) -> np.ndarray:
    t = np.abs(t)
    t2 = t * t
    t3 = t2 * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


@lru_cache(maxsize=64)
def resize_matrix(n_in: int, n_out: int, antialias: bool = True) -> np.ndarray:
    """Ma trận (n_out, n_in) float64 thực hiện nội suy bicubic 1-D"""
    if n_in < 1 or n_out < 1:
        raise TensorShapeError(f"kích thước resize phải >= 1, nhận {n_in} -> {n_out}")
    scale = n_out / n_in
    # Thu nhỏ: kernel giãn theo 1/scale để chống aliasing
    kscale = min(1.0, scale) if antialias else 1.0
    support = 2.0 / kscale
    centers = (np.arange(n_out, dtype=np.float64) + 0.5) / scale - 0.5
    first = np.floor(centers - support).astype(np.int64)
    n_taps = int(np.ceil(2 * support)) + 2
    taps = first[:, None] + np.arange(n_taps)[None, :]
    weights = kscale * keys_kernel(kscale * (centers[:, None] - taps))
    weights /= weights.sum(axis=1, keepdims=True)
    matrix = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.repeat(np.arange(n_out), n_taps)
    np.add.at(matrix, (rows, np.clip(taps, 0, n_in - 1).ravel()), weights.ravel())
    matrix.setflags(write=False)
    return matrix


def bicubic_resize(x: Tensor, out_h: int, out_w: int, antialias: bool = True) -> Tensor:
    """Resize hai trục cuối của tensor bất kỳ (>= 2 chiều)"""
    if out_h < 1 or out_w < 1:
        raise TensorShapeError(f"kích thước đích phải >= 1, nhận {(out_h, out_w)}")
    h, w = x.shape[-2:]
    if (h, w) == (out_h, out_w):
        return x.copy()
    mh = resize_matrix(h, out_h, antialias)
    mw = resize_matrix(w, out_w, antialias)
    out = np.einsum('oh,...hw,pw->...op', mh, x.astype(np.float64), mw, optimize=True)
    return out.astype(x.dtype, copy=False)


def mean_filter(x: Tensor, window: int) -> Tensor:
    """Boxcar window×window trên hai trục cuối, biên replicate"""
    if window < 1 or window % 2 == 0:
        raise TensorShapeError(f"cửa sổ lọc phải là số lẻ >= 1, nhận {window}")
    if window == 1:
        return x.copy()
    size = (1,) * (x.ndim - 2) + (window, window)
    out = ndimage.uniform_filter(x.astype(np.float64), size=size, mode='nearest')
    return out.astype(x.dtype, copy=False)
