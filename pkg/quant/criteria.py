"""
Tiêu chí đo sai số lượng tử hóa (frequency-guided criteria measuring)
- FEATURE: trung bình |X − X̂| trên từng kênh rồi trung bình theo kênh
- FGO: như trên nhưng so sánh biên độ FFT 2-D (không chuẩn hóa) của từng kênh
"""

import numpy as np

from core.spectral import fft_magnitude
from quant.quantizer import Bound, check_bounds, fake_quantize_array
from quant.sites import MeasureType


def broadcast_bound(bound: Bound, ndim: int) -> Bound:
    """Biên theo kênh (C,) → (C, 1, ..., 1) để broadcast theo trục đầu"""
    arr = np.asarray(bound, dtype=np.float64)
    if arr.size == 1:
        return float(arr.reshape(-1)[0])
    return arr.reshape((arr.size,) + (1,) * (ndim - 1))


def _spatial(x: np.ndarray) -> np.ndarray:
    return x if x.ndim >= 2 else x.reshape(1, -1)


def fcmp(bits: int, l: Bound, u: Bound, measure: MeasureType, x: np.ndarray) -> float:
    """
    Điểm γ giữa X và X̂ = fake_quantize(X, l, u, bits).
    Các kênh có cùng kích thước nên trung bình theo kênh của trung bình mỗi kênh
    bằng trung bình trên toàn bộ phần tử.
    """
    check_bounds(l, u)
    x64 = np.asarray(x, dtype=np.float64)
    x_hat = fake_quantize_array(x64, broadcast_bound(l, x64.ndim), broadcast_bound(u, x64.ndim), bits)
    if MeasureType(measure) is MeasureType.FGO:
        diff = fft_magnitude(_spatial(x64)) - fft_magnitude(_spatial(x_hat))
    else:
        diff = x64 - x_hat
    return float(np.mean(np.abs(diff)))
