"""
Chọn biên (l, u) cho một tensor
- adaptive_dual_clip: co tham lam l lên hoặc u xuống từng bước Δ = (max − min) / 2^b,
  chỉ nhận bước làm γ giảm chặt, dừng ngay khi không còn cải thiện (không áp dụng bước xấu)
- minmax_calibrate / percentile_calibrate: hai baseline
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from quant.criteria import fcmp
from quant.quantizer import PASSTHROUGH_BITS, QuantizationError, check_bits
from quant.sites import MIN_WIDTH, MeasureType

logger = logging.getLogger(__name__)


@dataclass
class ClipResult:
    l: float
    u: float
    score: float
    trace: List[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return max(len(self.trace) - 1, 0)

    def as_tuple(self) -> Tuple[float, float]:
        return self.l, self.u


def _check_nonempty(x: np.ndarray):
    if x.size == 0:
        raise QuantizationError("tensor rỗng, không thể hiệu chỉnh")


def adaptive_dual_clip(x: np.ndarray, bits: int, measure: MeasureType = MeasureType.FEATURE) -> ClipResult:
    """
    Bắt đầu từ (min, max). Mỗi vòng thử l + Δ và u − Δ, giữ nước đi có γ nhỏ hơn
    (bằng nhau thì chọn co u). `trace` là dãy γ của các trạng thái đã nhận, giảm chặt.
    Tensor hằng trả về (min, min + 1e-6).
    """
    _check_nonempty(x)
    check_bits(bits)
    x64 = np.asarray(x, dtype=np.float64)
    l, u = float(x64.min()), float(x64.max())
    if u <= l:
        u = l + MIN_WIDTH
        return ClipResult(l, u, fcmp(bits, l, u, measure, x64), [])
    if bits == PASSTHROUGH_BITS:
        return ClipResult(l, u, 0.0, [0.0])

    l0, u0 = l, u
    delta = (u0 - l0) / float(1 << bits)
    # (i, j): số bước Δ đã co ở l và ở u; độ rộng (2^b − i − j)·Δ luôn ≥ Δ
    i = j = 0
    best = fcmp(bits, l0, u0, measure, x64)
    trace = [best]
    while i + j < (1 << bits) - 1:
        score_l = fcmp(bits, l0 + (i + 1) * delta, u0 - j * delta, measure, x64)
        score_u = fcmp(bits, l0 + i * delta, u0 - (j + 1) * delta, measure, x64)
        if score_u <= score_l:
            candidate, move = score_u, (i, j + 1)
        else:
            candidate, move = score_l, (i + 1, j)
        if not candidate < best:
            break
        best = candidate
        i, j = move
        trace.append(best)
    return ClipResult(l0 + i * delta, u0 - j * delta, best, trace)


# Tên ngắn như trong mô tả thuật toán
adc = adaptive_dual_clip


def adaptive_dual_clip_per_channel(w: np.ndarray, bits: int,
                                   measure: MeasureType = MeasureType.FEATURE) -> Tuple[np.ndarray, np.ndarray]:
    """ADC độc lập cho từng kênh ra (trục 0) của trọng số"""
    results = [adaptive_dual_clip(w[c], bits, measure) for c in range(w.shape[0])]
    return (np.array([r.l for r in results], dtype=np.float64),
            np.array([r.u for r in results], dtype=np.float64))


def minmax_calibrate(x: np.ndarray) -> Tuple[float, float]:
    _check_nonempty(x)
    return float(np.min(x)), float(np.max(x))


def percentile_calibrate(x: np.ndarray, p: float = 0.999) -> Tuple[float, float]:
    """(quantile(1 − p), quantile(p)) với nội suy tuyến tính; p = 1 trùng MinMax"""
    _check_nonempty(x)
    if not 0.5 < p <= 1.0:
        raise QuantizationError(f"percentile phải nằm trong (0.5, 1], nhận {p}")
    lo, hi = np.quantile(np.asarray(x, dtype=np.float64), [1.0 - p, p])
    return float(lo), float(hi)
