"""
Straight-through estimator cho bộ lượng tử hóa giả.
Backward dùng zero-point liên tục zp = −l/s, forward giữ zero-point đã làm tròn.
"""

from typing import Tuple

import numpy as np

from core.tensor import Tensor
from autograd.functional import _make, unbroadcast
from autograd.tape import Var, as_var
from quant.quantizer import PASSTHROUGH_BITS, check_bounds, fake_quantize_array, levels


def ste_quantizer_grads(x: Tensor, l, u, bits: int) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Đạo hàm cục bộ (dx, dl, du) của x̂ theo từng phần tử, với s = (u−l)/n, q = (x−l)/s:
      trong khoảng (0 ≤ q ≤ n): dx = 1, dl = (q − ⌊q⌉)/n, du = (⌊q⌉ − q)/n
      kẹp dưới (q < 0): dl = 1;  kẹp trên (q > n): du = 1
    """
    check_bounds(l, u)
    n = levels(bits)
    x64 = np.asarray(x, dtype=np.float64)
    l64 = np.asarray(l, dtype=np.float64)
    u64 = np.asarray(u, dtype=np.float64)
    s = (u64 - l64) / n
    q = (x64 - l64) / s
    low = q < 0
    high = q > n
    inside = ~(low | high)
    residual = (q - np.rint(q)) / n
    dx = inside.astype(np.float64)
    dl = np.where(inside, residual, 0.0) + low
    du = np.where(inside, -residual, 0.0) + high
    return dx, dl, du


def fake_quantize_ste(x, l: Var, u: Var, bits: int) -> Var:
    """x̂ khả vi theo x, l, u (l, u có thể broadcast theo kênh)"""
    x, l, u = as_var(x), as_var(l), as_var(u)
    if bits == PASSTHROUGH_BITS:
        return x
    out = fake_quantize_array(x.value, l.value, u.value, bits)

    def backward(g):
        dx, dl, du = ste_quantizer_grads(x.value, l.value, u.value, bits)
        g64 = g.astype(np.float64)
        return ((g64 * dx).astype(x.dtype),
                unbroadcast(g64 * dl, l.shape).astype(l.dtype),
                unbroadcast(g64 * du, u.shape).astype(u.dtype))

    return _make(out, (x, l, u), backward, 'fake_quantize')
