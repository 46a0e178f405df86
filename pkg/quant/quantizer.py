"""
Lượng tử hóa giả (quantize → dequantize) trên số thực
    scale = (u − l) / (2^b − 1)
    zp    = clip(round(−l / scale), 0, 2^b − 1)
    x̂     = scale · (clip(round(x / scale) + zp, 0, 2^b − 1) − zp)
round là half-to-even (np.rint) ở mọi chỗ.
Bit-width PASSTHROUGH_BITS (32) nghĩa là không lượng tử hóa.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from core.tensor import Tensor

PASSTHROUGH_BITS = 32
SUPPORTED_BITS = (4, 6, 8)

Bound = Union[float, np.ndarray]


class QuantizationError(ValueError):
    """Lỗi tùy chỉnh cho quant-engine"""
    pass


def levels(bits: int) -> int:
    return (1 << bits) - 1


def check_bits(bits: int):
    if bits != PASSTHROUGH_BITS and not 1 <= bits <= 16:
        raise QuantizationError(f"bit-width {bits} không được hỗ trợ")


def check_bounds(l: Bound, u: Bound):
    if np.any(np.asarray(u, dtype=np.float64) <= np.asarray(l, dtype=np.float64)):
        raise QuantizationError(f"cần u > l, nhận l={l}, u={u}")


def compute_scale_zp(l: Bound, u: Bound, bits: int) -> Tuple[Bound, Bound]:
    """Trả về (scale, zero_point); hoạt động phần tử với l, u dạng mảng"""
    check_bits(bits)
    check_bounds(l, u)
    n = levels(bits)
    l64 = np.asarray(l, dtype=np.float64)
    u64 = np.asarray(u, dtype=np.float64)
    scale = (u64 - l64) / n
    zero_point = np.clip(np.rint(-l64 / scale), 0, n)
    if scale.ndim == 0:
        return float(scale), float(zero_point)
    return scale, zero_point


def fake_quantize_array(x: Tensor, l: Bound, u: Bound, bits: int) -> Tensor:
    """x̂ theo công thức ở đầu module; dtype đầu ra giữ theo x"""
    if bits == PASSTHROUGH_BITS:
        return x
    scale, zp = compute_scale_zp(l, u, bits)
    n = levels(bits)
    q = np.clip(np.rint(x.astype(np.float64) / scale) + zp, 0, n)
    return (scale * (q - zp)).astype(x.dtype, copy=False)


@dataclass
class QuantParams:
    """Bộ (l, u, b) của một site; scale / zero_point được suy ra"""
    l: Bound
    u: Bound
    bits: int = 8

    def __post_init__(self):
        check_bits(self.bits)
        if self.bits != PASSTHROUGH_BITS:
            check_bounds(self.l, self.u)

    @property
    def passthrough(self) -> bool:
        return self.bits == PASSTHROUGH_BITS

    @property
    def scale(self) -> Bound:
        return compute_scale_zp(self.l, self.u, self.bits)[0]

    @property
    def zero_point(self) -> Bound:
        return compute_scale_zp(self.l, self.u, self.bits)[1]


def fake_quantize(x: Tensor, qp: QuantParams) -> Tensor:
    return fake_quantize_array(x, qp.l, qp.u, qp.bits)
