"""
Vật chứa tensor dùng chung cho mọi kernel số học
- Layout ảnh chuẩn N×C×H×W
- Lưu trữ mặc định float32; float64 được giữ nguyên (phục vụ gradient check)
"""

from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

Tensor = np.ndarray

FLOAT_DTYPES = (np.float32, np.float64)


class TensorShapeError(ValueError):
    """Lỗi shape / extent không hợp lệ của tensor"""
    pass


def as_tensor(data: Any, dtype: Optional[np.dtype] = None) -> Tensor:
    """Chuyển dữ liệu thành mảng liên tục; dtype thực không hợp lệ được ép về float32"""
    arr = np.asarray(data)
    if dtype is not None:
        return np.ascontiguousarray(arr, dtype=dtype)
    if arr.dtype.type in FLOAT_DTYPES:
        return np.ascontiguousarray(arr)
    return np.ascontiguousarray(arr, dtype=np.float32)


def check_shape(x: Tensor, ndim: Optional[int] = None, name: str = "tensor") -> Tensor:
    """Kiểm tra số chiều và extent >= 1"""
    if ndim is not None and x.ndim != ndim:
        raise TensorShapeError(f"{name} cần {ndim} chiều, nhận shape {tuple(x.shape)}")
    if any(extent < 1 for extent in x.shape):
        raise TensorShapeError(f"{name} có extent rỗng: {tuple(x.shape)}")
    return x


def check_finite(x: Tensor, name: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(x)):
        raise TensorShapeError(f"{name} chứa NaN/Inf")
    return x


def spatial_dims(shape: Sequence[int]) -> tuple:
    return int(shape[-2]), int(shape[-1])


@dataclass(frozen=True)
class ComplexGrid:
    """Phổ phức H×W tách thành hai mặt phẳng thực (re, im)"""
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise TensorShapeError(
                f"re {tuple(self.re.shape)} và im {tuple(self.im.shape)} phải cùng shape"
            )

    @classmethod
    def from_complex(cls, z: np.ndarray, dtype=np.float32) -> 'ComplexGrid':
        return cls(re=np.ascontiguousarray(z.real, dtype=dtype),
                   im=np.ascontiguousarray(z.imag, dtype=dtype))

    @property
    def shape(self) -> tuple:
        return tuple(self.re.shape)

    def to_complex(self) -> np.ndarray:
        return self.re.astype(np.float64) + 1j * self.im.astype(np.float64)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.re, self.im)
