"""
Vi phân ngược (reverse-mode) tối giản
- Var: giá trị + cờ requires_grad
- Parameter: Var có grad cùng shape, cờ trainable
- Tape: ghi lại các op theo thứ tự, backward duyệt ngược mỗi op đúng một lần
"""

import contextvars
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

_ACTIVE_TAPE: contextvars.ContextVar = contextvars.ContextVar('active_tape', default=None)


class AutogradError(ValueError):
    """Lỗi tùy chỉnh cho autograd"""
    pass


class Var:
    """Nút trong đồ thị tính toán"""
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None):
        self.value = as_tensor(value)
        self.requires_grad = requires_grad
        self.grad: Optional[Tensor] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def numpy(self) -> Tensor:
        return self.value

    def __repr__(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"Var{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # ---------------- toán tử ----------------
    def __add__(self, other):
        from autograd import functional as F
        return F.add(self, other)

    def __radd__(self, other):
        from autograd import functional as F
        return F.add(other, self)

    def __sub__(self, other):
        from autograd import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from autograd import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from autograd import functional as F
        return F.mul(self, other)

    def __rmul__(self, other):
        from autograd import functional as F
        return F.mul(other, self)

    def __truediv__(self, other):
        from autograd import functional as F
        return F.div(self, other)

    def __neg__(self):
        from autograd import functional as F
        return F.neg(self)

    def __matmul__(self, other):
        from autograd import functional as F
        return F.matmul(self, other)


class Parameter(Var):
    """Tham số học được; grad luôn tồn tại và cùng shape với value"""

    def __init__(self, value, trainable: bool = True, name: Optional[str] = None):
        super().__init__(value, requires_grad=trainable, name=name)
        self.grad = np.zeros_like(self.value)

    @property
    def trainable(self) -> bool:
        return self.requires_grad

    @trainable.setter
    def trainable(self, flag: bool):
        self.requires_grad = bool(flag)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


BackwardFn = Callable[[Tensor], Sequence[Optional[Tensor]]]


@dataclass
class Record:
    output: Var
    inputs: Tuple[Var, ...]
    backward: BackwardFn
    op: str


class Tape:
    """Băng ghi op; một Tape chỉ dùng trong một luồng"""

    def __init__(self):
        self.records: List[Record] = []
        self._token = None

    def __enter__(self) -> 'Tape':
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False

    def __len__(self) -> int:
        return len(self.records)

    def record(self, output: Var, inputs: Tuple[Var, ...], backward: BackwardFn, op: str):
        self.records.append(Record(output, inputs, backward, op))

    def backward(self, loss: Var, params: Optional[Iterable[Parameter]] = None) -> Dict[int, Tensor]:
        """
        Lan truyền ngược từ loss vô hướng.
        Parameter/Var lá nằm trên tape nhận grad = ∂loss/∂value (ghi đè);
        Parameter trong `params` không nằm trên tape nhận grad 0.
        """
        if loss.value.size != 1:
            raise AutogradError(f"loss phải là vô hướng, nhận shape {tuple(loss.shape)}")

        grads: Dict[int, Tensor] = {id(loss): np.ones_like(loss.value)}
        produced = {id(rec.output) for rec in self.records}
        leaves: Dict[int, Var] = {}

        for rec in reversed(self.records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            input_grads = rec.backward(g)
            for var, gi in zip(rec.inputs, input_grads):
                if gi is None or not var.requires_grad:
                    continue
                key = id(var)
                if key not in produced:
                    leaves[key] = var
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = np.array(gi, dtype=var.value.dtype, copy=True)

        if id(loss) not in produced and loss.requires_grad:
            leaves[id(loss)] = loss

        for key, var in leaves.items():
            var.grad = grads.get(key, np.zeros_like(var.value)).reshape(var.value.shape)

        for p in params or ():
            if id(p) not in leaves:
                p.grad = np.zeros_like(p.value)

        return {key: var.grad for key, var in leaves.items()}


def current_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE.get()


@contextmanager
def no_grad():
    """Tạm tắt ghi tape trong khối lệnh"""
    token = _ACTIVE_TAPE.set(None)
    try:
        yield
    finally:
        _ACTIVE_TAPE.reset(token)


def backward(loss: Var, tape: Optional[Tape] = None, params: Optional[Iterable[Parameter]] = None):
    """Gọi backward trên tape đang hoạt động (hoặc tape truyền vào)"""
    tape = tape or current_tape()
    if tape is None:
        if loss.value.size != 1:
            raise AutogradError(f"loss phải là vô hướng, nhận shape {tuple(loss.shape)}")
        for p in params or ():
            p.grad = np.zeros_like(p.value)
        return {}
    return tape.backward(loss, params)
