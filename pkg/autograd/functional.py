"""
Các op khả vi trên Var
Mỗi op tính forward bằng kernel của core và ghi vào tape đang hoạt động
(nếu có input cần grad) cùng hàm backward tương ứng.
"""

from typing import Optional, Sequence

import numpy as np

from core import kernels
from core.tensor import Tensor, TensorShapeError
from autograd.tape import Var, as_var, current_tape


# --------------------------------------------------
# PLUMBING
# --------------------------------------------------
def _lift(x, like: Var) -> Var:
    if isinstance(x, Var):
        return x
    arr = np.asarray(x)
    if arr.ndim == 0 or not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(like.dtype)
    return Var(arr)


def _pair(a, b):
    if isinstance(a, Var):
        return a, _lift(b, a)
    b = as_var(b)
    return _lift(a, b), b


def _make(value: Tensor, inputs: Sequence[Var], backward, op: str) -> Var:
    out = Var(value)
    tape = current_tape()
    if tape is not None and any(v.requires_grad for v in inputs):
        out.requires_grad = True
        tape.record(out, tuple(inputs), backward, op)
    return out


def unbroadcast(g: Tensor, shape: tuple) -> Tensor:
    """Cộng dồn grad về shape gốc trước broadcast"""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --------------------------------------------------
# ELEMENTWISE
# --------------------------------------------------
def add(a, b) -> Var:
    a, b = _pair(a, b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _make(a.value + b.value, (a, b), backward, 'add')


def sub(a, b) -> Var:
    a, b = _pair(a, b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _make(a.value - b.value, (a, b), backward, 'sub')


def mul(a, b) -> Var:
    a, b = _pair(a, b)

    def backward(g):
        return unbroadcast(g * b.value, a.shape), unbroadcast(g * a.value, b.shape)

    return _make(a.value * b.value, (a, b), backward, 'mul')


def div(a, b) -> Var:
    a, b = _pair(a, b)

    def backward(g):
        ga = g / b.value
        gb = -g * a.value / (b.value * b.value)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return _make(a.value / b.value, (a, b), backward, 'div')


def neg(a) -> Var:
    a = as_var(a)
    return _make(-a.value, (a,), lambda g: (-g,), 'neg')


def abs(a) -> Var:  # noqa: A001
    a = as_var(a)
    return _make(np.abs(a.value), (a,), lambda g: (g * np.sign(a.value),), 'abs')


def exp(a) -> Var:
    a = as_var(a)
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,), 'exp')


def gelu(a) -> Var:
    a = as_var(a)
    return _make(kernels.gelu(a.value), (a,), lambda g: (g * kernels.gelu_grad(a.value),), 'gelu')


# --------------------------------------------------
# REDUCTION
# --------------------------------------------------
def sum(a, axis=None, keepdims: bool = False) -> Var:  # noqa: A001
    a = as_var(a)
    out = np.sum(a.value, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return _make(np.asarray(out, dtype=a.dtype), (a,), backward, 'sum')


def mean(a, axis=None, keepdims: bool = False) -> Var:
    a = as_var(a)
    if axis is None:
        count = a.value.size
    else:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# --------------------------------------------------
# LINEAR ALGEBRA
# --------------------------------------------------
def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
        gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return _make(np.matmul(a.value, b.value), (a, b), backward, 'matmul')


def l2_normalize(a, axis: int = -1, eps: float = 1e-12) -> Var:
    """x / max(||x||₂, eps) theo một trục"""
    a = as_var(a)
    norm = np.sqrt(np.sum(a.value * a.value, axis=axis, keepdims=True))
    denom = np.maximum(norm, eps)
    out = a.value / denom

    def backward(g):
        proj = np.sum(g * out, axis=axis, keepdims=True)
        active = (norm > eps).astype(a.dtype)
        return ((g - active * out * proj) / denom,)

    return _make(out, (a,), backward, 'l2_normalize')


# --------------------------------------------------
# SHAPE
# --------------------------------------------------
def reshape(a, shape) -> Var:
    a = as_var(a)
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), 'reshape')


def transpose(a, axes: Sequence[int]) -> Var:
    a = as_var(a)
    inverse = np.argsort(axes)
    out = np.ascontiguousarray(np.transpose(a.value, axes))
    return _make(out, (a,), lambda g: (np.transpose(g, inverse),), 'transpose')


def swap_last(a) -> Var:
    axes = list(range(as_var(a).ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def concat(items: Sequence, axis: int) -> Var:
    items = [as_var(v) for v in items]
    sizes = [v.shape[axis] for v in items]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(items)))

    return _make(np.concatenate([v.value for v in items], axis=axis), items, backward, 'concat')


def slice_axis(a, start: int, stop: int, axis: int) -> Var:
    a = as_var(a)
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(a.value)
        full[index] = g
        return (full,)

    return _make(np.ascontiguousarray(a.value[index]), (a,), backward, 'slice')


def split(a, sections: int, axis: int) -> list:
    a = as_var(a)
    size = a.shape[axis]
    if size % sections:
        raise TensorShapeError(f"trục {axis} dài {size} không chia đều cho {sections}")
    step = size // sections
    return [slice_axis(a, i * step, (i + 1) * step, axis) for i in range(sections)]


def gather(a, index: np.ndarray, axis: int) -> Var:
    """np.take khả vi với index 1-D; backward cộng dồn grad về các vị trí được lấy"""
    a = as_var(a)
    index = np.asarray(index, dtype=np.int64).ravel()

    def backward(g):
        full = np.zeros_like(np.moveaxis(a.value, axis, 0))
        np.add.at(full, index, np.moveaxis(g, axis, 0))
        return (np.moveaxis(full, 0, axis),)

    return _make(np.take(a.value, index, axis=axis), (a,), backward, 'gather')


def roll(a, shifts: Sequence[int], axes: Sequence[int]) -> Var:
    a = as_var(a)
    back = tuple(-s for s in shifts)
    return _make(np.roll(a.value, shifts, axis=axes), (a,),
                 lambda g: (np.roll(g, back, axis=axes),), 'roll')


def reflect_pad(a, pad_h: int, pad_w: int) -> Var:
    """Pad phản xạ ở cạnh dưới/phải (chỉ số gather nên backward tự cộng dồn)"""
    a = as_var(a)
    if pad_h == 0 and pad_w == 0:
        return a
    h, w = a.shape[-2:]
    if pad_h >= h or pad_w >= w:
        raise TensorShapeError(f"pad phản xạ {(pad_h, pad_w)} phải nhỏ hơn ảnh {(h, w)}")
    rows = np.pad(np.arange(h), (0, pad_h), mode='reflect')
    cols = np.pad(np.arange(w), (0, pad_w), mode='reflect')
    out = gather(a, rows, axis=a.ndim - 2) if pad_h else a
    return gather(out, cols, axis=a.ndim - 1) if pad_w else out


def crop(a, h: int, w: int) -> Var:
    a = as_var(a)
    if a.shape[-2:] == (h, w):
        return a
    return slice_axis(slice_axis(a, 0, h, a.ndim - 2), 0, w, a.ndim - 1)


def pixel_shuffle(a, r: int) -> Var:
    a = as_var(a)
    return _make(kernels.pixel_shuffle(a.value, r), (a,),
                 lambda g: (kernels.pixel_unshuffle(g, r),), 'pixel_shuffle')


# --------------------------------------------------
# NEURAL OPS
# --------------------------------------------------
def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0, groups: int = 1) -> Var:
    x, weight = as_var(x), as_var(weight)
    bias = as_var(bias) if bias is not None else None
    kernels._check_conv(x.value, weight.value, None if bias is None else bias.value, groups, padding)
    k = weight.shape[-1]
    cols = kernels.im2col(x.value, k, stride, padding)
    out = kernels.conv_from_cols(cols, weight.value, groups)
    if bias is not None:
        out = out + bias.value[None, :, None, None]
    out = out.astype(x.dtype, copy=False)

    def backward(g):
        gw = kernels.conv_weight_grad(cols, g, groups, weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = kernels.conv_cols_grad(g, weight.value, groups)
            gx = kernels.col2im(gcols, x.shape, k, stride, padding)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, inputs, backward, 'conv2d')


def max_pool2d(x, kernel: int, stride: int = 1, padding: int = 0) -> Var:
    x = as_var(x)
    out, idx = kernels.max_pool2d_with_indices(x.value, kernel, stride, padding)

    def backward(g):
        n, c, ho, wo = g.shape
        gcols = np.zeros((n, c, kernel * kernel, ho, wo), dtype=g.dtype)
        np.put_along_axis(gcols, idx[:, :, None], g[:, :, None], axis=2)
        gcols = gcols.reshape(n, c, kernel, kernel, ho, wo)
        return (kernels.col2im(gcols, x.shape, kernel, stride, padding),)

    return _make(out, (x,), backward, 'max_pool2d')


def softmax(x, axis: int = -1) -> Var:
    x = as_var(x)
    out = kernels.softmax(x.value, axis)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _make(out, (x,), backward, 'softmax')


def layer_norm(x, gamma, beta, eps: float = 1e-5, axis: int = 1) -> Var:
    x, gamma, beta = as_var(x), as_var(gamma), as_var(beta)
    axis = axis % x.ndim
    x_hat, inv_std = kernels.normalize(x.value, eps, axis)
    shape = [1] * x.ndim
    shape[axis] = x.shape[axis]
    g_view = gamma.value.reshape(shape)
    out = x_hat * g_view + beta.value.reshape(shape)
    others = tuple(i for i in range(x.ndim) if i != axis)

    def backward(g):
        d_hat = g * g_view
        gx = inv_std * (d_hat
                        - np.mean(d_hat, axis=axis, keepdims=True)
                        - x_hat * np.mean(d_hat * x_hat, axis=axis, keepdims=True))
        return gx, np.sum(g * x_hat, axis=others), np.sum(g, axis=others)

    return _make(out.astype(x.dtype, copy=False), (x, gamma, beta), backward, 'layer_norm')


def l1_loss(pred, target) -> Var:
    """(1/N)·Σ_i ||pred_i − target_i||₁ với N là kích thước batch"""
    pred = as_var(pred)
    batch = pred.shape[0]
    return mul(sum(abs(sub(pred, target))), 1.0 / batch)
