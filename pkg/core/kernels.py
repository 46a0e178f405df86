"""
Kernel số học xác định (deterministic) trên layout N×C×H×W
- conv2d qua im2col (hỗ trợ groups, depth-wise)
- max_pool2d với padding -inf
- softmax, layer_norm, gelu (dạng erf chính xác)
- pixel_shuffle / pixel_unshuffle
"""

from typing import Optional, Tuple

import numpy as np
from scipy import special

from core.tensor import Tensor, TensorShapeError, check_shape


# --------------------------------------------------
# IM2COL
# --------------------------------------------------
def output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def pad_spatial(x: Tensor, padding: int, value: float = 0.0) -> Tensor:
    if padding == 0:
        return x
    width = [(0, 0)] * (x.ndim - 2) + [(padding, padding), (padding, padding)]
    return np.pad(x, width, mode='constant', constant_values=value)


def im2col(x: Tensor, kernel: int, stride: int = 1, padding: int = 0,
           pad_value: float = 0.0) -> Tensor:
    """Trả về cột (N, C, k, k, Ho, Wo) chứa mọi cửa sổ trượt"""
    n, c, h, w = x.shape
    ho = output_size(h, kernel, stride, padding)
    wo = output_size(w, kernel, stride, padding)
    if ho < 1 or wo < 1:
        raise TensorShapeError(
            f"kernel {kernel} lớn hơn input đã pad {(h + 2 * padding, w + 2 * padding)}"
        )
    xp = pad_spatial(x, padding, pad_value)
    cols = np.empty((n, c, kernel, kernel, ho, wo), dtype=x.dtype)
    for i in range(kernel):
        for j in range(kernel):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols


def col2im(cols: Tensor, input_shape: Tuple[int, ...], kernel: int,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cộng dồn các cột về ảnh gốc (phép liên hợp của im2col)"""
    n, c, h, w = input_shape
    ho, wo = cols.shape[-2:]
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    for i in range(kernel):
        for j in range(kernel):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return xp[:, :, padding:padding + h, padding:padding + w]


# --------------------------------------------------
# CONVOLUTION
# --------------------------------------------------
def _check_conv(x: Tensor, weight: Tensor, bias: Optional[Tensor], groups: int, padding: int):
    if x.ndim != 4 or weight.ndim != 4:
        raise TensorShapeError(
            f"conv2d cần input NCHW và weight OIkk, nhận {tuple(x.shape)} và {tuple(weight.shape)}"
        )
    out_ch, in_per_group, kh, kw = weight.shape
    if kh != kw:
        raise TensorShapeError(f"kernel phải vuông, weight {tuple(weight.shape)}")
    if groups < 1 or x.shape[1] % groups or out_ch % groups or x.shape[1] // groups != in_per_group:
        raise TensorShapeError(
            f"input {tuple(x.shape)} không khớp weight {tuple(weight.shape)} với groups={groups}"
        )
    if padding < 0:
        raise TensorShapeError(f"padding phải >= 0, nhận {padding}")
    if bias is not None and bias.shape != (out_ch,):
        raise TensorShapeError(f"bias {tuple(bias.shape)} không khớp weight {tuple(weight.shape)}")


def _is_depthwise(weight: Tensor, groups: int) -> bool:
    return groups > 1 and weight.shape[1] == 1 and weight.shape[0] == groups


def conv_from_cols(cols: Tensor, weight: Tensor, groups: int) -> Tensor:
    n, c, k, _, ho, wo = cols.shape
    out_ch = weight.shape[0]
    if groups == 1:
        out = np.tensordot(cols, weight, axes=([1, 2, 3], [1, 2, 3]))
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if _is_depthwise(weight, groups):
        return np.einsum('ncijhw,cij->nchw', cols, weight[:, 0])
    cg = c // groups
    cols_g = cols.reshape(n, groups, cg, k, k, ho, wo)
    w_g = weight.reshape(groups, out_ch // groups, cg, k, k)
    out = np.einsum('ngcijhw,gocij->ngohw', cols_g, w_g, optimize=True)
    return out.reshape(n, out_ch, ho, wo)


def conv_weight_grad(cols: Tensor, grad_out: Tensor, groups: int, weight_shape) -> Tensor:
    n, c, k, _, ho, wo = cols.shape
    out_ch = weight_shape[0]
    if groups == 1:
        return np.tensordot(grad_out, cols, axes=([0, 2, 3], [0, 4, 5]))
    if out_ch == groups and weight_shape[1] == 1:
        return np.einsum('nchw,ncijhw->cij', grad_out, cols)[:, None]
    cg = c // groups
    cols_g = cols.reshape(n, groups, cg, k, k, ho, wo)
    g_g = grad_out.reshape(n, groups, out_ch // groups, ho, wo)
    gw = np.einsum('ngohw,ngcijhw->gocij', g_g, cols_g, optimize=True)
    return gw.reshape(weight_shape)


def conv_cols_grad(grad_out: Tensor, weight: Tensor, groups: int) -> Tensor:
    n, out_ch, ho, wo = grad_out.shape
    _, cg, k, _ = weight.shape
    if groups == 1:
        gcols = np.tensordot(grad_out, weight, axes=([1], [0]))
        return np.ascontiguousarray(gcols.transpose(0, 3, 4, 5, 1, 2))
    if _is_depthwise(weight, groups):
        return grad_out[:, :, None, None] * weight[:, 0][None, :, :, :, None, None]
    g_g = grad_out.reshape(n, groups, out_ch // groups, ho, wo)
    w_g = weight.reshape(groups, out_ch // groups, cg, k, k)
    gcols = np.einsum('ngohw,gocij->ngcijhw', g_g, w_g, optimize=True)
    return gcols.reshape(n, groups * cg, k, k, ho, wo)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """Tích chập 2-D nhóm; kích thước ra = floor((H + 2p - k)/s) + 1"""
    _check_conv(x, weight, bias, groups, padding)
    cols = im2col(x, weight.shape[-1], stride, padding)
    out = conv_from_cols(cols, weight, groups)
    if bias is not None:
        out = out + bias[None, :, None, None]
    return out.astype(x.dtype, copy=False)


# --------------------------------------------------
# POOLING
# --------------------------------------------------
def max_pool2d_with_indices(x: Tensor, kernel: int, stride: int = 1,
                            padding: int = 0) -> Tuple[Tensor, Tensor]:
    if kernel < 1:
        raise TensorShapeError(f"kernel phải >= 1, nhận {kernel}")
    check_shape(x, 4, "max_pool2d input")
    cols = im2col(x, kernel, stride, padding, pad_value=-np.inf)
    n, c, _, _, ho, wo = cols.shape
    flat = cols.reshape(n, c, kernel * kernel, ho, wo)
    idx = np.argmax(flat, axis=2)
    out = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]
    return out, idx


def max_pool2d(x: Tensor, kernel: int, stride: int = 1, padding: int = 0) -> Tensor:
    return max_pool2d_with_indices(x, kernel, stride, padding)[0]


# --------------------------------------------------
# NORMALIZATION / ACTIVATION
# --------------------------------------------------
def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def _param_shape(x: Tensor, axis: int) -> tuple:
    shape = [1] * x.ndim
    shape[axis] = x.shape[axis]
    return tuple(shape)


def normalize(x: Tensor, eps: float, axis: int) -> Tuple[Tensor, Tensor]:
    """Trả về (x_hat, 1/std) chuẩn hóa theo một trục"""
    mean = np.mean(x, axis=axis, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=axis, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    return centered * inv_std, inv_std


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5, axis: int = 1) -> Tensor:
    """LayerNorm theo trục kênh tại mỗi vị trí không gian (token-wise)"""
    axis = axis % x.ndim
    if gamma.shape != (x.shape[axis],) or beta.shape != (x.shape[axis],):
        raise TensorShapeError(
            f"gamma {tuple(gamma.shape)} / beta {tuple(beta.shape)} không khớp trục {axis} của {tuple(x.shape)}"
        )
    x_hat, _ = normalize(x, eps, axis)
    shape = _param_shape(x, axis)
    return x_hat * gamma.reshape(shape) + beta.reshape(shape)


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    return (0.5 * x * (1.0 + special.erf(x * _INV_SQRT2))).astype(x.dtype, copy=False)


def gelu_grad(x: Tensor) -> Tensor:
    cdf = 0.5 * (1.0 + special.erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return (cdf + x * pdf).astype(x.dtype, copy=False)


# --------------------------------------------------
# PIXEL SHUFFLE
# --------------------------------------------------
def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """N×(C·r²)×H×W → N×C×(rH)×(rW); kênh c·r²+i·r+j rơi vào vị trí (h·r+i, w·r+j)"""
    n, c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise TensorShapeError(f"số kênh {c} không chia hết cho r²={r * r}")
    out = x.reshape(n, c // (r * r), r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(out.reshape(n, c // (r * r), h * r, w * r))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    n, c, h, w = x.shape
    if r < 1 or h % r or w % r:
        raise TensorShapeError(f"kích thước {(h, w)} không chia hết cho r={r}")
    out = x.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(out.reshape(n, c * r * r, h // r, w // r))
