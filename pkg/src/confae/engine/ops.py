"""Differentiable operations.

The op set is intentionally small: exactly what a strided conv autoencoder,
a linear projection head, and correlation-style losses need. Elementwise ops
broadcast numpy-style; their backward sums gradient over broadcast axes.
"""

from __future__ import annotations

import numpy as np

from confae.engine import kernels
from confae.engine.tensor import Tensor, make_result


def _as_tensor(v, like: Tensor) -> Tensor:
    if isinstance(v, Tensor):
        return v
    return Tensor(np.asarray(v, dtype=like.data.dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- arithmetic --------------------------------------------------------------

def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _as_tensor(a, b)
    b = _as_tensor(b, a)
    out = a.data + b.data
    return make_result(out, (a, b), (lambda g: _unbroadcast(g, a.data.shape),
                                     lambda g: _unbroadcast(g, b.data.shape)))


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _as_tensor(a, b)
    b = _as_tensor(b, a)
    out = a.data - b.data
    return make_result(out, (a, b), (lambda g: _unbroadcast(g, a.data.shape),
                                     lambda g: _unbroadcast(-g, b.data.shape)))


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _as_tensor(a, b)
    b = _as_tensor(b, a)
    out = a.data * b.data
    return make_result(out, (a, b), (lambda g: _unbroadcast(g * b.data, a.data.shape),
                                     lambda g: _unbroadcast(g * a.data, b.data.shape)))


def div(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _as_tensor(a, b)
    b = _as_tensor(b, a)
    out = a.data / b.data
    return make_result(out, (a, b),
                       (lambda g: _unbroadcast(g / b.data, a.data.shape),
                        lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)))


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), (lambda g: -g,))


def abs_(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return make_result(np.abs(a.data), (a,), (lambda g: g * sign,))


def square(a: Tensor) -> Tensor:
    return make_result(a.data * a.data, (a,), (lambda g: g * (2.0 * a.data),))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return make_result(out, (a,), (lambda g: g * (0.5 / out),))


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims, dtype=a.data.dtype)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.data.shape) / a.data.dtype.type(count)

    return make_result(np.asarray(out, dtype=a.data.dtype), (a,), (grad_fn,))


# -- shape -------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.data.shape
    return make_result(a.data.reshape(shape), (a,), (lambda g: g.reshape(old),))


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_result(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                       (lambda g: np.ascontiguousarray(g.transpose(inv)),))


def crop2d(a: Tensor, height: int, width: int) -> Tensor:
    """Keep the top-left `height` x `width` window of the last two axes."""
    if height > a.data.shape[-2] or width > a.data.shape[-1]:
        raise ValueError("crop larger than input")
    out = np.ascontiguousarray(a.data[..., :height, :width])

    def grad_fn(g):
        full = np.zeros_like(a.data)
        full[..., :height, :width] = g
        return full

    return make_result(out, (a,), (grad_fn,))


# -- activations -------------------------------------------------------------

def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    pos = a.data >= 0
    factor = np.where(pos, a.data.dtype.type(1.0), a.data.dtype.type(slope))
    return make_result(a.data * factor, (a,), (lambda g: g * factor,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return make_result(out, (a,), (lambda g: g * (out * (1.0 - out)),))


# -- linear algebra ----------------------------------------------------------

def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """out[n, k] = sum_d x[n, d] w[d, k] (+ b[k])."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ValueError(f"dense shape mismatch: x {x.data.shape} vs w {w.data.shape}")
    out = x.data @ w.data
    if b is not None:
        if b.data.shape != (w.data.shape[1],):
            raise ValueError(f"dense bias shape {b.data.shape} != ({w.data.shape[1]},)")
        out = out + b.data
        return make_result(out, (x, w, b), (lambda g: g @ w.data.T,
                                            lambda g: x.data.T @ g,
                                            lambda g: g.sum(axis=0)))
    return make_result(out, (x, w), (lambda g: g @ w.data.T,
                                     lambda g: x.data.T @ g))


# -- convolution -------------------------------------------------------------

def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of NCHW input with FCkk kernels."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError("conv2d expects 4-d input and kernel")
    n, c, h, wd = x.data.shape
    f, cw, kh, kw = w.data.shape
    if cw != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, kernel expects {cw}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if kh > h + 2 * padding or kw > wd + 2 * padding:
        raise ValueError(f"kernel {kh}x{kw} larger than padded input "
                         f"{h + 2 * padding}x{wd + 2 * padding}")
    out = kernels.conv2d_forward(x.data, w.data, stride, padding)
    return make_result(
        out, (x, w),
        (lambda g: kernels.conv2d_backward_input(g, w.data, stride, padding, (h, wd)),
         lambda g: kernels.conv2d_backward_weight(x.data, g, stride, padding, kh, kw)))


def conv_transpose2d(x: Tensor, w: Tensor, stride: int = 2, padding: int = 1,
                     output_padding: int = 1) -> Tensor:
    """Transposed convolution (stride-s upsampling); kernel layout (Cin, Cout, kh, kw)."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError("conv_transpose2d expects 4-d input and kernel")
    n, cin, h, wd = x.data.shape
    cw, cout, kh, kw = w.data.shape
    if cw != cin:
        raise ValueError(f"conv_transpose2d channel mismatch: input has {cin}, kernel expects {cw}")
    out_h = (h - 1) * stride - 2 * padding + kh + output_padding
    out_w = (wd - 1) * stride - 2 * padding + kw + output_padding
    # The forward map must be the exact adjoint of the matching conv2d.
    if (out_h + 2 * padding - kh) // stride + 1 != h or \
       (out_w + 2 * padding - kw) // stride + 1 != wd:
        raise ValueError("incompatible stride/padding/output_padding for transposed conv")
    out = kernels.conv2d_backward_input(x.data, w.data, stride, padding, (out_h, out_w))
    return make_result(
        out, (x, w),
        (lambda g: kernels.conv2d_forward(g, w.data, stride, padding),
         lambda g: kernels.conv2d_backward_weight(g, x.data, stride, padding, kh, kw)))


# -- fused conv blocks ---------------------------------------------------------

_ACT_CODES = {"none": kernels.ACT_NONE, "leaky": kernels.ACT_LEAKY,
              "sigmoid": kernels.ACT_SIGMOID}


def _shared(fn):
    """Memoize a per-backward computation shared by several grad_fns.

    All grad_fns of one node receive the same upstream array within one
    backward call; holding the array itself keys the cache safely.
    """
    cache: dict = {}

    def wrapped(g):
        if cache.get("g") is not g:
            cache["g"] = g
            cache["value"] = fn(g)
        return cache["value"]

    return wrapped


def conv2d_block(x: Tensor, w: Tensor, b: Tensor, stride: int = 2, padding: int = 1,
                 act: str = "leaky", slope: float = 0.2) -> Tensor:
    """conv2d + bias + activation, forward and backward each one fused call."""
    code = _ACT_CODES[act]
    n, c, h, wd = x.data.shape
    f, cw, kh, kw = w.data.shape
    if cw != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, kernel expects {cw}")
    out, cols = kernels.conv_block_forward(x.data, w.data, b.data, stride, padding,
                                           code, slope)
    grads = _shared(lambda g: kernels.conv_block_backward(
        g, out, cols, w.data, stride, padding, (h, wd), code, slope))
    return make_result(out, (x, w, b), (lambda g: grads(g)[0],
                                        lambda g: grads(g)[1],
                                        lambda g: grads(g)[2]))


def conv_transpose2d_block(x: Tensor, w: Tensor, b: Tensor, stride: int = 2,
                           padding: int = 1, output_padding: int = 1,
                           act: str = "leaky", slope: float = 0.2) -> Tensor:
    """Transposed conv + bias + activation, fused forward and backward."""
    code = _ACT_CODES[act]
    n, cin, h, wd = x.data.shape
    cw, cout, kh, kw = w.data.shape
    if cw != cin:
        raise ValueError(f"conv_transpose2d channel mismatch: input has {cin}, "
                         f"kernel expects {cw}")
    out_h = (h - 1) * stride - 2 * padding + kh + output_padding
    out_w = (wd - 1) * stride - 2 * padding + kw + output_padding
    if (out_h + 2 * padding - kh) // stride + 1 != h or \
       (out_w + 2 * padding - kw) // stride + 1 != wd:
        raise ValueError("incompatible stride/padding/output_padding for transposed conv")
    out = kernels.tconv_block_forward(x.data, w.data, b.data, stride, padding,
                                      output_padding, code, slope)
    grads = _shared(lambda g: kernels.tconv_block_backward(
        g, out, x.data, w.data, stride, padding, code, slope))
    return make_result(out, (x, w, b), (lambda g: grads(g)[0],
                                        lambda g: grads(g)[1],
                                        lambda g: grads(g)[2]))


# -- operator sugar on Tensor -------------------------------------------------

Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = neg
Tensor.reshape = reshape
Tensor.mean = mean
