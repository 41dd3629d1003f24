"""Pure-numpy convolution kernels (reference / fallback backend).

Convolutions are lowered to im2col gathers plus one BLAS matmul per call.
Bias and the block activation (leaky-ReLU / sigmoid) are applied in the same
call to mirror the fused numba backend. These implementations are
dtype-generic (float32 for training, float64 for the gradient-check shadow
path) and keep a fixed summation order, so results are reproducible run to
run.
"""

from __future__ import annotations

import numpy as np

ACT_NONE = 0
ACT_LEAKY = 1
ACT_SIGMOID = 2


def _apply_act(z: np.ndarray, act: int, slope: float) -> np.ndarray:
    if act == ACT_LEAKY:
        return np.where(z >= 0, z, z.dtype.type(slope) * z)
    if act == ACT_SIGMOID:
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def act_grad(out: np.ndarray, g: np.ndarray, act: int, slope: float = 0.2) -> np.ndarray:
    """Gradient through the fused activation, computed from the activated output."""
    if act == ACT_LEAKY:
        return np.where(out >= 0, g, g.dtype.type(slope) * g)
    if act == ACT_SIGMOID:
        return g * (out * (1.0 - out))
    return g.copy()


def _pad_input(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Gather sliding windows of `xp` into shape (N, C, kh, kw, out_h, out_w)."""
    n, c, _, _ = xp.shape
    cols = np.empty((n, c, kh, kw, out_h, out_w), dtype=xp.dtype)
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, ki, kj] = xp[:, :, ki:ki + stride * out_h:stride,
                                    kj:kj + stride * out_w:stride]
    return cols


def conv2d_forward(x: np.ndarray, w: np.ndarray, stride: int, padding: int,
                   bias: np.ndarray | None = None, act: int = ACT_NONE,
                   slope: float = 0.2) -> np.ndarray:
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (wd + 2 * padding - kw) // stride + 1
    xp = _pad_input(x, padding)
    cols = _im2col(xp, kh, kw, stride, out_h, out_w)
    ck = c * kh * kw
    lhs = cols.reshape(n, ck, out_h * out_w).transpose(0, 2, 1).reshape(n * out_h * out_w, ck)
    out = lhs @ w.reshape(f, ck).T
    out = out.reshape(n, out_h * out_w, f).transpose(0, 2, 1)
    out = np.ascontiguousarray(out).reshape(n, f, out_h, out_w)
    if bias is not None:
        out += bias.reshape(1, f, 1, 1).astype(out.dtype, copy=False)
    return _apply_act(out, act, slope)


def conv2d_backward_input(dy: np.ndarray, w: np.ndarray, stride: int, padding: int,
                          input_hw: tuple[int, int], bias: np.ndarray | None = None,
                          act: int = ACT_NONE, slope: float = 0.2) -> np.ndarray:
    n, f, out_h, out_w = dy.shape
    _, c, kh, kw = w.shape
    h, wd = input_hw
    ck = c * kh * kw
    dy2 = dy.reshape(n, f, out_h * out_w).transpose(0, 2, 1).reshape(n * out_h * out_w, f)
    dcols = dy2 @ w.reshape(f, ck)
    dcols = dcols.reshape(n, out_h, out_w, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=dy.dtype)
    for ki in range(kh):
        for kj in range(kw):
            dxp[:, :, ki:ki + stride * out_h:stride,
                kj:kj + stride * out_w:stride] += dcols[:, :, ki, kj]
    out = dxp if padding == 0 else dxp[:, :, padding:padding + h, padding:padding + wd].copy()
    if bias is not None:
        out += bias.reshape(1, c, 1, 1).astype(out.dtype, copy=False)
    return _apply_act(out, act, slope)


def conv2d_backward_weight(x: np.ndarray, dy: np.ndarray, stride: int, padding: int,
                           kh: int, kw: int) -> np.ndarray:
    n, c, _, _ = x.shape
    _, f, out_h, out_w = dy.shape
    xp = _pad_input(x, padding)
    cols = _im2col(xp, kh, kw, stride, out_h, out_w)
    ck = c * kh * kw
    dw = np.tensordot(dy.reshape(n, f, out_h * out_w),
                      cols.reshape(n, ck, out_h * out_w),
                      axes=([0, 2], [0, 2]))
    return dw.reshape(f, c, kh, kw)


# -- fused conv blocks (reference composition of the primitives above) -----------

def conv_block_forward(x, w, bias, stride, padding, act=ACT_NONE, slope=0.2):
    """Returns (activated output, im2col buffer for backward reuse)."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (wd + 2 * padding - kw) // stride + 1
    xp = _pad_input(x, padding)
    cols = _im2col(xp, kh, kw, stride, out_h, out_w)
    ck = c * kh * kw
    flat = cols.reshape(n, ck, out_h * out_w).transpose(0, 2, 1).reshape(-1, ck)
    out = flat @ w.reshape(f, ck).T
    out = np.ascontiguousarray(out.reshape(n, out_h * out_w, f).transpose(0, 2, 1))
    out = out.reshape(n, f, out_h, out_w)
    if bias is not None:
        out += bias.reshape(1, f, 1, 1).astype(out.dtype, copy=False)
    return _apply_act(out, act, slope), cols


def conv_block_backward(g, out, cols, w, stride, padding, input_hw, act, slope=0.2):
    """(dx, dw, db) for a conv + bias + activation block."""
    f, c, kh, kw = w.shape
    n = g.shape[0]
    out_h, out_w = g.shape[2], g.shape[3]
    dz = act_grad(out, g, act, slope)
    db = dz.sum(axis=(0, 2, 3))
    ck = c * kh * kw
    dw = np.tensordot(dz.reshape(n, f, out_h * out_w),
                      cols.reshape(n, ck, out_h * out_w),
                      axes=([0, 2], [0, 2])).reshape(f, c, kh, kw)
    dx = conv2d_backward_input(dz, w, stride, padding, input_hw)
    return dx, dw, db


def tconv_block_forward(x, w, bias, stride, padding, output_padding,
                        act=ACT_NONE, slope=0.2):
    f, c, kh, kw = w.shape  # (Cin, Cout, kh, kw)
    n, _, h, wd = x.shape
    out_h = (h - 1) * stride - 2 * padding + kh + output_padding
    out_w = (wd - 1) * stride - 2 * padding + kw + output_padding
    return conv2d_backward_input(x, w, stride, padding, (out_h, out_w),
                                 bias=bias, act=act, slope=slope)


def tconv_block_backward(g, out, x, w, stride, padding, act, slope=0.2):
    """(dx, dw, db) for a transposed conv + bias + activation block."""
    _, _, kh, kw = w.shape
    dz = act_grad(out, g, act, slope)
    db = dz.sum(axis=(0, 2, 3))
    dx = conv2d_forward(dz, w, stride, padding)
    dw = conv2d_backward_weight(dz, x, stride, padding, kh, kw)
    return dx, dw, db


def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
