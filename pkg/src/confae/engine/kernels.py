"""Backend selection for the convolution kernels.

The hot kernels ship in two interchangeable implementations:

* ``numba`` (default) -- compiled gather/scatter loops + BLAS, fastest.
* ``numpy`` -- pure numpy im2col reference, used as fallback and as the
  64-bit shadow path for gradient checking.

Set ``CONFAE_BACKEND=numpy`` (or ``numba``) to force one; the default is
numba when importable, numpy otherwise. `set_backend` overrides at runtime
(used by the tests and the kernel benchmark).
"""

from __future__ import annotations

import os
import warnings

from confae.engine import kernels_numpy

_BACKENDS = {"numpy": kernels_numpy}
_active: str | None = None

try:
    from confae.engine import kernels_numba
    _BACKENDS["numba"] = kernels_numba
except ImportError:  # pragma: no cover - exercised only without numba
    kernels_numba = None


def _resolve_default() -> str:
    name = os.environ.get("CONFAE_BACKEND", "").strip().lower()
    if name:
        if name not in ("numba", "numpy"):
            raise ValueError(f"CONFAE_BACKEND must be 'numba' or 'numpy', got {name!r}")
        if name == "numba" and "numba" not in _BACKENDS:
            warnings.warn("CONFAE_BACKEND=numba but numba is not importable; using numpy")
            return "numpy"
        return name
    return "numba" if "numba" in _BACKENDS else "numpy"


def active_backend() -> str:
    global _active
    if _active is None:
        _active = _resolve_default()
    return _active


def set_backend(name: str) -> None:
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {sorted(_BACKENDS)}")
    global _active
    _active = name


def get_kernels(name: str | None = None):
    """Return the kernel module for `name` (active backend when None)."""
    return _BACKENDS[name or active_backend()]


# activation codes shared by both backends
ACT_NONE = kernels_numpy.ACT_NONE
ACT_LEAKY = kernels_numpy.ACT_LEAKY
ACT_SIGMOID = kernels_numpy.ACT_SIGMOID


def conv2d_forward(x, w, stride, padding, bias=None, act=ACT_NONE, slope=0.2):
    return get_kernels().conv2d_forward(x, w, stride, padding, bias, act, slope)


def conv2d_backward_input(dy, w, stride, padding, input_hw, bias=None,
                          act=ACT_NONE, slope=0.2):
    return get_kernels().conv2d_backward_input(dy, w, stride, padding, input_hw,
                                               bias, act, slope)


def conv2d_backward_weight(x, dy, stride, padding, kh, kw):
    return get_kernels().conv2d_backward_weight(x, dy, stride, padding, kh, kw)


def act_grad(out, g, act, slope=0.2):
    return get_kernels().act_grad(out, g, act, slope)


def conv_block_forward(x, w, bias, stride, padding, act=ACT_NONE, slope=0.2):
    return get_kernels().conv_block_forward(x, w, bias, stride, padding, act, slope)


def conv_block_backward(g, out, cols, w, stride, padding, input_hw, act, slope=0.2):
    return get_kernels().conv_block_backward(g, out, cols, w, stride, padding,
                                             input_hw, act, slope)


def tconv_block_forward(x, w, bias, stride, padding, output_padding,
                        act=ACT_NONE, slope=0.2):
    return get_kernels().tconv_block_forward(x, w, bias, stride, padding,
                                             output_padding, act, slope)


def tconv_block_backward(g, out, x, w, stride, padding, act, slope=0.2):
    return get_kernels().tconv_block_backward(g, out, x, w, stride, padding, act, slope)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
    return get_kernels().adam_update(p, g, m, v, lr, beta1, beta2, eps, t)
