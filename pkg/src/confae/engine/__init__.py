"""Deterministic reverse-mode autodiff engine (numpy + optional numba kernels)."""

from confae.engine.adam import Adam
from confae.engine.gradcheck import GradCheckReport, grad_check
from confae.engine.kernels import active_backend, get_kernels, set_backend
from confae.engine.ops import (
    abs_,
    add,
    conv2d,
    conv2d_block,
    conv_transpose2d,
    conv_transpose2d_block,
    crop2d,
    dense,
    div,
    leaky_relu,
    mean,
    mul,
    neg,
    permute,
    reshape,
    sigmoid,
    sqrt,
    square,
    sub,
)
from confae.engine.tensor import GraphError, Tape, Tensor, assert_finite, no_grad

__all__ = [
    "Adam", "GradCheckReport", "grad_check", "active_backend", "get_kernels",
    "set_backend", "abs_", "add", "conv2d", "conv2d_block", "conv_transpose2d",
    "conv_transpose2d_block", "crop2d", "dense", "div", "leaky_relu", "mean",
    "mul", "neg", "permute", "reshape", "sigmoid", "sqrt", "square", "sub",
    "GraphError", "Tape", "Tensor", "assert_finite", "no_grad",
]
