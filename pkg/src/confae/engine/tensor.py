"""Minimal reverse-mode autodiff tensor.

Operations record onto an explicit gradient tape (see `Tape`); the backward
pass walks the tape in exact reverse append order and accumulates (never
overwrites) gradient contributions. Training code owns one tape per step:

    with Tape() as tape:
        loss = model.loss(batch)
    loss.backward()

Float32 is the working precision; the engine is dtype-generic so the
gradient checker can re-evaluate the same graph in float64.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np


class GraphError(RuntimeError):
    """Backward invoked on a tensor with no recorded graph."""


class Node:
    """One recorded operation: output tensor + per-parent gradient functions."""

    __slots__ = ("output", "parents", "grad_fns", "tape", "index")

    def __init__(self, output: "Tensor", parents: tuple, grad_fns: tuple):
        self.output = output
        self.parents = parents
        self.grad_fns = grad_fns
        self.tape = None
        self.index = -1


class Tape:
    """Ordered record of operations; backward runs in reverse append order."""

    def __init__(self):
        self.nodes: list[Node] = []

    def append(self, node: Node) -> None:
        node.tape = self
        node.index = len(self.nodes)
        self.nodes.append(node)

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack.pop()

    def backward(self, loss: "Tensor") -> None:
        """Accumulate d(loss)/d(t) into `t.grad` for every recorded tensor."""
        if loss.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        if loss.node is None or loss.node.tape is not self:
            raise GraphError("loss tensor is not attached to this tape")

        # Scratch accumulation per backward call; results are then added into
        # .grad so repeated calls accumulate as documented.
        pending: dict[int, list] = {
            id(loss): [loss, np.ones_like(loss.data)]
        }
        for node in reversed(self.nodes[: loss.node.index + 1]):
            entry = pending.pop(id(node.output), None)
            if entry is None:
                continue
            out_t, grad = entry
            out_t.grad = grad if out_t.grad is None else out_t.grad + grad
            for parent, fn in zip(node.parents, node.grad_fns):
                if fn is None or not parent.requires_grad:
                    continue
                pg = fn(grad)
                key = id(parent)
                if key in pending:
                    pending[key][1] = pending[key][1] + pg
                else:
                    pending[key] = [parent, pg]
        for tensor, grad in pending.values():
            tensor.grad = grad if tensor.grad is None else tensor.grad + grad


_tape_stack: list[Tape] = []
_grad_enabled: bool = True


def active_tape() -> Optional[Tape]:
    if _grad_enabled and _tape_stack:
        return _tape_stack[-1]
    return None


class no_grad:
    """Context manager disabling tape recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev


class Tensor:
    """n-d float array with optional gradient buffer and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node: Optional[Node] = None

    # -- introspection ------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- autodiff -----------------------------------------------------------
    def backward(self) -> None:
        if self.node is None:
            raise GraphError("backward on a tensor detached from any recorded graph")
        self.node.tape.backward(self)

    def zero_grad(self) -> None:
        self.grad = None

    # -- operators (implemented in ops.py, attached there) -------------------
    # __add__ etc. are assigned at import time by confae.engine.ops.


def make_result(data: np.ndarray, parents: Sequence[Tensor], grad_fns: Sequence) -> Tensor:
    """Wrap an op result, recording a node when a tape is active."""
    tape = active_tape()
    requires = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires, dtype=data.dtype)
    if requires:
        node = Node(out, tuple(parents), tuple(grad_fns))
        out.node = node
        tape.append(node)
    return out


def assert_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")
