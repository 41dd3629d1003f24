"""Adam optimizer over engine tensors."""

from __future__ import annotations

import numpy as np

from confae.engine import kernels
from confae.engine.tensor import Tensor


class Adam:
    """Standard Adam with bias correction; clears gradients after each step.

    Moment buffers and step counts are kept per parameter, so `step` may be
    restricted to a subset (e.g. reconstruction-only updates that must leave
    the projection head and its optimizer state untouched).
    """

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._index = {id(p): i for i, p in enumerate(self.params)}
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = [0] * len(self.params)

    def step(self, subset: list[Tensor] | None = None) -> None:
        chosen = self.params if subset is None else subset
        indices = []
        for p in chosen:
            i = self._index.get(id(p))
            if i is None:
                raise RuntimeError("step() called with a tensor not registered in this optimizer")
            if p.grad is None:
                raise RuntimeError(f"missing gradient on registered parameter #{i} "
                                   f"(shape {p.data.shape})")
            if p.grad.shape != p.data.shape:
                raise RuntimeError(f"gradient shape {p.grad.shape} != parameter shape {p.data.shape}")
            indices.append(i)
        for i in indices:
            p = self.params[i]
            self.t[i] += 1
            if p.data.size >= 4096:  # kernel dispatch overhead dominates below this
                kernels.adam_update(p.data, p.grad, self.m[i], self.v[i],
                                    self.lr, self.beta1, self.beta2, self.eps, self.t[i])
            else:
                t = self.t[i]
                bc1 = 1.0 - self.beta1 ** t
                bc2 = 1.0 - self.beta2 ** t
                m, v = self.m[i], self.v[i]
                g = p.grad
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
