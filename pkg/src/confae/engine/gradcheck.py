"""Finite-difference verification of autodiff gradients.

The check re-evaluates the network function on float64 clones of the
parameters (the 32-bit training path is never trusted as its own oracle) and
compares the autodiff gradient against central differences. For large
parameter tensors a seeded random subset of coordinates is probed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from confae.engine.tensor import Tape, Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str = ""
    worst_index: tuple = ()
    per_param: dict = field(default_factory=dict)

    def __str__(self) -> str:
        return (f"grad check: max relative error {self.max_rel_error:.3e} "
                f"at {self.worst_param}{list(self.worst_index)}")


def _loss_value(fn: Callable, params: Sequence[Tensor]) -> float:
    out = fn(*params)
    if out.data.size != 1:
        raise ValueError("grad_check expects a scalar-valued function")
    return float(out.data.reshape(()))


def grad_check(fn: Callable[..., Tensor], params: Sequence[Tensor],
               step: float = 1e-3, max_elems_per_param: int | None = None,
               names: Sequence[str] | None = None, seed: int = 0) -> GradCheckReport:
    """Compare autodiff gradients of ``fn(*params)`` against central differences.

    Args:
        fn: builds a scalar loss Tensor from the given parameter Tensors.
        params: leaf tensors to differentiate with respect to (any dtype;
            evaluated on float64 shadow copies).
        step: central-difference step.
        max_elems_per_param: probe at most this many coordinates per
            parameter (seeded choice); None probes all.
        names: labels for reporting.
        seed: seed for coordinate subsampling.

    Returns:
        GradCheckReport with the max relative discrepancy.
    """
    shadow = [Tensor(p.data.astype(np.float64), requires_grad=True) for p in params]
    names = list(names) if names is not None else [f"param{i}" for i in range(len(shadow))]

    with Tape() as tape:
        loss = fn(*shadow)
    if loss.data.size != 1:
        raise ValueError("grad_check expects a scalar-valued function")
    tape.backward(loss)
    auto = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in shadow]

    rng = np.random.default_rng(seed)
    report = GradCheckReport(max_rel_error=0.0)
    for pi, p in enumerate(shadow):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_elems_per_param is not None and n > max_elems_per_param:
            idx = rng.choice(n, size=max_elems_per_param, replace=False)
        else:
            idx = np.arange(n)
        worst = 0.0
        worst_i = 0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = _loss_value(fn, shadow)
            flat[i] = orig - step
            down = _loss_value(fn, shadow)
            flat[i] = orig
            fd = (up - down) / (2.0 * step)
            ad = auto[pi].reshape(-1)[i]
            denom = max(abs(fd), abs(ad), 1e-8)
            rel = abs(ad - fd) / denom
            if rel > worst:
                worst, worst_i = rel, int(i)
        report.per_param[names[pi]] = worst
        if worst >= report.max_rel_error:
            report.max_rel_error = worst
            report.worst_param = names[pi]
            report.worst_index = np.unravel_index(worst_i, p.data.shape)
    return report
