"""Training losses: reconstruction, batch-level correlation, optional NCC.

The correlation loss is the orthogonalization mechanism: on each labeled
batch it rewards |r(zp, t)| and penalizes eta * sum_i |r(zp, c_i)|, where r
is the batch Pearson coefficient. Since Pearson equals the cosine between
the mean-centered vectors, driving r(zp, c_i) to zero turns the projection
direction orthogonal to every confounder direction while keeping it aligned
with the target direction.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from confae.engine import Tensor, abs_, crop2d, mean, permute, reshape, sqrt, square

PEARSON_EPS = 1e-8
DEGENERATE_SD = 1e-12
NCC_WINDOW = 9
NCC_EPS = 1e-5


def loss_rec(x: Tensor, x_rec: Tensor) -> Tensor:
    """Mean absolute error over all pixels."""
    if x.shape != x_rec.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_rec.shape}")
    return mean(abs_(x - x_rec))


def batch_pearson(a: Tensor, b: Tensor) -> tuple[Tensor, bool]:
    """Batch Pearson correlation, differentiable, with an epsilon guard.

    Returns (r, degenerate). Each standard deviation gets +1e-8 before the
    division, so a constant input yields r = 0 instead of NaN; such a batch
    is flagged degenerate and the caller is expected to skip the term.
    """
    if a.shape != b.shape or len(a.shape) != 1:
        raise ValueError(f"expected equal-length vectors, got {a.shape} vs {b.shape}")
    if a.shape[0] < 2:
        raise ValueError("batch Pearson needs at least 2 samples")
    ac = a - mean(a)
    bc = b - mean(b)
    sa = sqrt(mean(square(ac)))
    sb = sqrt(mean(square(bc)))
    degenerate = float(sa.data) < DEGENERATE_SD or float(sb.data) < DEGENERATE_SD
    r = mean(ac * bc) / ((sa + PEARSON_EPS) * (sb + PEARSON_EPS))
    return r, degenerate


def loss_corr(zp: Tensor, t: Tensor, confounders: Sequence[tuple[str, Tensor]],
              eta: float) -> tuple[Tensor | None, list[str]]:
    """-|r(zp, t)| + eta * sum_i |r(zp, c_i)|.

    Degenerate terms (constant within the batch) are skipped and reported by
    name ("target" for t). Returns (loss, skipped); loss is None when every
    term was degenerate.
    """
    skipped: list[str] = []
    loss = None
    r_t, degenerate = batch_pearson(zp, t)
    if degenerate:
        skipped.append("target")
    else:
        loss = -abs_(r_t)
    for name, c in confounders:
        r_c, degenerate = batch_pearson(zp, c)
        if degenerate:
            skipped.append(name)
            continue
        term = abs_(r_c) * float(eta)
        loss = term if loss is None else loss + term
    return loss, skipped


def loss_ncc(x: Tensor, x_rec: Tensor) -> Tensor:
    """1 - mean windowed zero-normalized cross-correlation, in [0, 2].

    9x9 windows at stride 9 (edge remainder dropped), per-window variance
    floor 1e-5. Optional reconstruction term; complements the pixelwise L1
    by rewarding local structural agreement.
    """
    if x.shape != x_rec.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_rec.shape}")
    h, w = x.shape[-2], x.shape[-1]
    nh, nw = h // NCC_WINDOW, w // NCC_WINDOW
    if nh == 0 or nw == 0:
        raise ValueError(f"image {h}x{w} smaller than the {NCC_WINDOW}x{NCC_WINDOW} window")
    batch = x.shape[0]

    def windows(img: Tensor) -> Tensor:
        img = crop2d(img, nh * NCC_WINDOW, nw * NCC_WINDOW)
        img = reshape(img, (batch, nh, NCC_WINDOW, nw, NCC_WINDOW))
        img = permute(img, (0, 1, 3, 2, 4))
        return reshape(img, (batch, nh * nw, NCC_WINDOW * NCC_WINDOW))

    xw = windows(x)
    yw = windows(x_rec)
    xc = xw - mean(xw, axis=2, keepdims=True)
    yc = yw - mean(yw, axis=2, keepdims=True)
    sx = sqrt(mean(square(xc), axis=2) + NCC_EPS)
    sy = sqrt(mean(square(yc), axis=2) + NCC_EPS)
    zncc = mean(xc * yc, axis=2) / (sx * sy)
    return 1.0 - mean(zncc)


def loss_joint(x: Tensor, x_rec: Tensor, zp: Tensor, t: Tensor,
               confounders: Sequence[tuple[str, Tensor]], eta: float,
               lam: float, ncc: bool = False) -> tuple[Tensor, list[str]]:
    """L_rec + lambda * L_corr (+ L_ncc when enabled).

    lambda scales the correlation term relative to reconstruction; it stays
    in-graph even at lambda = 0 so the projection estimator receives exact
    zero gradients rather than none.
    """
    rec = loss_rec(x, x_rec)
    if ncc:
        rec = rec + loss_ncc(x, x_rec)
    corr, skipped = loss_corr(zp, t, confounders, eta)
    if corr is None:
        return rec, skipped
    return rec + corr * float(lam), skipped


def corr_upper_bound(r_tc: Sequence[float]) -> float:
    """Max achievable |r(zp, t)| when zp is orthogonal to all confounders.

    For mutually independent confounders with target correlations r_i the
    bound is sqrt(1 - sum_i r_i^2).
    """
    total = float(sum(float(r) ** 2 for r in r_tc))
    if total > 1.0:
        raise ValueError(f"sum of squared correlations {total:.4f} exceeds 1; "
                         "confounders cannot be mutually independent")
    return math.sqrt(1.0 - total)
