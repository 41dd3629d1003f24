"""Single-feature predictors mapping the projected representation to the target."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RIDGE = 1e-6  # keeps Newton-Raphson bounded under perfect separation
MAX_NEWTON_ITERS = 100
NEWTON_TOL = 1e-8


@dataclass(frozen=True)
class Predictor:
    kind: str      # "linear" | "logistic"
    slope: float
    intercept: float

    def predict(self, zp) -> np.ndarray:
        z = np.asarray(zp, dtype=np.float64)
        raw = self.slope * z + self.intercept
        if self.kind == "linear":
            return raw
        return 1.0 / (1.0 + np.exp(-raw))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "slope": self.slope, "intercept": self.intercept}

    @staticmethod
    def from_dict(d: dict) -> "Predictor":
        return Predictor(kind=d["kind"], slope=float(d["slope"]),
                         intercept=float(d["intercept"]))


def fit_predictor(zp, t, kind: str = "linear") -> Predictor:
    """Fit the predictor on training projections.

    linear: closed-form least squares. logistic: Newton-Raphson with an L2
    ridge of 1e-6 (well-posed under perfect separation), at most 100
    iterations, gradient-norm tolerance 1e-8.
    """
    z = np.asarray(zp, dtype=np.float64).reshape(-1)
    y = np.asarray(t, dtype=np.float64).reshape(-1)
    if z.size != y.size:
        raise ValueError("zp and t must have equal length")
    if z.size < 2:
        raise ValueError("need at least 2 samples to fit a predictor")
    if z.std() == 0.0:
        raise ValueError("zp has zero variance; nothing to regress on")

    if kind == "linear":
        zc = z - z.mean()
        slope = float((zc * (y - y.mean())).sum() / (zc * zc).sum())
        intercept = float(y.mean() - slope * z.mean())
        return Predictor("linear", slope, intercept)

    if kind != "logistic":
        raise ValueError(f"unknown predictor kind {kind!r}")
    classes = np.unique(y)
    if not np.all(np.isin(classes, (0.0, 1.0))):
        raise ValueError("logistic regression expects 0/1 targets")
    if classes.size < 2:
        raise ValueError("logistic regression needs both classes present")

    theta = np.zeros(2)  # (slope, intercept)
    X = np.column_stack([z, np.ones_like(z)])
    for _ in range(MAX_NEWTON_ITERS):
        logits = X @ theta
        p = 1.0 / (1.0 + np.exp(-logits))
        grad = X.T @ (p - y) + RIDGE * theta
        if np.linalg.norm(grad) < NEWTON_TOL:
            break
        w = p * (1.0 - p)
        hess = (X * w[:, None]).T @ X + RIDGE * np.eye(2)
        theta = theta - np.linalg.solve(hess, grad)
    return Predictor("logistic", float(theta[0]), float(theta[1]))
