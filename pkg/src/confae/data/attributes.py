"""Attribute and correlation specifications for the synthetic benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from confae.errors import DataError

TARGET = "target"
CONFOUNDER = "confounder"


@dataclass(frozen=True)
class AttributeSpec:
    """One image attribute: nominal Gaussian moments, valid range, and role."""

    name: str
    mean: float
    sd: float
    lo: float
    hi: float
    role: str

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DataError(f"attribute {self.name}: lo {self.lo} must be < hi {self.hi}")
        if not self.sd > 0:
            raise DataError(f"attribute {self.name}: sd must be positive")
        if self.role not in (TARGET, CONFOUNDER):
            raise DataError(f"attribute {self.name}: role must be target or confounder")


class CorrelationSpec:
    """Symmetric positive-definite correlation matrix over the attributes."""

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DataError("correlation matrix must be square")
        if not np.allclose(m, m.T, atol=1e-12):
            raise DataError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(m), 1.0, atol=1e-12):
            raise DataError("correlation matrix must have unit diagonal")
        if np.any(np.abs(m) > 1.0 + 1e-12):
            raise DataError("correlation entries must lie in [-1, 1]")
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise DataError("correlation matrix is not positive-definite "
                            "(Cholesky factorization failed)") from exc
        self.matrix = m

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


# Circle benchmark: solid grayscale circles, brightness vs radius strongly
# anti-correlated. A brightness of 0 renders gray, 1 renders white.
CIRCLE_CORRELATION = -0.668


def circle_attributes() -> list[AttributeSpec]:
    return [
        AttributeSpec("brightness", 0.470, 0.135, 0.0, 1.0, TARGET),
        AttributeSpec("radius", 16.0, 6.320, 3.0, 30.0, CONFOUNDER),
    ]


def circle_correlation() -> CorrelationSpec:
    return CorrelationSpec([[1.0, CIRCLE_CORRELATION],
                            [CIRCLE_CORRELATION, 1.0]])


# Ellipse benchmark: brightness is the target; angle, position and area are
# mutually independent confounders, each correlated 0.4 in magnitude with
# brightness. Signs follow the rendered geometry: brighter ellipses rotate
# clockwise, sit lower in the image, and are smaller.
ELLIPSE_R_ANGLE = 0.4
ELLIPSE_R_POSITION = 0.4
ELLIPSE_R_AREA = -0.4


def ellipse_attributes() -> list[AttributeSpec]:
    return [
        AttributeSpec("brightness", 0.58, 0.14, 0.16, 1.00, TARGET),
        AttributeSpec("angle", 90.0, 20.33, 10.0, 169.0, CONFOUNDER),
        AttributeSpec("position", 31.0, 4.50, 16.0, 46.0, CONFOUNDER),
        AttributeSpec("area", 399.0, 97.90, 41.0, 778.0, CONFOUNDER),
    ]


def ellipse_correlation() -> CorrelationSpec:
    r1, r2, r3 = ELLIPSE_R_ANGLE, ELLIPSE_R_POSITION, ELLIPSE_R_AREA
    return CorrelationSpec([
        [1.0, r1, r2, r3],
        [r1, 1.0, 0.0, 0.0],
        [r2, 0.0, 1.0, 0.0],
        [r3, 0.0, 0.0, 1.0],
    ])
