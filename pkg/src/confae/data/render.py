"""Deterministic shape rasterizers (64x64, center-in-shape membership, no AA)."""

from __future__ import annotations

import math

import numpy as np

from confae.data import attributes
from confae.errors import DataError

IMAGE_SIZE = 64


def render_circle(brightness: float, radius: float, size: int = IMAGE_SIZE) -> np.ndarray:
    """Solid circle at the geometric image center on a black background.

    Interior intensity is (128 + round(127 * brightness)) / 255, i.e. gray at
    brightness 0 and white at brightness 1.
    """
    if not 3.0 <= radius <= 30.0:
        raise DataError(f"radius {radius} outside [3, 30]")
    if not 0.0 <= brightness <= 1.0:
        raise DataError(f"brightness {brightness} outside [0, 1]")
    center = (size - 1) / 2.0
    yy, xx = np.ogrid[:size, :size]
    inside = (yy - center) ** 2 + (xx - center) ** 2 <= radius * radius
    value = (128.0 + np.round(127.0 * brightness)) / 255.0
    img = np.zeros((size, size), dtype=np.float32)
    img[inside] = np.float32(value)
    return img


_ELLIPSE_RANGES = {a.name: (a.lo, a.hi) for a in attributes.ellipse_attributes()}
ASPECT = 2.0  # major axis = 2 x minor axis, fixed for the whole benchmark


def render_ellipse(brightness: float, angle: float, position: float, area: float,
                   size: int = IMAGE_SIZE) -> tuple[np.ndarray, bool]:
    """Solid ellipse; returns (image, clipped).

    The major axis is rotated `angle` degrees clockwise from horizontal (rows
    grow downward), the center sits at (row=position, col=32), and the
    semi-axes satisfy a = 2 b with pi*a*b = area. Interior intensity is
    round(255 * brightness) / 255. An ellipse extending beyond the frame is
    clipped silently and flagged.
    """
    for name, value in (("brightness", brightness), ("angle", angle),
                        ("position", position), ("area", area)):
        lo, hi = _ELLIPSE_RANGES[name]
        if not lo <= value <= hi:
            raise DataError(f"ellipse {name} {value} outside [{lo}, {hi}]")

    b_axis = math.sqrt(area / (ASPECT * math.pi))
    a_axis = ASPECT * b_axis
    theta = math.radians(angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    center_col = size // 2
    yy, xx = np.mgrid[:size, :size]
    dx = xx - float(center_col)
    dy = yy - float(position)
    along = dx * cos_t + dy * sin_t
    across = -dx * sin_t + dy * cos_t
    inside = (along / a_axis) ** 2 + (across / b_axis) ** 2 <= 1.0

    value = np.round(255.0 * brightness) / 255.0
    img = np.zeros((size, size), dtype=np.float32)
    img[inside] = np.float32(value)

    extent_x = math.sqrt((a_axis * cos_t) ** 2 + (b_axis * sin_t) ** 2)
    extent_y = math.sqrt((a_axis * sin_t) ** 2 + (b_axis * cos_t) ** 2)
    clipped = (center_col - extent_x < 0 or center_col + extent_x > size - 1
               or position - extent_y < 0 or position + extent_y > size - 1)
    return img, clipped
