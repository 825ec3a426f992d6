"""Sensor layouts: circles, Fibonacci spheres and straight lines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .forward import SensorArray

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True)
class ArraySpec:
    """One sensor layout.

    kind="circle": ``count`` points on a circle of ``radius`` about ``center``
    in the plane spanned by ``e1, e2``, starting on ``e1``.  The angle step is
    ``2 pi / count``, or ``pi / count`` with ``half_circle=True``.

    kind="fibonacci": ``(sqrt(R^2 - y_i^2) cos(b i), y_i, sqrt(R^2 - y_i^2) sin(b i))``
    with ``y_i = R (1 - 2 i / (n - 1))`` and ``b`` the golden angle.

    kind="line": ``start + i * step`` for ``i < count``.
    """

    kind: str
    count: int
    radius: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    e1: tuple = (1.0, 0.0, 0.0)
    e2: tuple = (0.0, 1.0, 0.0)
    half_circle: bool = False
    start: tuple = (0.0, 0.0, 0.0)
    step: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("circle", "fibonacci", "line"):
            raise ValidationError(f"unknown array kind {self.kind!r}")
        if int(self.count) != self.count or self.count < 1:
            raise ValidationError("sensor count must be a positive integer")
        if self.kind in ("circle", "fibonacci") and not self.radius > 0:
            raise ValidationError("array radius must be positive")
        if self.kind == "fibonacci" and self.count == 1:
            raise ValidationError("a Fibonacci sphere needs at least two points")

    def points(self) -> np.ndarray:
        n = int(self.count)
        i = np.arange(n)
        if self.kind == "circle":
            theta = (np.pi if self.half_circle else 2 * np.pi) * i / n
            e1, e2 = np.asarray(self.e1, float), np.asarray(self.e2, float)
            return (np.asarray(self.center, float)
                    + self.radius * (np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2))
        if self.kind == "fibonacci":
            R = self.radius
            y = R * (1 - 2 * i / (n - 1))
            r = np.sqrt(np.maximum(R * R - y * y, 0.0))
            b = GOLDEN_ANGLE * i
            return np.asarray(self.center, float) + np.column_stack([r * np.cos(b), y, r * np.sin(b)])
        return np.asarray(self.start, float) + i[:, None] * np.asarray(self.step, float)

    @property
    def enclosing_radius(self) -> float | None:
        return float(self.radius) if self.kind in ("circle", "fibonacci") else None


def generate(*specs: ArraySpec) -> SensorArray:
    """Concatenate the layouts in order into one :class:`SensorArray`."""
    if not specs:
        raise ValidationError("no array specs given")
    pts = np.vstack([s.points() for s in specs])
    radii = [s.enclosing_radius for s in specs if s.enclosing_radius is not None]
    hint = max(radii) if radii else float(np.max(np.linalg.norm(pts, axis=1)))
    return SensorArray(pts, hint)
