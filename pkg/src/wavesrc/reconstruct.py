"""Sampling-grid indicators, ball carving and peak/threshold extraction.

For a probe point ``z`` and sensors ``x_i`` with arrival-implied radii
``R_i = c (arrival_i - onset)`` the mismatch is ``d_i(z) = | |z - x_i| - R_i |``.
The indicator sums ``min(d_i^-1/2, cap)`` (``kernel="sqrt"``) or
``min(d_i^-1, cap)`` (``kernel="abs"``) over sensors; it is large where many
arrival spheres pass through ``z``.  Carving keeps the points that lie
outside every ball ``B(x_i, R_i - margin)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ValidationError
from .measurement import ArrivalSet

DEFAULT_CAP = 1e6
DEFAULT_MARGIN = 0.15
KERNELS = {"sqrt": kernels.KERNEL_SQRT, "abs": kernels.KERNEL_ABS}


@dataclass(frozen=True, eq=False)
class SamplingGrid:
    """Uniform lattice of probe points, endpoints included on every axis.

    ``mode="plane"``: ``n[0] x n[1]`` points ``origin + u e1 + v e2`` with
    ``(u, v)`` in the box ``lower..upper``.  ``mode="box"``: an axis-aligned
    3-D lattice.  Points enumerate in row-major order (first axis slowest).
    """

    mode: str
    lower: tuple
    upper: tuple
    n: tuple
    origin: tuple = (0.0, 0.0, 0.0)
    e1: tuple = (1.0, 0.0, 0.0)
    e2: tuple = (0.0, 1.0, 0.0)

    def __post_init__(self):
        dims = {"plane": 2, "box": 3}.get(self.mode)
        if dims is None:
            raise ValidationError(f"grid mode must be 'plane' or 'box', got {self.mode!r}")
        n = (int(self.n),) * dims if np.isscalar(self.n) else tuple(int(k) for k in self.n)
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if not (len(lo) == len(hi) == len(n) == dims):
            raise ValidationError(f"{self.mode} grid needs {dims} bounds and counts per axis")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValidationError("grid box must have positive extent on every axis")
        if any(k < 2 for k in n):
            raise ValidationError("grid needs at least 2 points per axis")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if dims == 2:
            e1 = np.asarray(self.e1, float)
            e2 = np.asarray(self.e2, float)
            e1 = e1 / np.linalg.norm(e1)
            e2 = e2 - np.dot(e2, e1) * e1
            e2 = e2 / np.linalg.norm(e2)
            object.__setattr__(self, "e1", tuple(e1))
            object.__setattr__(self, "e2", tuple(e2))
            object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @classmethod
    def plane(cls, lower, upper, n, origin=(0, 0, 0), e1=(1, 0, 0), e2=(0, 1, 0)):
        return cls("plane", tuple(lower), tuple(upper), n, tuple(origin), tuple(e1), tuple(e2))

    @classmethod
    def box(cls, lower, upper, n):
        return cls("box", tuple(lower), tuple(upper), n)

    @property
    def axes(self):
        return [np.linspace(l, h, k) for l, h, k in zip(self.lower, self.upper, self.n)]

    @property
    def spacing(self):
        return tuple((h - l) / (k - 1) for l, h, k in zip(self.lower, self.upper, self.n))

    @property
    def shape(self):
        return self.n

    @property
    def size(self):
        return int(np.prod(self.n))

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        local = np.column_stack([m.ravel() for m in mesh])
        if self.mode == "box":
            return local
        return (np.asarray(self.origin) + local[:, :1] * np.asarray(self.e1)
                + local[:, 1:] * np.asarray(self.e2))

    def to_local(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        if self.mode == "box":
            return pts
        w = pts - np.asarray(self.origin)
        return np.column_stack([w @ np.asarray(self.e1), w @ np.asarray(self.e2)])

    def nearest_index(self, pts) -> np.ndarray:
        """Flat index of the lattice point nearest each query (clamped to the box)."""
        loc = self.to_local(pts)
        idx = []
        for k, (l, h, n) in enumerate(zip(self.lower, self.upper, self.n)):
            step = (h - l) / (n - 1)
            idx.append(np.clip(np.rint((loc[:, k] - l) / step), 0, n - 1).astype(int))
        return np.ravel_multi_index(idx, self.n)

    def contains(self, pts, tol=1e-9) -> np.ndarray:
        """Points inside the box (and, for planes, on the plane within ``tol``)."""
        pts = np.atleast_2d(np.asarray(pts, float))
        loc = self.to_local(pts)
        ok = np.all((loc >= np.array(self.lower) - tol) & (loc <= np.array(self.upper) + tol), axis=1)
        if self.mode == "plane":
            normal = np.cross(self.e1, self.e2)
            ok &= np.abs((pts - np.asarray(self.origin)) @ normal) <= tol
        return ok

    def describe(self) -> dict:
        out = {"mode": self.mode, "lower": list(self.lower), "upper": list(self.upper), "n": list(self.n)}
        if self.mode == "plane":
            out.update(origin=list(self.origin), e1=list(self.e1), e2=list(self.e2))
        return out


@dataclass(frozen=True, eq=False)
class IndicatorField:
    grid: SamplingGrid
    values: np.ndarray
    kernel: str
    cap: float
    sensor_count: int

    def image(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True, eq=False)
class CarveResult:
    grid: SamplingGrid
    kept: np.ndarray
    radii: np.ndarray
    margin: float

    @property
    def kept_count(self) -> int:
        return int(np.count_nonzero(self.kept))


def _radii(arrivals: ArrivalSet, onset, c, cap=None):
    if not c > 0:
        raise ValidationError("sound speed must be positive")
    if cap is not None and not cap > 0:
        raise ValidationError(f"kernel cap must be positive, got {cap}")
    pos, times = arrivals.usable()
    if len(pos) == 0:
        raise ValidationError("no sensor has a usable arrival")
    return pos, c * (times - onset)


def indicator(arrivals: ArrivalSet, grid: SamplingGrid, onset: float = 0.0, c: float = 1.0,
              kernel: str = "abs", cap: float = DEFAULT_CAP, backend=None) -> IndicatorField:
    """Evaluate the sampling indicator on every grid point.

    Sensors without a detected arrival are skipped.
    """
    if kernel not in KERNELS:
        raise ValidationError(f"kernel must be one of {sorted(KERNELS)}, got {kernel!r}")
    pos, radii = _radii(arrivals, onset, c, cap)
    values = kernels.indicator_sum(grid.points(), pos, radii, KERNELS[kernel], cap, backend=backend)
    return IndicatorField(grid, values, kernel, float(cap), len(pos))


def carve(arrivals: ArrivalSet, grid: SamplingGrid, onset: float = 0.0, c: float = 1.0,
          margin: float = DEFAULT_MARGIN, backend=None) -> CarveResult:
    """Remove from the grid every point strictly inside a ball ``B(x_i, R_i - margin)``."""
    if not margin >= 0:
        raise ValidationError(f"carving margin must be nonnegative, got {margin}")
    pos, radii = _radii(arrivals, onset, c)
    kept = kernels.carve_mask(grid.points(), pos, radii, margin, backend=backend)
    return CarveResult(grid, kept, radii, float(margin))


def _descending(values):
    # stable sort on the negated values keeps row-major order among ties
    return np.argsort(-values, kind="stable")


def threshold_points(field: IndicatorField, absolute: float | None = None,
                     quantile: float | None = None):
    """Grid points whose value strictly exceeds the threshold, largest first.

    Exactly one of ``absolute`` or ``quantile`` must be given.  Returns
    ``(points (k, 3), values (k,))``.
    """
    if (absolute is None) == (quantile is None):
        raise ValidationError("give exactly one of absolute or quantile")
    if quantile is not None:
        if not 0 < quantile < 1:
            raise ValidationError(f"quantile must lie in (0, 1), got {quantile}")
        level = float(np.quantile(field.values, quantile))
    else:
        level = float(absolute)
    idx = np.flatnonzero(field.values > level)
    idx = idx[_descending(field.values[idx])]
    return field.grid.points()[idx], field.values[idx]


def local_maxima(field: IndicatorField, min_separation: float, count: int) -> np.ndarray:
    """Greedy peak picking: walk points in descending value, keep a point when it
    is at least ``min_separation`` from every point already kept."""
    if not min_separation > 0:
        raise ValidationError("min_separation must be positive")
    if count < 1:
        raise ValidationError("count must be at least 1")
    pts = field.grid.points()
    chosen = []
    for i in _descending(field.values):
        p = pts[i]
        if all(np.linalg.norm(p - q) >= min_separation for q in chosen):
            chosen.append(p)
            if len(chosen) == count:
                break
    return np.array(chosen).reshape(-1, 3)


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def save_field_csv(field: IndicatorField, path) -> Path:
    path = Path(path)
    np.savetxt(path, np.column_stack([field.grid.points(), field.values]), delimiter=",",
               header="x1,x2,x3,value", comments="", fmt="%.9g")
    return path


def save_carve_csv(result: CarveResult, path) -> Path:
    path = Path(path)
    pts = result.grid.points()
    with open(path, "w") as fh:
        fh.write("x1,x2,x3,kept\n")
        for p, k in zip(pts, result.kept):
            fh.write(f"{p[0]:.9g},{p[1]:.9g},{p[2]:.9g},{int(k)}\n")
    return path


def save_xyz(points, values, path) -> Path:
    path = Path(path)
    np.savetxt(path, np.column_stack([points, values]).reshape(-1, 4), fmt="%.9g", delimiter=" ")
    return path


def to_gray(image2d, log_scale=False) -> np.ndarray:
    """Map a plane-grid image to 8-bit rows for display: row 0 is the largest
    second coordinate, columns run along the first."""
    img = np.asarray(image2d, float)
    if log_scale:
        img = np.log1p(np.maximum(img, 0.0))
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo) * 255.0
    return np.rint(scaled).astype(np.uint8).T[::-1]


def save_pgm(image2d, path, log_scale=False) -> Path:
    """Binary PGM (P5, maxval 255)."""
    path = Path(path)
    gray = np.ascontiguousarray(to_gray(image2d, log_scale))
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None or int(m.group(3)) != 255:
        raise ValidationError(f"{path}: not an 8-bit binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    return np.frombuffer(data[m.end():], dtype=np.uint8).reshape(h, w)
