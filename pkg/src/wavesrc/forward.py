"""Synthetic sensor recordings from the closed-form retarded potential.

A source ``lambda(t) tau(y)`` on a support ``S`` radiates
``u(x, t) = int_S tau(y) lambda(t - |x - y| / c) / (4 pi |x - y|) dy``.
Point sets are summed exactly; extended supports use the quadrature from
:mod:`wavesrc.geometry`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from . import kernels
from .errors import ValidationError
from .geometry import Support
from .signal import Signal, TimeGrid

DEFAULT_QUAD_SPACING_2D = 0.01
DEFAULT_QUAD_SPACING_3D = 0.05


@dataclass(frozen=True, eq=False)
class SensorArray:
    positions: np.ndarray
    radius_hint: float

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or len(pos) == 0:
            raise ValidationError("sensor positions must be a nonempty (n, 3) array")
        if not np.all(np.isfinite(pos)):
            raise ValidationError("sensor positions must be finite")
        if len(np.unique(pos, axis=0)) != len(pos):
            raise ValidationError("sensor positions must be pairwise distinct")
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "radius_hint", float(self.radius_hint))

    def __len__(self):
        return len(self.positions)

    def subset(self, idx) -> "SensorArray":
        return SensorArray(self.positions[idx], self.radius_hint)


@dataclass(frozen=True, eq=False)
class Recording:
    """Samples ``values[i, k] = u(x_i, t_k)``.

    ``reference_max`` is the clean-data ``max |u|`` when noise was added in
    this process, ``None`` when unknown (for instance after loading a CSV).
    """

    grid: TimeGrid
    sensors: SensorArray
    values: np.ndarray
    c: float = 1.0
    noise_level: float = 0.0
    seed: int | None = None
    reference_max: float | None = None

    def __post_init__(self):
        if self.values.shape != (len(self.sensors), len(self.grid)):
            raise ValidationError(
                f"recording shape {self.values.shape} does not match "
                f"{len(self.sensors)} sensors x {len(self.grid)} samples"
            )
        if not self.c > 0:
            raise ValidationError("sound speed must be positive")

    @property
    def times(self):
        return self.grid.times

    @property
    def u_max(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def with_values(self, values, **changes) -> "Recording":
        return replace(self, values=values, **changes)


def simulate(support: Support, signal: Signal, sensors: SensorArray, grid: TimeGrid,
             c: float = 1.0, quad_spacing: float | None = None, backend=None) -> Recording:
    """Sample the wave field of ``signal`` radiated from ``support``."""
    if not c > 0:
        raise ValidationError(f"sound speed must be positive, got {c}")
    if quad_spacing is None:
        quad_spacing = DEFAULT_QUAD_SPACING_3D
    to_support = support.distance(sensors.positions)
    if np.any(to_support <= 0):
        bad = int(np.flatnonzero(to_support <= 0)[0])
        raise ValidationError(f"sensor {bad} lies on the source support")
    quad = support.quadrature(quad_spacing)
    dist = cdist(sensors.positions, quad.nodes)
    if np.any(dist <= 0):
        raise ValidationError("a sensor coincides with a quadrature node")
    amp = (quad.weights * quad.intensities)[None, :] / (4 * np.pi * dist)
    code, params, tab_t, tab_v = signal.kernel_args()
    values = kernels.forward_sum(dist, amp, grid.times, c, signal.onset, code, params,
                                 tab_t, tab_v, backend=backend)
    return Recording(grid, sensors, values, c=float(c))


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

def save_sensors(sensors: SensorArray, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x1", "x2", "x3"])
        for i, p in enumerate(sensors.positions):
            w.writerow([i] + [f"{v:.9g}" for v in p])
    return path


def load_sensors(path, radius_hint=None) -> SensorArray:
    rows = _read_numeric_rows(path, 4)
    rows.sort(key=lambda r: r[0])
    pos = np.array([r[1:] for r in rows])
    if radius_hint is None:
        radius_hint = float(np.max(np.linalg.norm(pos, axis=1)))
    return SensorArray(pos, radius_hint)


def save_recording(rec: Recording, path) -> Path:
    path = Path(path)
    header = "t," + ",".join(f"s{i}" for i in range(len(rec.sensors)))
    np.savetxt(path, np.column_stack([rec.times, rec.values.T]), delimiter=",",
               header=header, comments="", fmt="%.9g")
    return path


def load_recording(path, sensors: SensorArray, c: float = 1.0,
                   noise_level: float = 0.0) -> Recording:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[0] != "t" or header[1:] != [f"s{i}" for i in range(len(header) - 1)]:
        raise ValidationError(f"{path}: header must read t,s0,s1,...")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] - 1 != len(sensors):
        raise ValidationError(f"{path}: {data.shape[1] - 1} columns but {len(sensors)} sensors")
    t = data[:, 0]
    steps = len(t) - 1
    grid = TimeGrid(float(t[-1]), steps)
    if not np.allclose(t, grid.times, rtol=1e-8, atol=1e-8 * grid.T):
        raise ValidationError(f"{path}: time column is not a uniform grid starting at 0")
    return Recording(grid, sensors, np.ascontiguousarray(data[:, 1:].T), c=c, noise_level=noise_level)


def _read_numeric_rows(path, width):
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if lineno == 1 and row and not _is_number(row[0]):
                continue
            if not row:
                continue
            if len(row) != width:
                raise ValidationError(f"{path}:{lineno}: expected {width} columns")
            rows.append([float(v) for v in row])
    return rows


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False
