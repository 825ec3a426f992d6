"""Noise injection and first-arrival picking."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ValidationError
from .forward import Recording, SensorArray

DEFAULT_ETA = 1e-3


@dataclass(frozen=True, eq=False)
class ArrivalSet:
    """Per-sensor first-arrival times; ``NaN`` marks "no arrival detected".

    ``level`` is the threshold fraction actually applied (``max(eta, eps)``)
    and ``u_max`` the amplitude it was measured against.
    """

    sensors: SensorArray
    times: np.ndarray
    eta: float
    level: float
    u_max: float
    bias_correction: float = 0.0

    def __post_init__(self):
        if self.times.shape != (len(self.sensors),):
            raise ValidationError("one arrival per sensor expected")
        if self.u_max < 0:
            raise ValidationError("u_max must be nonnegative")

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.times)

    def usable(self):
        """``(positions, arrival times)`` of the sensors that detected a wave."""
        m = self.present
        return self.sensors.positions[m], self.times[m]

    def __len__(self):
        return len(self.times)


def add_noise(rec: Recording, epsilon: float, seed: int | None) -> Recording:
    """``u + epsilon * r * u_max`` with ``r ~ U[-1, 1]`` i.i.d. from ``seed``."""
    if not epsilon >= 0:
        raise ValidationError(f"noise level must be nonnegative, got {epsilon}")
    u_max = rec.u_max
    if epsilon == 0:
        return rec.with_values(rec.values.copy(), noise_level=0.0, seed=seed, reference_max=u_max)
    rng = np.random.default_rng(seed)
    r = rng.uniform(-1.0, 1.0, size=rec.values.shape)
    return rec.with_values(rec.values + epsilon * r * u_max, noise_level=float(epsilon),
                           seed=seed, reference_max=u_max)


def detect_arrivals(rec: Recording, eta: float = DEFAULT_ETA, bias_correction: float = 0.0,
                    backend=None) -> ArrivalSet:
    """First ``t_k`` with ``|u(x_i, t_k)| > max(eta, eps) * u_max`` per sensor.

    ``u_max`` is the clean maximum when the recording knows it, otherwise the
    maximum of the (possibly noisy) samples themselves.
    """
    if not 0 < eta < 1:
        raise ValidationError(f"detection threshold eta must lie in (0, 1), got {eta}")
    u_max = rec.reference_max if rec.reference_max is not None else rec.u_max
    level = max(float(eta), float(rec.noise_level))
    idx = kernels.first_crossing(rec.values, level * u_max, backend=backend)
    times = np.where(idx >= 0, rec.times[np.maximum(idx, 0)], np.nan) - bias_correction
    return ArrivalSet(rec.sensors, times, float(eta), level, float(u_max), float(bias_correction))


def save_arrivals(arr: ArrivalSet, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x1", "x2", "x3", "arrival"])
        for i, (p, t) in enumerate(zip(arr.sensors.positions, arr.times)):
            w.writerow([i] + [f"{v:.9g}" for v in p] + ["NA" if np.isnan(t) else f"{t:.12g}"])
    return path


def load_arrivals(path, radius_hint=None) -> ArrivalSet:
    pos, times = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "x1", "x2", "x3", "arrival"]:
            raise ValidationError(f"{path}: header must read index,x1,x2,x3,arrival")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                pos.append([float(v) for v in row[1:4]])
                times.append(np.nan if row[4].strip().upper() == "NA" else float(row[4]))
            except (ValueError, IndexError):
                raise ValidationError(f"{path}:{lineno}: malformed arrival row") from None
    pos = np.array(pos)
    if radius_hint is None:
        radius_hint = float(np.max(np.linalg.norm(pos, axis=1)))
    return ArrivalSet(SensorArray(pos, radius_hint), np.array(times), float("nan"),
                      float("nan"), 0.0)
