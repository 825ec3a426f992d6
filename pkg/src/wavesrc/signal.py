"""Causal excitation signals and the sampling time grid."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ValidationError

ONSET_TOL = 1e-12
_SCAN_STEP = 1e-4
_SCAN_SPAN = 0.1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k T / N_T`` for ``k = 0..N_T``."""

    T: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValidationError(f"terminal time must be positive, got {self.T}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValidationError(f"step count must be a positive integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.T / self.steps

    def __len__(self):
        return self.steps + 1


@dataclass(frozen=True, eq=False)
class Signal:
    """A causal signal ``lambda(t)``.

    ``kind`` is ``"standard"`` (``exp(-0.01 (t-3)^2) sin t`` for ``t >= 0``),
    ``"gaussian"`` (``exp(-((t-center)/width)^2) sin(carrier t)`` for
    ``t >= 0``) or ``"custom"`` (linear interpolation of a sample table).
    Any kind can be shifted right by ``delay``.
    """

    kind: str
    params: tuple = ()
    delay: float = 0.0
    table_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    table_v: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.kind not in ("standard", "gaussian", "custom"):
            raise ValidationError(f"unknown signal kind {self.kind!r}")
        if not np.isfinite(self.delay):
            raise ValidationError("signal delay must be finite")
        if self.kind == "custom":
            t = np.asarray(self.table_t, dtype=float)
            v = np.asarray(self.table_v, dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size < 2:
                raise ValidationError("custom signal needs matching 1-D tables of length >= 2")
            if np.any(np.diff(t) <= 0):
                raise ValidationError("custom signal times must be strictly increasing")
            t.flags.writeable = False
            v.flags.writeable = False
            object.__setattr__(self, "table_t", t)
            object.__setattr__(self, "table_v", v)
        if self.kind == "gaussian":
            center, width, carrier = self.params
            if width <= 0 or carrier <= 0:
                raise ValidationError("gaussian signal needs width > 0 and carrier > 0")
        self._check_activity()

    # constructors ---------------------------------------------------------
    @classmethod
    def standard_pulse(cls, delay: float = 0.0) -> "Signal":
        return cls("standard", delay=float(delay))

    @classmethod
    def gaussian_modulated(cls, center, width, carrier, delay=0.0) -> "Signal":
        return cls("gaussian", (float(center), float(width), float(carrier)), float(delay))

    @classmethod
    def custom(cls, times, values, delay=0.0) -> "Signal":
        return cls("custom", delay=float(delay), table_t=np.array(times, float),
                   table_v=np.array(values, float))

    @classmethod
    def from_csv(cls, path, delay=0.0) -> "Signal":
        """Load a two-column ``t,value`` table; a non-numeric header row is skipped."""
        rows = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if not row or not "".join(row).strip():
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if rows or lineno > 1:
                        raise ValidationError(f"{path}:{lineno}: expected 't,value'")
        if not rows:
            raise ValidationError(f"{path}: empty signal table")
        arr = np.array(rows)
        return cls.custom(arr[:, 0], arr[:, 1], delay)

    # evaluation -----------------------------------------------------------
    def kernel_args(self):
        """``(code, params, table_t, table_v)`` for :mod:`wavesrc.kernels`."""
        if self.kind == "custom":
            params = np.array([self.delay, self._table_onset()])
            return kernels.SIG_TABLE, params, self.table_t, self.table_v
        if self.kind == "standard":
            amp, rate, center, omega = 1.0, 0.01, 3.0, 1.0
        else:
            center, width, omega = self.params
            amp, rate = 1.0, 1.0 / width**2
        params = np.array([self.delay, amp, rate, center, omega, 0.0])
        return kernels.SIG_GAUSS_SINE, params, np.empty(0), np.empty(0)

    def __call__(self, t):
        return evaluate(self, t)

    @property
    def onset(self) -> float:
        if self.kind == "custom":
            return self.delay + self._table_onset()
        return self.delay

    def _table_onset(self) -> float:
        nz = np.flatnonzero(np.abs(self.table_v) > ONSET_TOL)
        if nz.size == 0:
            raise ValidationError("custom signal is identically zero; it has no onset")
        return float(self.table_t[nz[0]])

    def _check_activity(self):
        start = self.onset
        probe = start + _SCAN_STEP * np.arange(1, int(round(_SCAN_SPAN / _SCAN_STEP)) + 1)
        if not np.any(np.abs(evaluate(self, probe)) > 0):
            raise ValidationError(
                f"signal vanishes on ({start}, {start + _SCAN_SPAN}]; onset is not well defined"
            )

    def describe(self) -> dict:
        out = {"kind": self.kind, "delay": self.delay}
        if self.kind == "gaussian":
            out.update(zip(("center", "width", "carrier"), self.params))
        return out


def evaluate(signal: Signal, t):
    """Evaluate ``signal`` at scalar or array ``t``; zero before the onset."""
    code, params, tt, tv = signal.kernel_args()
    out = kernels.signal_values_np(code, params, tt, tv, t)
    out = np.where(np.asarray(t, float) < signal.onset, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def onset(signal: Signal) -> float:
    return signal.onset


def save_csv(signal: Signal, path, grid: TimeGrid) -> Path:
    path = Path(path)
    t = grid.times
    np.savetxt(path, np.column_stack([t, evaluate(signal, t)]), delimiter=",",
               header="t,value", comments="", fmt="%.9g")
    return path
