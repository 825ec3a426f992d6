"""Hot loops: retarded-potential summation, indicator sums, ball carving and
threshold-crossing detection.

Every kernel has a numba implementation (``*_nb``) and a numpy fallback
(``*_np``).  The public wrappers dispatch on :func:`wavesrc._accel.backend`.
Both paths accumulate per-sensor / per-node contributions in the same order.
Gaussian-sine forward sums use a separable Taylor expansion of the
delay/time coupling with prefix sums over delay-sorted nodes (truncation
below 1e-17 relative); the direct per-node fallback advances the signal by
recurrence between exact evaluations (~1e-12 relative).  The other kernels
agree to rounding of ``sqrt``.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import HAVE_NUMBA, njit, prange

# signal codes understood by the kernels
SIG_GAUSS_SINE = 0  # params: delay, amp, rate, center, omega, phase
SIG_TABLE = 1  # params: delay, onset; plus table times/values

_RESYNC = 64  # recurrence length between exact evaluations
_SEP_MAX_X = 6.0  # largest Taylor argument accepted by the separable forward sum
_SEP_MAX_TERMS = 60

KERNEL_SQRT = 0
KERNEL_ABS = 1


# ---------------------------------------------------------------------------
# signal evaluation
# ---------------------------------------------------------------------------

@njit
def _signal_scalar(code, params, tab_t, tab_v, t):
    s = t - params[0]
    if code == SIG_GAUSS_SINE:
        if s < 0.0:
            return 0.0
        u = s - params[3]
        return params[1] * math.exp(-params[2] * u * u) * math.sin(params[4] * s + params[5])
    if tab_t.size == 0 or s < params[1] or s > tab_t[-1]:
        return 0.0
    j = np.searchsorted(tab_t, s, side="right")
    if j == 0:
        return 0.0
    if j >= tab_t.size:
        return tab_v[-1]
    t0 = tab_t[j - 1]
    t1 = tab_t[j]
    w = (s - t0) / (t1 - t0)
    return tab_v[j - 1] + w * (tab_v[j] - tab_v[j - 1])


def signal_values_np(code, params, tab_t, tab_v, t):
    """Vectorised twin of the scalar kernel signal evaluation."""
    t = np.asarray(t, dtype=float)
    s = t - params[0]
    if code == SIG_GAUSS_SINE:
        u = s - params[3]
        v = params[1] * np.exp(-params[2] * u * u) * np.sin(params[4] * s + params[5])
        return np.where(s < 0.0, 0.0, v)
    v = np.interp(s, tab_t, tab_v, left=0.0, right=0.0)
    return np.where(s < params[1], 0.0, v)


# ---------------------------------------------------------------------------
# forward summation
# ---------------------------------------------------------------------------

@njit
def _gauss_sine_row(row, times, dt, a_node, delay, k0, params):
    # lambda(s) = amp exp(-rate (s - center)^2) sin(omega s + phase), advanced by
    # multiplicative recurrences and re-evaluated exactly every _RESYNC samples
    amp = params[1]
    rate = params[2]
    center = params[3]
    omega = params[4]
    phase = params[5]
    shift = delay + params[0]
    n_t = times.size
    step_sq = math.exp(-2.0 * rate * dt * dt)
    cw = math.cos(omega * dt)
    sw = math.sin(omega * dt)
    k = k0
    while k < n_t:
        s = times[k] - shift
        if s < 0.0:
            k += 1
            continue
        u = s - center
        g = amp * math.exp(-rate * u * u)
        ratio = math.exp(-rate * (2.0 * u * dt + dt * dt))
        sn = math.sin(omega * s + phase)
        cs = math.cos(omega * s + phase)
        stop = min(k + _RESYNC, n_t)
        while k < stop:
            row[k] += a_node * g * sn
            g *= ratio
            ratio *= step_sq
            sn, cs = sn * cw + cs * sw, cs * cw - sn * sw
            k += 1


@njit
def _expansion_plan(dmin, dmax, t_last, params):
    """Order and centres of the separable expansion for one sensor.

    With ``v = t - delay - center`` the Gaussian-sine kernel factors as
    ``f(v) g(d) exp(2 rate (v - v0)(d - d0))``; the last factor is expanded
    in a Taylor series.  Returns ``(K, v0, d0)``; ``K = 0`` means no sample
    is reached, ``K = -1`` that the expansion is not accurate enough and the
    direct sum should be used.
    """
    rate = params[2]
    v_lo = dmin - params[3]
    v_hi = t_last - params[0] - params[3]
    if v_hi < v_lo:
        return 0, 0.0, 0.0
    v0 = 0.5 * (v_lo + v_hi)
    d0 = 0.5 * (dmin + dmax)
    x = 0.5 * rate * (v_hi - v_lo) * (dmax - dmin)
    if x > _SEP_MAX_X or rate * (d0 * d0 + v0 * v0 + 2.0 * abs(v0 * d0)) > 600.0:
        return -1, v0, d0
    bound = math.exp(x)
    term = 1.0
    n = 0
    while term * bound > 1e-17:
        n += 1
        term *= x / n
        if n >= _SEP_MAX_TERMS:
            return -1, v0, d0
    return n + 1, v0, d0


@njit
def _gauss_sine_separable(row, times, d_sorted, a_sorted, params, n_terms, v0, d0):
    # row[k] = sum over nodes with t_k - (d + delay) >= 0 of a * lambda(t_k - d),
    # accumulated as prefix sums of per-node coefficients in delay order
    delay = params[0]
    amp = params[1]
    rate = params[2]
    center = params[3]
    omega = params[4]
    phase = params[5]
    coef = np.zeros(n_terms, dtype=np.complex128)
    n_nodes = d_sorted.size
    j = 0
    for k in range(times.size):
        t = times[k]
        while j < n_nodes and t - (d_sorted[j] + delay) >= 0.0:
            d = d_sorted[j]
            mag = a_sorted[j] * amp * math.exp(-rate * d * d + 2.0 * rate * v0 * (d - d0))
            base = complex(mag * math.cos(omega * d), -mag * math.sin(omega * d))
            p = 1.0
            for n in range(n_terms):
                coef[n] += base * p
                p *= d - d0
            j += 1
        if j == 0:
            continue
        tau = t - delay
        v = tau - center
        mag = math.exp(-rate * v * v + 2.0 * rate * v * d0)
        f = complex(mag * math.cos(omega * tau + phase), mag * math.sin(omega * tau + phase))
        step = 2.0 * rate * (v - v0)
        acc = 0.0 + 0.0j
        for n in range(n_terms):
            acc += f * coef[n]
            f *= step / (n + 1)
        row[k] = acc.imag


@njit(parallel=True)
def _forward_nb(dist, amp, times, c, start, code, params, tab_t, tab_v, direct):
    n_sensors, n_nodes = dist.shape
    n_t = times.size
    dt = times[1] - times[0] if n_t > 1 else 1.0
    out = np.zeros((n_sensors, n_t))
    for i in prange(n_sensors):
        delays = dist[i] / c
        if code == SIG_GAUSS_SINE and not direct:
            order = np.argsort(delays, kind="mergesort")
            d_sorted = delays[order]
            n_terms, v0, d0 = _expansion_plan(d_sorted[0], d_sorted[-1], times[-1], params)
            if n_terms == 0:
                continue
            if n_terms > 0:
                _gauss_sine_separable(out[i], times, d_sorted, amp[i][order], params, n_terms, v0, d0)
                continue
        for q in range(n_nodes):
            delay = delays[q]
            a = amp[i, q]
            k0 = np.searchsorted(times, delay + start)
            if code == SIG_GAUSS_SINE:
                _gauss_sine_row(out[i], times, dt, a, delay, k0, params)
            else:
                for k in range(k0, n_t):
                    out[i, k] += a * _signal_scalar(code, params, tab_t, tab_v, times[k] - delay)
    return out


def _gauss_sine_separable_np(times, delays, amp, params):
    delay, a_sig, rate, center, omega, phase = params
    order = np.argsort(delays, kind="mergesort")
    d = delays[order]
    n_terms, v0, d0 = _expansion_plan_py(d[0], d[-1], times[-1], params)
    if n_terms <= 0:
        return None if n_terms < 0 else np.zeros(times.size)
    n = np.arange(n_terms)
    mag = amp[order] * a_sig * np.exp(-rate * d * d + 2.0 * rate * v0 * (d - d0))
    base = mag * (np.cos(omega * d) - 1j * np.sin(omega * d))
    coef = np.cumsum(base[:, None] * (d - d0)[:, None] ** n[None, :], axis=0)
    active = np.searchsorted(d + delay, times, side="right")
    tau = times - delay
    v = tau - center
    fmag = np.exp(-rate * v * v + 2.0 * rate * v * d0)
    f0 = fmag * (np.cos(omega * tau + phase) + 1j * np.sin(omega * tau + phase))
    fact = np.cumprod(np.concatenate([[1.0], 1.0 / np.arange(1, n_terms)]))
    f = f0[:, None] * (2.0 * rate * (v - v0))[:, None] ** n[None, :] * fact[None, :]
    row = np.zeros(times.size)
    hit = active > 0
    row[hit] = np.sum(f[hit] * coef[active[hit] - 1], axis=1).imag
    return row


def _expansion_plan_py(dmin, dmax, t_last, params):
    plan = _expansion_plan(float(dmin), float(dmax), float(t_last), np.asarray(params, dtype=float))
    return int(plan[0]), float(plan[1]), float(plan[2])


def _forward_np(dist, amp, times, c, start, code, params, tab_t, tab_v, direct):
    n_sensors, n_nodes = dist.shape
    out = np.zeros((n_sensors, times.size))
    todo = list(range(n_sensors))
    if code == SIG_GAUSS_SINE and not direct:
        todo = []
        for i in range(n_sensors):
            row = _gauss_sine_separable_np(times, dist[i] / c, amp[i], params)
            if row is None:
                todo.append(i)
            else:
                out[i] = row
    if todo:
        rows = np.asarray(todo)
        for q in range(n_nodes):
            delay = dist[rows, q] / c
            out[rows] += amp[rows, q, None] * signal_values_np(
                code, params, tab_t, tab_v, times[None, :] - delay[:, None]
            )
    return out


def forward_sum(dist, amp, times, c, start, code, params, tab_t, tab_v, backend=None, direct=False):
    """``out[i, k] = sum_q amp[i, q] * signal(times[k] - dist[i, q] / c)``.

    ``start`` is the signal onset; samples earlier than ``dist / c + start``
    are skipped since the signal vanishes there.  Gaussian-sine signals are
    summed through a separable expansion (cost per sensor ~ nodes + samples)
    unless ``direct`` is set or the expansion would lose accuracy.
    """
    args = (
        np.ascontiguousarray(dist, dtype=float),
        np.ascontiguousarray(amp, dtype=float),
        np.ascontiguousarray(times, dtype=float),
        float(c),
        float(start),
        int(code),
        np.ascontiguousarray(params, dtype=float),
        np.ascontiguousarray(tab_t, dtype=float),
        np.ascontiguousarray(tab_v, dtype=float),
        bool(direct),
    )
    if _use_numba(backend):
        return _forward_nb(*args)
    return _forward_np(*args)


# ---------------------------------------------------------------------------
# indicator
# ---------------------------------------------------------------------------

@njit(parallel=True)
def _indicator_nb(points, sensors, radii, kernel, cap):
    n = points.shape[0]
    m = sensors.shape[0]
    out = np.empty(n)
    for p in prange(n):
        z0 = points[p, 0]
        z1 = points[p, 1]
        z2 = points[p, 2]
        acc = 0.0
        for i in range(m):
            d0 = z0 - sensors[i, 0]
            d1 = z1 - sensors[i, 1]
            d2 = z2 - sensors[i, 2]
            d = abs(math.sqrt(d0 * d0 + d1 * d1 + d2 * d2) - radii[i])
            if d <= 0.0:
                v = cap
            elif kernel == KERNEL_SQRT:
                v = min(1.0 / math.sqrt(d), cap)
            else:
                v = min(1.0 / d, cap)
            acc += v
        out[p] = acc
    return out


def _indicator_np(points, sensors, radii, kernel, cap, chunk=1 << 20):
    n = points.shape[0]
    out = np.empty(n)
    with np.errstate(divide="ignore"):
        for lo in range(0, n, chunk):
            z = points[lo : lo + chunk]
            acc = np.zeros(z.shape[0])
            for i in range(sensors.shape[0]):
                d0 = z[:, 0] - sensors[i, 0]
                d1 = z[:, 1] - sensors[i, 1]
                d2 = z[:, 2] - sensors[i, 2]
                d = np.abs(np.sqrt(d0 * d0 + d1 * d1 + d2 * d2) - radii[i])
                v = 1.0 / np.sqrt(d) if kernel == KERNEL_SQRT else 1.0 / d
                acc += np.minimum(v, cap)
            out[lo : lo + chunk] = acc
    return out


def indicator_sum(points, sensors, radii, kernel, cap, backend=None):
    """Per-point sum over sensors of the capped reciprocal mismatch kernel."""
    args = (
        np.ascontiguousarray(points, dtype=float),
        np.ascontiguousarray(sensors, dtype=float),
        np.ascontiguousarray(radii, dtype=float),
        int(kernel),
        float(cap),
    )
    if _use_numba(backend):
        return _indicator_nb(*args)
    return _indicator_np(*args)


# ---------------------------------------------------------------------------
# carving
# ---------------------------------------------------------------------------

@njit(parallel=True)
def _carve_nb(points, sensors, radii, margin):
    n = points.shape[0]
    m = sensors.shape[0]
    kept = np.ones(n, dtype=np.bool_)
    for p in prange(n):
        for i in range(m):
            d0 = points[p, 0] - sensors[i, 0]
            d1 = points[p, 1] - sensors[i, 1]
            d2 = points[p, 2] - sensors[i, 2]
            if math.sqrt(d0 * d0 + d1 * d1 + d2 * d2) < radii[i] - margin:
                kept[p] = False
                break
    return kept


def _carve_np(points, sensors, radii, margin):
    kept = np.ones(points.shape[0], dtype=bool)
    for i in range(sensors.shape[0]):
        d0 = points[:, 0] - sensors[i, 0]
        d1 = points[:, 1] - sensors[i, 1]
        d2 = points[:, 2] - sensors[i, 2]
        kept &= ~(np.sqrt(d0 * d0 + d1 * d1 + d2 * d2) < radii[i] - margin)
    return kept


def carve_mask(points, sensors, radii, margin, backend=None):
    """True where a point lies outside every open ball ``B(x_i, R_i - margin)``."""
    args = (
        np.ascontiguousarray(points, dtype=float),
        np.ascontiguousarray(sensors, dtype=float),
        np.ascontiguousarray(radii, dtype=float),
        float(margin),
    )
    if _use_numba(backend):
        return _carve_nb(*args)
    return _carve_np(*args)


# ---------------------------------------------------------------------------
# threshold crossing
# ---------------------------------------------------------------------------

@njit(parallel=True)
def _first_crossing_nb(values, threshold):
    n, k = values.shape
    out = np.full(n, -1, dtype=np.int64)
    for i in prange(n):
        for j in range(k):
            if abs(values[i, j]) > threshold:
                out[i] = j
                break
    return out


def _first_crossing_np(values, threshold):
    above = np.abs(values) > threshold
    idx = np.argmax(above, axis=1).astype(np.int64)
    idx[~above.any(axis=1)] = -1
    return idx


def first_crossing(values, threshold, backend=None):
    """Index of the first sample with ``|v| > threshold`` per row, -1 if none."""
    values = np.ascontiguousarray(values, dtype=float)
    if _use_numba(backend):
        return _first_crossing_nb(values, float(threshold))
    return _first_crossing_np(values, float(threshold))


def _use_numba(backend):
    if backend is None:
        return HAVE_NUMBA
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    return backend == "numba"
