import json
import os
import subprocess
import sys

import numpy as np
import pytest

from wavesrc import _accel, kernels
from wavesrc.signal import Signal, TimeGrid

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba unavailable")


def test_indicator_backends_agree(rng):
    pts = rng.uniform(-3, 3, (5000, 3))
    sens = rng.uniform(-5, 5, (40, 3))
    radii = rng.uniform(0, 8, 40)
    for k in (kernels.KERNEL_ABS, kernels.KERNEL_SQRT):
        a = kernels.indicator_sum(pts, sens, radii, k, 1e6, backend="numba")
        b = kernels.indicator_sum(pts, sens, radii, k, 1e6, backend="numpy")
        np.testing.assert_allclose(a, b, rtol=1e-13)


def test_carve_and_crossing_backends_identical(rng):
    pts = rng.uniform(-3, 3, (5000, 3))
    sens = rng.uniform(-5, 5, (40, 3))
    radii = rng.uniform(0, 8, 40)
    assert np.array_equal(kernels.carve_mask(pts, sens, radii, 0.1, backend="numba"),
                          kernels.carve_mask(pts, sens, radii, 0.1, backend="numpy"))
    vals = rng.normal(size=(30, 400))
    assert np.array_equal(kernels.first_crossing(vals, 2.5, backend="numba"),
                          kernels.first_crossing(vals, 2.5, backend="numpy"))
    assert kernels.first_crossing(np.zeros((2, 5)), 0.0).tolist() == [-1, -1]


@pytest.mark.parametrize("sig", [Signal.standard_pulse(), Signal.gaussian_modulated(3.0, 3.0, 1.5, 0.5),
                                 Signal.custom([0, 1, 2, 3], [0, 1, -1, 0], delay=0.5)])
def test_forward_backends_agree(rng, sig):
    grid = TimeGrid(15.0, 32768)
    dist = rng.uniform(1.5, 8, (6, 25))
    amp = rng.uniform(0.1, 1, (6, 25))
    args = (dist, amp, grid.times, 1.0, sig.onset, *sig.kernel_args())
    a = kernels.forward_sum(*args, backend="numba")
    b = kernels.forward_sum(*args, backend="numpy")
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-10 * np.abs(b).max())


def test_numpy_fallback_end_to_end(tmp_path):
    """The same run under WAVESRC_NUMBA=0 reproduces the numba outputs."""
    def run(flag, out):
        env = dict(os.environ, WAVESRC_NUMBA=flag)
        res = subprocess.run([sys.executable, "-m", "wavesrc.cli", "run", "--scenario", "example1",
                              "--override", "grid.n=60", "--out", str(out)],
                             env=env, capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        return json.loads((out / "manifest.json").read_text())

    ma = run("1", tmp_path / "nb")
    mb = run("0", tmp_path / "np")
    assert (ma["backend"], mb["backend"]) == ("numba", "numpy")
    ta = np.loadtxt(tmp_path / "nb" / "arrivals.csv", delimiter=",", skiprows=1)
    tb = np.loadtxt(tmp_path / "np" / "arrivals.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(ta, tb)
    fa = np.loadtxt(tmp_path / "nb" / "field.csv", delimiter=",", skiprows=1)
    fb = np.loadtxt(tmp_path / "np" / "field.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(fa, fb, rtol=1e-8)
    assert (tmp_path / "nb" / "peaks.csv").read_text() == (tmp_path / "np" / "peaks.csv").read_text()


def test_thread_limit():
    assert _accel.set_threads(1) == 1
    assert _accel.get_threads() == 1
    _accel.set_threads(None)


@pytest.mark.parametrize("backend", ["numba", "numpy"])
@pytest.mark.parametrize("sig", [Signal.standard_pulse(), Signal.standard_pulse(0.7),
                                 Signal.gaussian_modulated(3.0, 3.0, 1.5, 0.5),
                                 Signal.gaussian_modulated(2.0, 0.3, 4.0, 0.2)])  # last: direct fallback
def test_separable_forward_matches_direct(rng, sig, backend):
    grid = TimeGrid(15.0, 32768)
    dist = rng.uniform(1.5, 8, (4, 200))
    amp = rng.uniform(0.1, 1, (4, 200))
    args = (dist, amp, grid.times, 1.0, sig.onset, *sig.kernel_args())
    ref = kernels.forward_sum(*args, backend="numpy", direct=True)
    fast = kernels.forward_sum(*args, backend=backend)
    np.testing.assert_allclose(fast, ref, rtol=0, atol=1e-13 * np.abs(ref).max())
    # causality is exact: nothing before the first delay
    first = np.searchsorted(grid.times, dist.min(axis=1) + sig.onset)
    for i, k in enumerate(first):
        assert np.all(fast[i, :k] == 0.0)
