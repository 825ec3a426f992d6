import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wavesrc import signal as sg
from wavesrc.errors import ValidationError


def standard_pulse(t):
    return math.exp(-0.01 * (t - 3) ** 2) * math.sin(t) if t >= 0 else 0.0


def test_standard_pulse_values():
    p = sg.Signal.standard_pulse()
    assert sg.evaluate(p, -1.0) == 0.0
    assert sg.evaluate(p, 3.0) == pytest.approx(math.sin(3.0), abs=1e-15)
    assert sg.evaluate(p, 3.0) == pytest.approx(0.141120, abs=1e-6)
    assert abs(sg.evaluate(p, math.pi)) < 1e-12


def test_standard_pulse_against_scalar_formula():
    p = sg.Signal.standard_pulse()
    t = np.linspace(-2, 15, 1001)
    np.testing.assert_allclose(sg.evaluate(p, t), [standard_pulse(x) for x in t], rtol=1e-13, atol=1e-15)


def test_onsets():
    assert sg.onset(sg.Signal.standard_pulse()) == 0.0
    t = np.linspace(0, 15, 3001)
    table = sg.Signal.custom(t + 2.0, [standard_pulse(x) for x in t])
    assert sg.onset(table) == pytest.approx(2.0 + t[1])
    assert sg.onset(sg.Signal.standard_pulse(delay=1.5)) == 1.5


def test_custom_zero_table_rejected():
    with pytest.raises(ValidationError):
        sg.Signal.custom([0, 1, 2], [0, 0, 0])


def test_custom_table_interpolates_linearly():
    s = sg.Signal.custom([0.0, 1.0, 2.0], [1.0, 3.0, 1.0])
    assert sg.evaluate(s, 0.25) == pytest.approx(1.5)
    assert sg.evaluate(s, 1.5) == pytest.approx(2.0)
    assert sg.evaluate(s, 3.0) == 0.0


def test_custom_onset_is_first_nonzero_sample():
    s = sg.Signal.custom([0.0, 1.0, 2.0], [0.0, 2.0, 0.0])
    assert sg.onset(s) == 1.0
    assert sg.evaluate(s, 0.5) == 0.0
    assert sg.evaluate(s, 1.5) == pytest.approx(1.0)


def test_custom_requires_increasing_times():
    with pytest.raises(ValidationError):
        sg.Signal.custom([0.0, 2.0, 1.0], [0.0, 1.0, 1.0])


def test_signal_silent_after_onset_rejected():
    # a blip shorter than the scan step, then silence for seconds
    with pytest.raises(ValidationError):
        sg.Signal.custom([0.0, 1e-5, 2e-5, 5.0, 6.0], [0.0, 1.0, 0.0, 0.0, 1.0])
    with pytest.raises(ValidationError):
        sg.Signal.gaussian_modulated(center=1.0, width=-1.0, carrier=2.0)


def test_csv_round_trip(tmp_path):
    grid = sg.TimeGrid(5.0, 500)
    path = sg.save_csv(sg.Signal.standard_pulse(), tmp_path / "pulse.csv", grid)
    loaded = sg.Signal.from_csv(path)
    t = np.linspace(0.1, 4.9, 77)
    np.testing.assert_allclose(sg.evaluate(loaded, t), [standard_pulse(x) for x in t], atol=2e-5)


def test_time_grid():
    g = sg.TimeGrid(15.0, 32768)
    assert len(g) == 32769
    assert g.times[0] == 0.0 and g.times[-1] == 15.0
    assert g.dt == pytest.approx(15.0 / 32768)
    assert np.all(np.diff(g.times) > 0)
    with pytest.raises(ValidationError):
        sg.TimeGrid(0.0, 10)
    with pytest.raises(ValidationError):
        sg.TimeGrid(1.0, 0)


@given(st.sampled_from(["standard", "gaussian", "custom"]), st.floats(0, 5), st.integers(0, 2**31))
def test_causality(kind, delay, seed):
    if kind == "standard":
        s = sg.Signal.standard_pulse(delay)
    elif kind == "gaussian":
        s = sg.Signal.gaussian_modulated(2.0, 1.0, 3.0, delay)
    else:
        t = np.linspace(0, 4, 401)
        s = sg.Signal.custom(t, np.sin(t) * np.exp(-t), delay)
    rng = np.random.default_rng(seed)
    t = sg.onset(s) - rng.uniform(1e-9, 20, 1000)
    assert np.all(sg.evaluate(s, t) == 0.0)
    probe = sg.onset(s) + np.arange(1, 1001) * 1e-4
    assert np.max(np.abs(sg.evaluate(s, probe))) > 0
