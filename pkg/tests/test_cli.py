import json
import subprocess
import sys

import numpy as np
import pytest

from wavesrc import cli, reconstruct


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert cli.main(["simulate", "--scenario", "example1", "--out", str(out)]) == 0
    return out


def _grid_args(n=80):
    return ["--grid", "plane", "--lower", "-2", "-2", "--upper", "2", "2", "--n", str(n)]


def test_simulate_outputs(sim):
    header = (sim / "recordings.csv").open().readline().strip().split(",")
    assert header[0] == "t" and len(header) == 65
    data = np.loadtxt(sim / "recordings.csv", delimiter=",", skiprows=1)
    assert data.shape == (32769, 65)  # t_0 .. t_N
    man = json.loads((sim / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 1001


def test_missing_scenario_flag(capsys):
    with pytest.raises(SystemExit) as ei:
        cli.main(["simulate", "--out", "x"])
    assert ei.value.code == 2
    assert "--scenario" in capsys.readouterr().err


def test_unknown_scenario_exit_2(tmp_path, capsys):
    assert cli.main(["simulate", "--scenario", "nope", "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_override_noise_free(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--scenario", "example1", "--override", "noise.epsilon=0",
                     "--out", str(a)]) == 0
    assert cli.main(["simulate", "--scenario", "example1", "--param", "noise.epsilon=0",
                     "--seed", "5", "--out", str(b)]) == 0
    man = json.loads((a / "manifest.json").read_text())
    assert man["parameters"]["noise"]["epsilon"] == 0
    # with no noise the seed is irrelevant
    assert (a / "recordings.csv").read_bytes() == (b / "recordings.csv").read_bytes()


def test_pick_then_reconstruct(sim, tmp_path):
    pick = tmp_path / "pick"
    assert cli.main(["pick", "--recordings", str(sim / "recordings.csv"), "--sensors",
                     str(sim / "sensors.csv"), "--epsilon", "0.05", "--out", str(pick)]) == 0
    man = json.loads((pick / "manifest.json").read_text())
    assert man["parameters"]["level"] == 0.05
    rec = tmp_path / "rec"
    assert cli.main(["reconstruct", "--arrivals", str(pick / "arrivals.csv"), *_grid_args(),
                     "--cap", "50", "--peaks", "2", "--threshold", "quantile:0.999",
                     "--out", str(rec)]) == 0
    assert (rec / "field.csv").exists()
    assert reconstruct.read_pgm(rec / "field.pgm").shape == (80, 80)
    xyz = np.loadtxt(rec / "points.xyz", ndmin=2)
    assert len(xyz) == int(np.ceil(0.001 * 6400)) or len(xyz) >= 1
    assert np.all(np.diff(xyz[:, 3]) <= 0)
    peaks = np.loadtxt(rec / "peaks.csv", delimiter=",", skiprows=1, ndmin=2)[:, 1:4]
    truth = np.array([[0, 1, 0], [0, -1, 0]])
    assert np.all(np.linalg.norm(peaks[:, None] - truth[None], axis=2).min(axis=0) <= 0.15)


def test_reconstruct_from_recordings_is_deterministic(sim, tmp_path):
    outs = []
    for name in ("x", "y"):
        out = tmp_path / name
        assert cli.main(["reconstruct", "--recordings", str(sim / "recordings.csv"), "--sensors",
                         str(sim / "sensors.csv"), "--epsilon", "0.05", *_grid_args(),
                         "--log-scale", "--out", str(out)]) == 0
        outs.append(out)
    assert (outs[0] / "field.pgm").read_bytes() == (outs[1] / "field.pgm").read_bytes()
    assert (outs[0] / "field.csv").read_bytes() == (outs[1] / "field.csv").read_bytes()


def test_sqrt_and_abs_saturate_same_cells(sim, tmp_path):
    fields = {}
    for kernel in ("sqrt", "abs"):
        out = tmp_path / kernel
        assert cli.main(["reconstruct", "--recordings", str(sim / "recordings.csv"), "--sensors",
                         str(sim / "sensors.csv"), *_grid_args(), "--kernel", kernel,
                         "--cap", "1e6", "--out", str(out)]) == 0
        fields[kernel] = np.loadtxt(out / "field.csv", delimiter=",", skiprows=1)[:, 3]
    assert np.array_equal(fields["sqrt"] >= 1e6, fields["abs"] >= 1e6)


def test_box_grid_skips_pgm(sim, tmp_path):
    out = tmp_path / "box"
    assert cli.main(["reconstruct", "--recordings", str(sim / "recordings.csv"), "--sensors",
                     str(sim / "sensors.csv"), "--grid", "box", "--lower", "-1", "-1", "-1",
                     "--upper", "1", "1", "1", "--n", "6", "--out", str(out)]) == 0
    assert (out / "field.csv").exists() and not (out / "field.pgm").exists()


def test_carve_disk(tmp_path):
    run = tmp_path / "run"
    assert cli.main(["run", "--scenario", "disk_carve", "--out", str(run)]) == 0
    out = tmp_path / "carve"
    assert cli.main(["carve", "--arrivals", str(run / "arrivals.csv"), *_grid_args(200),
                     "--margin", "0.15", "--out", str(out)]) == 0
    kept = np.loadtxt(out / "carve.csv", delimiter=",", skiprows=1)
    pts, flag = kept[:, :3], kept[:, 3].astype(bool)
    inside = np.linalg.norm(pts, axis=1) <= 1
    assert np.all(flag[inside])
    # detected arrivals plus the 0.15 margin leave a thin rim around the disk
    assert np.count_nonzero(flag & ~inside) * (4 / 199) ** 2 <= 0.15 * np.pi
    assert reconstruct.read_pgm(out / "carve.pgm").shape == (200, 200)


def test_empty_arrivals_exit_2(tmp_path, capsys):
    arr = tmp_path / "arrivals.csv"
    arr.write_text("index,x1,x2,x3,arrival\n0,3.5,0,0,NA\n")
    assert cli.main(["reconstruct", "--arrivals", str(arr), *_grid_args(10),
                     "--out", str(tmp_path / "o")]) == 2
    assert "no sensor has a usable arrival" in capsys.readouterr().err


def test_missing_input_file_exit_2(tmp_path):
    assert cli.main(["carve", "--arrivals", str(tmp_path / "none.csv"), *_grid_args(10),
                     "--out", str(tmp_path / "o")]) == 2


def test_bad_threshold_spec(capsys):
    with pytest.raises(SystemExit) as ei:
        cli.main(["reconstruct", "--arrivals", "a.csv", *_grid_args(10), "--threshold", "top:3",
                  "--out", "o"])
    assert ei.value.code == 2


def test_list_scenarios(capsys):
    assert cli.main(["list-scenarios"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 15 and lines[0].startswith("disk_carve")


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "wavesrc.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("wavesrc ")
