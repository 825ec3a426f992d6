"""Command-line entry point.

Subcommands::

    wavesrc simulate    --scenario S --out DIR         recordings.csv, sensors.csv
    wavesrc pick        --recordings R --sensors S     arrivals.csv
    wavesrc reconstruct (--arrivals A | --recordings R --sensors S) grid flags
    wavesrc carve       (--arrivals A | --recordings R --sensors S) grid flags
    wavesrc run         --scenario S --out DIR         full pipeline
    wavesrc list-scenarios

Exit status: 0 on success, 2 on invalid input, 1 on internal errors.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__, _accel, forward, measurement, reconstruct, scenario
from .errors import ValidationError

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _threshold(text):
    kind, _, value = text.partition(":")
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad threshold {text!r}; use abs:VALUE or quantile:Q") from None
    if kind in ("abs", "absolute"):
        return {"absolute": v}
    if kind in ("q", "quantile"):
        return {"quantile": v}
    raise argparse.ArgumentTypeError(f"bad threshold {text!r}; use abs:VALUE or quantile:Q")


def _add_scenario_args(p):
    p.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    p.add_argument("--override", "--param", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a scenario value, e.g. noise.epsilon=0")
    p.add_argument("--seed", type=int, help="replace the scenario seed")
    p.add_argument("--out", required=True, type=Path, help="output directory")


def _add_input_args(p):
    p.add_argument("--arrivals", type=Path, help="arrivals.csv from 'pick'")
    p.add_argument("--recordings", type=Path, help="recordings.csv (picked on the fly)")
    p.add_argument("--sensors", type=Path, help="sensors.csv matching the recordings")
    p.add_argument("--eta", type=float, default=measurement.DEFAULT_ETA)
    p.add_argument("--epsilon", type=float, default=0.0,
                   help="noise level of the recordings; the pick level is max(eta, epsilon)")
    p.add_argument("--onset", type=float, default=0.0, help="signal onset time")
    p.add_argument("-c", "--speed", type=float, default=1.0, help="sound speed")


def _add_grid_args(p):
    p.add_argument("--grid", choices=("plane", "box"), default="plane")
    p.add_argument("--lower", type=float, nargs="+", required=True)
    p.add_argument("--upper", type=float, nargs="+", required=True)
    p.add_argument("--n", type=int, nargs="+", required=True, help="points per axis")
    p.add_argument("--origin", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    p.add_argument("--e1", type=float, nargs=3, default=(1.0, 0.0, 0.0))
    p.add_argument("--e2", type=float, nargs=3, default=(0.0, 1.0, 0.0))
    p.add_argument("--out", required=True, type=Path)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="wavesrc", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"wavesrc {__version__}")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: $WAVESRC_THREADS or all cores)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="synthesize (noisy) sensor recordings")
    _add_scenario_args(p)

    p = sub.add_parser("pick", help="detect first arrivals in recordings")
    p.add_argument("--recordings", type=Path, required=True)
    p.add_argument("--sensors", type=Path, required=True)
    p.add_argument("--eta", type=float, default=measurement.DEFAULT_ETA)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--bias-correction", type=float, default=0.0)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("reconstruct", help="evaluate the sampling indicator on a grid")
    _add_input_args(p)
    _add_grid_args(p)
    p.add_argument("--kernel", choices=sorted(reconstruct.KERNELS), default="abs")
    p.add_argument("--cap", type=float, default=reconstruct.DEFAULT_CAP)
    p.add_argument("--threshold", type=_threshold, help="abs:VALUE or quantile:Q; writes points.xyz")
    p.add_argument("--peaks", type=int, help="write this many greedy local maxima to peaks.csv")
    p.add_argument("--min-separation", type=float, default=0.5)
    p.add_argument("--log-scale", action="store_true", help="log(1 + v) before PGM scaling")

    p = sub.add_parser("carve", help="remove arrival balls from a grid")
    _add_input_args(p)
    _add_grid_args(p)
    p.add_argument("--margin", type=float, default=reconstruct.DEFAULT_MARGIN)

    p = sub.add_parser("run", help="run a full scenario")
    _add_scenario_args(p)

    sub.add_parser("list-scenarios", help="list bundled scenarios")
    return ap


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load_scenario(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return scenario.load(args.scenario, overrides)


def cmd_simulate(args):
    scn = _load_scenario(args)
    args.out.mkdir(parents=True, exist_ok=True)
    timings = {}
    rec = scenario.simulate_stage(scn, timings=timings)
    files = {"sensors": forward.save_sensors(scn.sensors, args.out / "sensors.csv"),
             "recordings": forward.save_recording(rec, args.out / "recordings.csv")}
    res = scenario.RunResult(scn, rec, None, files=files, timings=timings, warnings=list(scn.warnings))
    man = scenario.manifest_for(scn, res, {"command": "simulate"})
    scenario.write_manifest(args.out / "manifest.json", man)
    _report(res.warnings, files)


def cmd_pick(args):
    sensors = forward.load_sensors(_existing(args.sensors))
    rec = forward.load_recording(_existing(args.recordings), sensors, noise_level=args.epsilon)
    t0 = time.perf_counter()
    arr = measurement.detect_arrivals(rec, args.eta, args.bias_correction)
    args.out.mkdir(parents=True, exist_ok=True)
    path = measurement.save_arrivals(arr, args.out / "arrivals.csv")
    _tool_manifest(args, {"arrivals": path}, {"pick": time.perf_counter() - t0},
                   {"eta": args.eta, "epsilon": args.epsilon, "level": arr.level, "u_max": arr.u_max,
                    "bias_correction": args.bias_correction,
                    "detected": int(np.count_nonzero(arr.present))})
    _report([], {"arrivals": path})


def _arrivals_from_args(args):
    if args.arrivals is not None:
        return measurement.load_arrivals(_existing(args.arrivals))
    if args.recordings is None or args.sensors is None:
        raise ValidationError("give --arrivals, or both --recordings and --sensors")
    sensors = forward.load_sensors(_existing(args.sensors))
    rec = forward.load_recording(_existing(args.recordings), sensors, c=args.speed,
                                 noise_level=args.epsilon)
    return measurement.detect_arrivals(rec, args.eta)


def _grid_from_args(args):
    dims = 2 if args.grid == "plane" else 3
    n = args.n * dims if len(args.n) == 1 else args.n
    if args.grid == "plane":
        return reconstruct.SamplingGrid.plane(args.lower, args.upper, n, args.origin, args.e1, args.e2)
    return reconstruct.SamplingGrid.box(args.lower, args.upper, n)


def cmd_reconstruct(args):
    arr = _arrivals_from_args(args)
    grid = _grid_from_args(args)
    t0 = time.perf_counter()
    field = reconstruct.indicator(arr, grid, args.onset, args.speed, args.kernel, args.cap)
    timings = {"indicator": time.perf_counter() - t0}
    args.out.mkdir(parents=True, exist_ok=True)
    files = {"field": reconstruct.save_field_csv(field, args.out / "field.csv")}
    if grid.mode == "plane":
        files["field_pgm"] = reconstruct.save_pgm(field.image(), args.out / "field.pgm", args.log_scale)
    if args.threshold is not None:
        pts, vals = reconstruct.threshold_points(field, **args.threshold)
        files["points"] = reconstruct.save_xyz(pts, vals, args.out / "points.xyz")
    if args.peaks:
        peaks = reconstruct.local_maxima(field, args.min_separation, args.peaks)
        vals = field.values[grid.nearest_index(peaks)]
        files["peaks"] = scenario._save_peaks(peaks, vals, args.out / "peaks.csv")
    _tool_manifest(args, files, timings, {"grid": grid.describe(), "kernel": args.kernel,
                                          "cap": args.cap, "onset": args.onset, "c": args.speed,
                                          "threshold": args.threshold, "sensors_used": field.sensor_count})
    _report([], files)


def cmd_carve(args):
    arr = _arrivals_from_args(args)
    grid = _grid_from_args(args)
    t0 = time.perf_counter()
    res = reconstruct.carve(arr, grid, args.onset, args.speed, args.margin)
    timings = {"carve": time.perf_counter() - t0}
    args.out.mkdir(parents=True, exist_ok=True)
    files = {"carve": reconstruct.save_carve_csv(res, args.out / "carve.csv")}
    if grid.mode == "plane":
        files["carve_pgm"] = reconstruct.save_pgm(res.kept.reshape(grid.shape).astype(float),
                                                  args.out / "carve.pgm")
    warn = []
    if args.margin == 0:
        warn.append("margin 0: any arrival picked earlier than the true first arrival enlarges "
                    "its ball and can erode the support")
    _tool_manifest(args, files, timings, {"grid": grid.describe(), "margin": args.margin,
                                          "onset": args.onset, "c": args.speed,
                                          "kept": res.kept_count}, warn)
    _report(warn, files)


def cmd_run(args):
    scn = _load_scenario(args)
    res = scenario.run(scn, args.out)
    files = dict(res.files, manifest=args.out / "manifest.json")
    _report(res.warnings, files)


def cmd_list(args):
    for name in scenario.list_bundled():
        scn = scenario.load(name)
        print(f"{name:12s} {scn.params.get('description', '')}")


COMMANDS = {"simulate": cmd_simulate, "pick": cmd_pick, "reconstruct": cmd_reconstruct,
            "carve": cmd_carve, "run": cmd_run, "list-scenarios": cmd_list}


def _existing(path: Path) -> Path:
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    return path


def _tool_manifest(args, files, timings, params, warnings=()):
    argv = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    man = {"tool": "wavesrc", "version": __version__, "command": args.command,
           "backend": _accel.backend(), "threads": _accel.get_threads(), "arguments": argv,
           "parameters": params, "outputs": {k: Path(v).name for k, v in files.items()},
           "timings_s": {k: round(v, 6) for k, v in timings.items()}, "warnings": list(warnings)}
    scenario.write_manifest(args.out / "manifest.json", man)


def _report(warnings, files):
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    for key, path in files.items():
        print(f"{key}: {path}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = args.threads
        if threads is None and os.environ.get("WAVESRC_THREADS"):
            threads = int(os.environ["WAVESRC_THREADS"])
        if threads is not None and threads < 1:
            raise ValidationError("--threads must be at least 1")
        _accel.set_threads(threads)
        COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception:  # noqa: BLE001 - report and map to the internal-error status
        traceback.print_exc()
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
