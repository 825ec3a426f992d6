"""Declarative experiment files and the end-to-end pipeline runner.

Scenario files are TOML with a ``schema = 1`` field.  Sections:

``physics``      ``c``
``time``         ``T``, ``steps``
``signal``       ``kind`` (standard | gaussian | custom) and its parameters
``source``       ``kind`` (points | segment | curve | region | polygon |
                 polyhedron | union) and its geometry
``arrays``       array of tables, one per sensor layout
``noise``        ``epsilon``
``detect``       ``eta``, ``bias_correction``
``grid``         ``mode`` (plane | box), ``lower``, ``upper``, ``n``
``reconstruct``  ``outputs``, ``kernel``, ``cap``, ``margin``, ``onset``,
                 ``peaks``, ``threshold``, ``log_scale``
``forward``      ``quad_spacing``, ``save_recordings``
``expect``       free-form annotations read by the acceptance suite

The top-level ``seed`` feeds a :class:`numpy.random.SeedSequence`; each
random stage draws its own child.  ``assumed`` lists dotted keys whose values
are not fixed by the original experiment description.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import re
import time
from contextlib import contextmanager
from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, _accel, arrays, forward, geometry, measurement, reconstruct
from .errors import ValidationError
from .signal import Signal, TimeGrid

SCHEMA = 1
DEFAULT_SEED = 20240501
OUTPUT_KINDS = ("field", "peaks", "points", "carve")

DEFAULTS = {
    "seed": DEFAULT_SEED,
    "description": "",
    "physics": {"c": 1.0},
    "time": {"T": 15.0, "steps": 32768},
    "signal": {"kind": "standard", "delay": 0.0},
    "noise": {"epsilon": 0.05},
    "detect": {"eta": measurement.DEFAULT_ETA, "bias_correction": 0.0},
    "reconstruct": {
        "outputs": ["field"],
        "kernel": "abs",
        "cap": reconstruct.DEFAULT_CAP,
        "margin": reconstruct.DEFAULT_MARGIN,
        "onset": None,
        "log_scale": False,
    },
    "forward": {"save_recordings": True},
    "expect": {},
    "assumed": [],
}

_SIGNAL_KEYS = {
    "standard": {"kind", "delay"},
    "gaussian": {"kind", "delay", "center", "width", "carrier"},
    "custom": {"kind", "delay", "file"},
}

_SOURCE_KEYS = {
    "points": {"points", "intensities"},
    "segment": {"a", "b"},
    "curve": {"shape", "zeta", "params", "sample_spacing"},
    "region": {"shape", "params", "origin", "e1", "e2", "sample_spacing"},
    "polygon": {"corners"},
    "polyhedron": {"vertices"},
    "union": {"parts"},
}

_ARRAY_KEYS = {
    "circle": {"kind", "count", "radius", "center", "e1", "e2", "half_circle"},
    "fibonacci": {"kind", "count", "radius", "center"},
    "line": {"kind", "count", "start", "step"},
}

_SECTION_KEYS = {
    "physics": {"c"},
    "time": {"T", "steps"},
    "noise": {"epsilon"},
    "detect": {"eta", "bias_correction"},
    "grid": {"mode", "lower", "upper", "n", "origin", "e1", "e2"},
    "reconstruct": {"outputs", "kernel", "cap", "margin", "onset", "log_scale", "peaks", "threshold"},
    "forward": {"quad_spacing", "save_recordings"},
}

_TOP_KEYS = {"schema", "name", "description", "seed", "assumed", "signal", "source", "arrays", "expect"}


# ---------------------------------------------------------------------------
# locating keys in the source text for error messages
# ---------------------------------------------------------------------------

_HEADER = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.\- ]+?)\s*\]\]?\s*(#.*)?$")
_ASSIGN = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


def _line_of(text: str, dotted: str) -> int | None:
    """Best-effort 1-based line number of a dotted key (or its section)."""
    if not text:
        return None
    parts = dotted.split(".")
    table, best = "", None
    for lineno, line in enumerate(text.splitlines(), 1):
        m = _HEADER.match(line)
        if m:
            table = m.group(1).replace(" ", "")
            if table == ".".join(parts) and best is None:
                best = lineno
            continue
        m = _ASSIGN.match(line)
        if not m:
            continue
        full = f"{table}.{m.group(1)}" if table else m.group(1)
        if full == dotted:
            return lineno
        if best is None and dotted.startswith(full + "."):
            best = lineno
    if best is None and len(parts) > 1:
        return _line_of(text, ".".join(parts[:-1]))
    return best


@contextmanager
def _context(scn, key):
    try:
        yield
    except ValidationError as exc:
        if getattr(exc, "located", False):
            raise
        line = _line_of(scn.text, key)
        where = f"{scn.origin}:{line}" if line else str(scn.origin)
        err = ValidationError(f"{where}: [{key}] {exc}")
        err.located = True
        raise err from exc


# ---------------------------------------------------------------------------
# overrides and defaults
# ---------------------------------------------------------------------------

def parse_override(item: str):
    """``"noise.epsilon=0"`` -> ``("noise.epsilon", 0)``; the value is read as
    a TOML value, falling back to a bare string."""
    if "=" not in item:
        raise ValidationError(f"override {item!r} must look like key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ValidationError(f"override {item!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def apply_overrides(data: dict, overrides) -> dict:
    data = copy.deepcopy(data)
    for item in overrides or ():
        key, value = parse_override(item) if isinstance(item, str) else item
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            if p.isdigit() and isinstance(node, list):
                node = node[int(p)]
                continue
            node = node.setdefault(p, {})
            if not isinstance(node, (dict, list)):
                raise ValidationError(f"override {key!r}: {p!r} is not a section")
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return data


def _fill_defaults(data: dict):
    """Merge :data:`DEFAULTS` (plus grid-dependent ones) into ``data``;
    returns the list of dotted keys that were filled in."""
    applied = []

    def merge(dst, src, prefix):
        for k, v in src.items():
            key = f"{prefix}{k}"
            if isinstance(v, dict) and v:
                if k not in dst:
                    dst[k] = {}
                if isinstance(dst[k], dict):
                    merge(dst[k], v, key + ".")
            elif k not in dst:
                dst[k] = copy.deepcopy(v)
                applied.append(key)

    merge(data, DEFAULTS, "")
    fwd = data.setdefault("forward", {})
    if "quad_spacing" not in fwd:
        mode = data.get("grid", {}).get("mode", "plane")
        fwd["quad_spacing"] = (forward.DEFAULT_QUAD_SPACING_2D if mode == "plane"
                               else forward.DEFAULT_QUAD_SPACING_3D)
        applied.append("forward.quad_spacing")
    src = data.get("source", {})
    if src.get("kind") == "points" and "intensities" not in src and "points" in src:
        src["intensities"] = [1.0] * len(src["points"])
        applied.append("source.intensities")
    if src.get("kind") != "points" and src.get("kind") != "union" and "intensity" not in src:
        src["intensity"] = 1.0
        applied.append("source.intensity")
    if src.get("kind") in ("curve", "region") and "sample_spacing" not in src:
        src["sample_spacing"] = 0.01
        applied.append("source.sample_spacing")
    for i, part in enumerate(src.get("parts", []) if src.get("kind") == "union" else []):
        if part.get("kind") == "points" and "intensities" not in part and "points" in part:
            part["intensities"] = [1.0] * len(part["points"])
            applied.append(f"source.parts.{i}.intensities")
        if part.get("kind") != "points" and "intensity" not in part:
            part["intensity"] = 1.0
            applied.append(f"source.parts.{i}.intensity")
        if part.get("kind") in ("curve", "region") and "sample_spacing" not in part:
            part["sample_spacing"] = 0.01
            applied.append(f"source.parts.{i}.sample_spacing")
    return applied


def _check_keys(scn, section, got, allowed):
    extra = sorted(set(got) - set(allowed))
    if extra:
        with _context(scn, f"{section}.{extra[0]}" if section else extra[0]):
            raise ValidationError(f"unknown key(s) {extra}")


def _vec(v, n=3, name="vector"):
    arr = np.asarray(v, float)
    if arr.shape != (n,):
        raise ValidationError(f"{name} must have {n} components, got {v!r}")
    return arr


# ---------------------------------------------------------------------------
# building domain objects
# ---------------------------------------------------------------------------

def build_support(spec: dict) -> geometry.Support:
    kind = spec.get("kind")
    if kind not in _SOURCE_KEYS:
        raise ValidationError(f"source kind must be one of {sorted(_SOURCE_KEYS)}, got {kind!r}")
    extra = set(spec) - _SOURCE_KEYS[kind] - {"kind", "intensity"}
    if extra:
        raise ValidationError(f"unknown source key(s) {sorted(extra)} for kind {kind!r}")
    tau = float(spec.get("intensity", 1.0))
    if kind == "points":
        return geometry.PointSet(np.asarray(spec["points"], float), spec.get("intensities"))
    if kind == "segment":
        return geometry.Segment(_vec(spec["a"], name="a"), _vec(spec["b"], name="b"), tau)
    if kind == "curve":
        shape = spec.get("shape")
        if shape not in geometry.CURVES:
            raise ValidationError(f"curve shape must be one of {sorted(geometry.CURVES)}")
        z0, z1 = (float(z) for z in spec["zeta"])
        if not z1 > z0:
            raise ValidationError("curve parameter range must be increasing")
        fn = geometry.CURVES[shape](**spec.get("params", {}))
        return geometry.ParamCurve.from_function(fn, z0, z1, float(spec["sample_spacing"]),
                                                 intensity=tau, label=shape)
    if kind == "region":
        shape = spec.get("shape")
        if shape not in geometry.REGIONS:
            raise ValidationError(f"region shape must be one of {sorted(geometry.REGIONS)}")
        params = dict(spec.get("params", {}))
        if "center" in params:
            params["center"] = tuple(float(v) for v in params["center"])
        fn2 = geometry.REGIONS[shape](**params)
        return geometry.PlanarRegion.from_curve(
            fn2, float(spec["sample_spacing"]), spec.get("origin", (0, 0, 0)),
            spec.get("e1", (1, 0, 0)), spec.get("e2", (0, 1, 0)), intensity=tau, label=shape)
    if kind == "polygon":
        return geometry.PlanarPolygon(np.asarray(spec["corners"], float), tau)
    if kind == "polyhedron":
        return geometry.ConvexPolyhedron.from_vertices(np.asarray(spec["vertices"], float), tau)
    parts = spec.get("parts") or []
    if any(p.get("kind") == "union" for p in parts):
        raise ValidationError("unions cannot nest")
    return geometry.Union(tuple(build_support(p) for p in parts))


def build_signal(spec: dict, base: Path | None = None) -> Signal:
    kind = spec.get("kind")
    if kind not in _SIGNAL_KEYS:
        raise ValidationError(f"signal kind must be one of {sorted(_SIGNAL_KEYS)}, got {kind!r}")
    extra = set(spec) - _SIGNAL_KEYS[kind]
    if extra:
        raise ValidationError(f"unknown signal key(s) {sorted(extra)} for kind {kind!r}")
    delay = float(spec.get("delay", 0.0))
    if kind == "standard":
        return Signal.standard_pulse(delay)
    if kind == "gaussian":
        return Signal.gaussian_modulated(spec["center"], spec["width"], spec["carrier"], delay)
    path = Path(spec["file"])
    if not path.is_absolute() and base is not None:
        path = base / path
    if not path.exists():
        raise ValidationError(f"signal table {path} not found")
    return Signal.from_csv(path, delay)


def build_arrays(specs) -> forward.SensorArray:
    if not specs:
        raise ValidationError("at least one sensor array is required")
    out = []
    for spec in specs:
        kind = spec.get("kind")
        if kind not in _ARRAY_KEYS:
            raise ValidationError(f"array kind must be one of {sorted(_ARRAY_KEYS)}, got {kind!r}")
        extra = set(spec) - _ARRAY_KEYS[kind]
        if extra:
            raise ValidationError(f"unknown array key(s) {sorted(extra)} for kind {kind!r}")
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in spec.items()}
        out.append(arrays.ArraySpec(**kw))
    return arrays.generate(*out)


def build_grid(spec: dict) -> reconstruct.SamplingGrid:
    mode = spec.get("mode")
    for key in ("lower", "upper", "n"):
        if key not in spec:
            raise ValidationError(f"grid needs '{key}'")
    if mode == "plane":
        return reconstruct.SamplingGrid.plane(spec["lower"], spec["upper"], spec["n"],
                                              spec.get("origin", (0, 0, 0)),
                                              spec.get("e1", (1, 0, 0)), spec.get("e2", (0, 1, 0)))
    if mode == "box":
        return reconstruct.SamplingGrid.box(spec["lower"], spec["upper"], spec["n"])
    raise ValidationError(f"grid mode must be 'plane' or 'box', got {mode!r}")


# ---------------------------------------------------------------------------
# the scenario object
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Scenario:
    """A validated scenario: resolved parameters plus the objects built from them."""

    name: str
    params: dict
    defaults_applied: list
    origin: str = "<memory>"
    text: str = ""
    base: Path | None = None
    warnings: list = dc_field(default_factory=list)

    def __post_init__(self):
        self._validate()

    # -- construction ---------------------------------------------------------
    def _validate(self):
        p = self.params
        if p.get("schema") != SCHEMA:
            with _context(self, "schema"):
                raise ValidationError(f"unsupported schema {p.get('schema')!r}; expected {SCHEMA}")
        _check_keys(self, "", p, _TOP_KEYS | set(_SECTION_KEYS))
        for section, allowed in _SECTION_KEYS.items():
            if not isinstance(p.get(section, {}), dict):
                with _context(self, section):
                    raise ValidationError("expected a table")
            _check_keys(self, section, p.get(section, {}), allowed)
        if "source" not in p:
            raise ValidationError(f"{self.origin}: missing [source] section")
        if "grid" not in p:
            raise ValidationError(f"{self.origin}: missing [grid] section")
        if "arrays" not in p:
            raise ValidationError(f"{self.origin}: missing [[arrays]] section")
        with _context(self, "seed"):
            seed = p["seed"]
            if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
                raise ValidationError("seed must be an integer in [0, 2**64)")
        with _context(self, "physics.c"):
            if not float(p["physics"]["c"]) > 0:
                raise ValidationError("sound speed must be positive")
        with _context(self, "time"):
            self.time_grid = TimeGrid(float(p["time"]["T"]), int(p["time"]["steps"]))
        with _context(self, "signal"):
            self.signal = build_signal(p["signal"], self.base)
        with _context(self, "source"):
            self.support = build_support(p["source"])
        with _context(self, "arrays"):
            self.sensors = build_arrays(p["arrays"])
        with _context(self, "grid"):
            self.grid = build_grid(p["grid"])
        with _context(self, "noise.epsilon"):
            if not float(p["noise"]["epsilon"]) >= 0:
                raise ValidationError("noise level must be nonnegative")
        with _context(self, "detect.eta"):
            if not 0 < float(p["detect"]["eta"]) < 1:
                raise ValidationError("eta must lie in (0, 1)")
        with _context(self, "forward.quad_spacing"):
            if not float(p["forward"]["quad_spacing"]) > 0:
                raise ValidationError("quad_spacing must be positive")
        self._validate_reconstruct()
        self._validate_geometry()

    def _validate_reconstruct(self):
        r = self.params["reconstruct"]
        with _context(self, "reconstruct.outputs"):
            bad = [o for o in r["outputs"] if o not in OUTPUT_KINDS]
            if bad:
                raise ValidationError(f"unknown output(s) {bad}; choose from {list(OUTPUT_KINDS)}")
        with _context(self, "reconstruct.kernel"):
            if r["kernel"] not in reconstruct.KERNELS:
                raise ValidationError(f"kernel must be one of {sorted(reconstruct.KERNELS)}")
        with _context(self, "reconstruct.cap"):
            if not float(r["cap"]) > 0:
                raise ValidationError("cap must be positive")
        with _context(self, "reconstruct.margin"):
            if not float(r["margin"]) >= 0:
                raise ValidationError("margin must be nonnegative")
        if "peaks" in r["outputs"]:
            with _context(self, "reconstruct.peaks"):
                pk = r.get("peaks")
                if not isinstance(pk, dict) or "count" not in pk or "min_separation" not in pk:
                    raise ValidationError("peaks output needs count and min_separation")
        if "points" in r["outputs"]:
            with _context(self, "reconstruct.threshold"):
                th = r.get("threshold")
                if not isinstance(th, dict) or len(set(th) & {"absolute", "quantile"}) != 1:
                    raise ValidationError("points output needs threshold.absolute or threshold.quantile")

    def _validate_geometry(self):
        g = self.grid
        spacing = min(g.spacing)
        with _context(self, "source"):
            outline = self.support.outline(spacing)
            inside = g.contains(outline, tol=1e-6 * max(1.0, float(np.max(np.abs(g.upper)))))
            if not np.all(inside):
                bad = outline[~inside][0]
                raise ValidationError(
                    f"source support leaves the sampling grid (e.g. point {np.round(bad, 6).tolist()})")
        with _context(self, "arrays"):
            d = self.support.distance(self.sensors.positions)
            if np.any(d <= 0):
                raise ValidationError(f"sensor {int(np.argmin(d))} lies on the source support")
        corners = _grid_corners(g)
        R = self.sensors.radius_hint
        if np.max(np.linalg.norm(corners, axis=1)) >= R:
            self.warnings.append(
                f"sampling grid reaches beyond the sensor radius {R:g}; corner points lie "
                "outside the measurement surface")

    # -- derived values ---------------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.params["seed"])

    def stage_seed(self, stage: str) -> int:
        """Child seed of the run seed for ``stage`` (noise, ...)."""
        index = {"noise": 0}[stage]
        child = np.random.SeedSequence(self.seed).spawn(index + 1)[index]
        return int(child.generate_state(1, np.uint64)[0])

    @property
    def onset(self) -> float:
        o = self.params["reconstruct"]["onset"]
        return self.signal.onset if o is None else float(o)

    @property
    def assumed(self) -> dict:
        return {k: _lookup(self.params, k) for k in self.params.get("assumed", [])}

    def dumps(self) -> str:
        return dumps(self.params)

    def digest(self) -> str:
        return hashlib.sha256(dumps(self.params).encode()).hexdigest()


def _grid_corners(g: reconstruct.SamplingGrid) -> np.ndarray:
    lo, hi = np.array(g.lower), np.array(g.upper)
    idx = np.array(np.meshgrid(*[[0, 1]] * len(lo), indexing="ij")).reshape(len(lo), -1).T
    local = np.where(idx == 1, hi, lo)
    if g.mode == "box":
        return local
    return np.asarray(g.origin) + local[:, :1] * np.asarray(g.e1) + local[:, 1:] * np.asarray(g.e2)


def _lookup(d, dotted):
    node = d
    for p in dotted.split("."):
        if isinstance(node, list) and p.isdigit():
            node = node[int(p)]
        elif isinstance(node, dict) and p in node:
            node = node[p]
        else:
            return None
    return node


def _plain(obj):
    """Copy of ``obj`` with ``None`` entries dropped (TOML has no null)."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    return obj


def dumps(params: dict) -> str:
    return tomli_w.dumps(_plain(params))


def loads(text: str, origin="<string>", overrides=None, base=None) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{origin}: {exc}") from None
    data = apply_overrides(data, overrides)
    applied = _fill_defaults(data)
    name = data.setdefault("name", Path(str(origin)).stem)
    return Scenario(name, data, applied, origin=str(origin), text=text, base=base)


def bundled_dir():
    return resources.files("wavesrc") / "scenarios"


def list_bundled() -> list:
    return sorted(p.name[:-4] for p in bundled_dir().iterdir() if p.name.endswith(".scn"))


def resolve_path(name_or_path) -> Path:
    """A file path, or the name of a bundled scenario (with or without ``.scn``)."""
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = p.name[:-4] if p.name.endswith(".scn") else p.name
    candidate = bundled_dir() / f"{stem}.scn"
    if str(p.parent) in ("", ".") and candidate.is_file():
        return Path(str(candidate))
    raise ValidationError(f"scenario {name_or_path!r} not found (bundled: {', '.join(list_bundled())})")


def load(name_or_path, overrides=None) -> Scenario:
    path = resolve_path(name_or_path)
    return loads(path.read_text(), origin=path, overrides=overrides, base=path.parent)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    scenario: Scenario
    recording: forward.Recording
    arrivals: measurement.ArrivalSet
    field: reconstruct.IndicatorField | None = None
    carve: reconstruct.CarveResult | None = None
    peaks: np.ndarray | None = None
    points: tuple | None = None
    files: dict = dc_field(default_factory=dict)
    timings: dict = dc_field(default_factory=dict)
    warnings: list = dc_field(default_factory=list)


def simulate_stage(scn: Scenario, backend=None, timings=None):
    """Clean recording followed by seeded noise."""
    timings = {} if timings is None else timings
    p = scn.params
    t0 = time.perf_counter()
    with _context(scn, "source"):
        clean = forward.simulate(scn.support, scn.signal, scn.sensors, scn.time_grid,
                                 c=float(p["physics"]["c"]),
                                 quad_spacing=float(p["forward"]["quad_spacing"]), backend=backend)
    timings["simulate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    noisy = measurement.add_noise(clean, float(p["noise"]["epsilon"]), scn.stage_seed("noise"))
    timings["noise"] = time.perf_counter() - t0
    return noisy


def run(scn: Scenario, out_dir=None, backend=None, stages=("simulate", "detect", "reconstruct")) -> RunResult:
    """Run the pipeline and, when ``out_dir`` is given, write every artifact
    plus ``manifest.json`` there."""
    p = scn.params
    timings = {}
    warn = list(scn.warnings)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    files = {}

    rec = simulate_stage(scn, backend, timings)
    if out is not None:
        files["sensors"] = forward.save_sensors(scn.sensors, out / "sensors.csv")
        if p["forward"]["save_recordings"]:
            t0 = time.perf_counter()
            files["recordings"] = forward.save_recording(rec, out / "recordings.csv")
            timings["write_recordings"] = time.perf_counter() - t0
    result = RunResult(scn, rec, None, files=files, timings=timings, warnings=warn)
    if "detect" in stages:
        t0 = time.perf_counter()
        with _context(scn, "detect"):
            arr = measurement.detect_arrivals(rec, float(p["detect"]["eta"]),
                                              float(p["detect"]["bias_correction"]), backend=backend)
        timings["detect"] = time.perf_counter() - t0
        result.arrivals = arr
        missing = int(np.count_nonzero(~arr.present))
        if missing:
            warn.append(f"{missing} sensor(s) detected no arrival and are skipped")
        if out is not None:
            files["arrivals"] = measurement.save_arrivals(arr, out / "arrivals.csv")
    if "reconstruct" in stages and result.arrivals is not None:
        _reconstruct_stage(scn, result, out, backend)
    if out is not None:
        write_manifest(out / "manifest.json", manifest_for(scn, result))
    return result


def _reconstruct_stage(scn, result, out, backend):
    p = scn.params
    r = p["reconstruct"]
    c = float(p["physics"]["c"])
    timings, files = result.timings, result.files
    needs_field = any(o in r["outputs"] for o in ("field", "peaks", "points"))
    if needs_field:
        t0 = time.perf_counter()
        with _context(scn, "reconstruct"):
            result.field = reconstruct.indicator(result.arrivals, scn.grid, scn.onset, c,
                                                 r["kernel"], float(r["cap"]), backend=backend)
        timings["indicator"] = time.perf_counter() - t0
    if "field" in r["outputs"] and out is not None:
        files["field"] = reconstruct.save_field_csv(result.field, out / "field.csv")
        if scn.grid.mode == "plane":
            files["field_pgm"] = reconstruct.save_pgm(result.field.image(), out / "field.pgm",
                                                      bool(r["log_scale"]))
    if "peaks" in r["outputs"]:
        pk = r["peaks"]
        result.peaks = reconstruct.local_maxima(result.field, float(pk["min_separation"]), int(pk["count"]))
        if out is not None:
            vals = result.field.values[scn.grid.nearest_index(result.peaks)] if len(result.peaks) else []
            files["peaks"] = _save_peaks(result.peaks, vals, out / "peaks.csv")
    if "points" in r["outputs"]:
        th = r["threshold"]
        result.points = reconstruct.threshold_points(result.field, absolute=th.get("absolute"),
                                                     quantile=th.get("quantile"))
        if out is not None:
            files["points"] = reconstruct.save_xyz(*result.points, out / "points.xyz")
    if "carve" in r["outputs"]:
        t0 = time.perf_counter()
        with _context(scn, "reconstruct"):
            result.carve = reconstruct.carve(result.arrivals, scn.grid, scn.onset, c,
                                             float(r["margin"]), backend=backend)
        timings["carve"] = time.perf_counter() - t0
        pos, _ = result.arrivals.usable()
        excess = result.carve.radii - scn.support.distance(pos)
        if np.max(excess) > result.carve.margin:
            result.warnings.append(
                f"detected arrivals imply ball radii up to {np.max(excess):.4g} beyond the exact "
                f"distance, more than the margin {result.carve.margin:g}; the support may be eroded")
        if out is not None:
            files["carve"] = reconstruct.save_carve_csv(result.carve, out / "carve.csv")
            if scn.grid.mode == "plane":
                img = result.carve.kept.reshape(scn.grid.shape).astype(float)
                files["carve_pgm"] = reconstruct.save_pgm(img, out / "carve.pgm")


def _save_peaks(peaks, values, path) -> Path:
    with open(path, "w") as fh:
        fh.write("rank,x1,x2,x3,value\n")
        for i, (q, v) in enumerate(zip(peaks, values)):
            fh.write(f"{i},{q[0]:.9g},{q[1]:.9g},{q[2]:.9g},{v:.9g}\n")
    return Path(path)


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def manifest_for(scn: Scenario, result: RunResult | None = None, extra=None) -> dict:
    man = {
        "tool": "wavesrc",
        "version": __version__,
        "backend": _accel.backend(),
        "threads": _accel.get_threads(),
        "scenario": scn.name,
        "scenario_source": scn.origin,
        "scenario_hash": scn.digest(),
        "schema": SCHEMA,
        "seed": scn.seed,
        "stage_seeds": {"noise": scn.stage_seed("noise")},
        "parameters": _jsonable(scn.params),
        "defaults_applied": list(scn.defaults_applied),
        "assumed": {k: {"value": _jsonable(v), "assumed": True} for k, v in scn.assumed.items()},
    }
    if result is not None:
        man["outputs"] = {k: Path(v).name for k, v in result.files.items()}
        man["timings_s"] = {k: round(v, 6) for k, v in result.timings.items()}
        man["warnings"] = list(result.warnings)
        if result.arrivals is not None:
            man["detection"] = {"level": result.arrivals.level, "u_max": result.arrivals.u_max,
                                "detected": int(np.count_nonzero(result.arrivals.present)),
                                "sensors": len(result.arrivals)}
    if extra:
        man.update(extra)
    return man


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_manifest(path, manifest: dict) -> Path:
    """Write ``manifest`` as JSON atomically (temp file then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=False)
        fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path

