"""Configuration schema and every on-disk format: CSV, JSON and SVG."""
from __future__ import annotations

import copy
import csv
import json
import math
import os
from pathlib import Path

import jsonschema
import numpy as np

from . import manifold as mf
from .chordcore import Chord, make_chord
from .errors import ConfigError
from .flowengine import (BudgetExhausted, ConvergedToOGC, FlowParams, ShrunkToPoint,
                         StepFailure, Trajectory)
from .manifold import ChartPoint, ManifoldModel
from .sweepcensus import OgcCensus, SweepPlan

OUT_ENV = "CHORDFLOW_OUT"
DEFAULT_OUT = "chordflow_out"

_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1}

_point = {
    "oneOf": [
        _vec,
        {"type": "number"},
        {"type": "object", "additionalProperties": False, "required": ["u"],
         "properties": {"u": {"oneOf": [_vec, {"type": "number"}]},
                        "chart": {"type": "integer", "minimum": 0}}},
    ]
}

_chart_decl = {
    "type": "object", "additionalProperties": False, "required": ["expressions"],
    "properties": {
        "expressions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "periods": {"type": "array", "items": {"type": ["number", "null"]}},
        "domain": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                              "minItems": 2, "maxItems": 2}},
        "component": {"type": "integer", "minimum": 0},
        "orientation": {"enum": [-1, 1]},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "chordflow run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["manifold"],
    "properties": {
        "manifold": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["builtin"],
                 "properties": {"builtin": {"enum": sorted(mf.BUILTINS)},
                                "params": {"type": "object",
                                           "additionalProperties": {"type": "number"}}}},
                {"type": "object", "additionalProperties": False, "required": ["charts", "k"],
                 "properties": {"charts": {"type": "array", "items": _chart_decl, "minItems": 1},
                                "k": {"type": "integer", "minimum": 1},
                                "planar_boundary": {"type": "boolean"},
                                "convex_domain": {"type": "boolean"},
                                "compact": {"type": "boolean"}}},
            ]
        },
        "chord": {"type": "object", "additionalProperties": False, "required": ["p", "q"],
                  "properties": {"p": _point, "q": _point}},
        "flow": {"type": "object", "additionalProperties": False, "properties": {
            "dt_init": _pos, "dt_max": _pos, "t_max": _pos, "eps_shrink": _pos, "eps_ogc": _pos,
            "ogc_dwell": {"type": "integer", "minimum": 1}, "safety": _pos, "shrink_cap": _pos,
            "tol": _pos, "report_dt": {"oneOf": [_pos, {"type": "null"}]}}},
        "sweep": {"type": "object", "additionalProperties": False, "properties": {
            "resolution": {"oneOf": [{"type": "integer", "minimum": 1},
                                     {"type": "array", "items": {"type": "integer", "minimum": 1}}]},
            "min_length_frac": {"type": "number", "minimum": 0},
            "tol": _pos,
            "jobs": {"type": "integer", "minimum": 1},
            "limits_csv": {"type": "boolean"}}},
        "out": {"type": "string"},
        "report_stride": {"type": "integer", "minimum": 1},
    },
}

_num = {"type": "number"}
_nums = {"type": "array", "items": _num}

OUTCOME_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["outcome", "manifold", "samples"],
    "properties": {
        "outcome": {"enum": ["shrunk", "ogc", "budget", "failure"]},
        "manifold": {"type": "object"},
        "samples": {"type": "integer", "minimum": 0},
        "t_final": _num,
        "limit_point": _nums,
        "reason": {"type": "string"},
        "chord": {"type": "object", "additionalProperties": False,
                  "required": ["p", "q", "length", "residual"],
                  "properties": {"p": _nums, "q": _nums, "length": _num, "residual": _num}},
    },
}

CENSUS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["manifold", "plan", "clusters", "counts"],
    "properties": {
        "manifold": {"type": "object"},
        "plan": {"type": "object"},
        "clusters": {"type": "array", "items": {
            "type": "object", "additionalProperties": False,
            "required": ["p", "q", "length", "residual", "basin"],
            "properties": {"p": _nums, "q": _nums, "length": _num, "residual": _num,
                           "basin": {"type": "integer", "minimum": 1}}}},
        "counts": {"type": "object", "additionalProperties": False,
                   "required": ["total", "ogc", "shrink", "budget", "failure",
                                "cross_component_shrink"],
                   "properties": {k: {"type": "integer", "minimum": 0} for k in (
                       "total", "ogc", "shrink", "budget", "failure", "cross_component_shrink")}},
    },
}


# ------------------------------------------------------------------ config


def _path_str(path) -> str:
    out = "$"
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def validate(doc, schema, what: str = "config"):
    """Raise ConfigError listing every violation with its JSON path."""
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = [f"{_path_str(e.absolute_path)}: {e.message}" for e in errors]
        raise ConfigError(f"invalid {what}:\n  " + "\n  ".join(lines))


def load_config(path: str | os.PathLike) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not JSON: line {exc.lineno} col {exc.colno}: "
                          f"{exc.msg}") from None
    validate(doc, CONFIG_SCHEMA)
    return doc


def merge(base: dict, overrides: dict) -> dict:
    """Deep merge; ``None`` override values are ignored (flag not given)."""
    out = copy.deepcopy(base)
    for key, val in overrides.items():
        if isinstance(val, dict):
            sub = merge(out.get(key, {}) if isinstance(out.get(key), dict) else {}, val)
            if sub:
                out[key] = sub
        elif val is not None:
            out[key] = val
    return out


def build_manifold(spec: dict) -> ManifoldModel:
    if "builtin" in spec:
        return mf.builtin(spec["builtin"], spec.get("params"))
    return mf.from_expressions(spec["charts"], spec["k"],
                               planar_boundary=spec.get("planar_boundary", False),
                               convex_domain=spec.get("convex_domain", False),
                               compact=spec.get("compact", True))


def _chart_point(m: ManifoldModel, spec) -> ChartPoint:
    if isinstance(spec, dict):
        u, chart = spec["u"], spec.get("chart", 0)
    else:
        u, chart = spec, 0
    if chart >= len(m.charts):
        raise ConfigError(f"chart {chart} out of range (manifold has {len(m.charts)})")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (m.k,):
        raise ConfigError(f"chart coordinates must have {m.k} entries, got {u.size}")
    return ChartPoint(chart, u)


def build_chord(m: ManifoldModel, spec: dict) -> Chord:
    return make_chord(m, _chart_point(m, spec["p"]), _chart_point(m, spec["q"]))


def build_params(cfg: dict) -> FlowParams:
    return FlowParams(**cfg.get("flow", {}))


def build_plan(cfg: dict) -> SweepPlan:
    sw = cfg.get("sweep", {})
    res = sw.get("resolution", 24)
    return SweepPlan(resolution=tuple(res) if isinstance(res, list) else res,
                     min_length_frac=sw.get("min_length_frac", 0.05),
                     params=build_params(cfg), tol=sw.get("tol", 1e-4))


def output_dir(cfg: dict, flag: str | None = None) -> Path:
    return Path(flag or cfg.get("out") or os.environ.get(OUT_ENV) or DEFAULT_OUT)


# ------------------------------------------------------------------ values


def _num_out(v) -> float | None:
    v = float(v)
    return v if math.isfinite(v) else None


def jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num_out(obj)
    return obj


def write_json(path: Path, doc, schema=None):
    doc = jsonable(doc)
    if schema is not None:
        validate(doc, schema, what=path.name)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def fmt(v: float) -> str:
    return "%.17g" % v


# ------------------------------------------------------------------ trajectory


def trajectory_header(m: ManifoldModel) -> list[str]:
    cols = ["t", "ell", "eta_t_norm_sq"]
    cols += [f"p{i}" for i in range(m.n)] + [f"q{i}" for i in range(m.n)]
    if m.is_planar_domain_boundary:
        cols += ["theta_p", "theta_q"]
    return cols


def write_trajectory_csv(path: Path, m: ManifoldModel, traj: Trajectory, stride: int = 1):
    samples = traj.samples[::stride]
    if traj.samples and samples[-1] is not traj.samples[-1]:
        samples.append(traj.samples[-1])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(m))
        for s in samples:
            row = [s.t, s.ell, s.eta_t_norm_sq, *s.chord.xp, *s.chord.xq]
            if m.is_planar_domain_boundary:
                row += list(s.theta)
            w.writerow([fmt(v) for v in row])


def read_trajectory_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def outcome_doc(m: ManifoldModel, traj: Trajectory, outcome) -> dict:
    doc = {"outcome": outcome.kind, "manifold": m.source, "samples": len(traj.samples)}
    if isinstance(outcome, ShrunkToPoint):
        doc.update(t_final=outcome.t_final, limit_point=outcome.limit_point)
    elif isinstance(outcome, ConvergedToOGC):
        c = outcome.chord
        doc.update(t_final=outcome.t_final,
                   chord={"p": c.xp, "q": c.xq, "length": c.ell, "residual": outcome.residual})
    elif isinstance(outcome, BudgetExhausted):
        c = outcome.state.chord
        doc.update(t_final=outcome.state.t,
                   chord={"p": c.xp, "q": c.xq, "length": c.ell,
                          "residual": outcome.state.residual})
    elif isinstance(outcome, StepFailure):
        doc.update(t_final=outcome.t, reason=outcome.reason)
    return doc


# ------------------------------------------------------------------ census


def census_doc(m: ManifoldModel, plan: SweepPlan, cen: OgcCensus) -> dict:
    res = plan.resolution
    return {
        "manifold": m.source,
        "plan": {"resolution": list(res) if isinstance(res, tuple) else res,
                 "min_length_frac": plan.min_length_frac, "tol": plan.tol,
                 "flow": {k: getattr(plan.params, k) for k in plan.params.__dataclass_fields__}},
        "clusters": [{"p": cl.representative.xp, "q": cl.representative.xq,
                      "length": cl.representative.length,
                      "residual": cl.representative.residual, "basin": cl.basin}
                     for cl in cen.clusters],
        "counts": {"total": cen.total, "ogc": cen.ogc_count, "shrink": cen.shrink_count,
                   "budget": cen.budget_count, "failure": cen.failure_count,
                   "cross_component_shrink": cen.cross_component_shrinks},
    }


def write_limits_csv(path: Path, m: ManifoldModel, cen: OgcCensus):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"p{i}" for i in range(m.n)] + [f"q{i}" for i in range(m.n)]
                   + ["length", "residual"])
        for lim in cen.limits:
            w.writerow([fmt(v) for v in (*lim.xp, *lim.xq, lim.length, lim.residual)])


# ------------------------------------------------------------------ SVG

SVG_SAMPLES = 512
SVG_SIZE = 640
SNAPSHOTS = 8


def _sigma_polylines(m: ManifoldModel) -> list[np.ndarray]:
    """Curves drawing Sigma in its first two ambient coordinates."""
    lines = []
    for chart in m.charts:
        lo = [d[0] for d in chart.domain]
        hi = [d[1] for d in chart.domain]
        s = np.linspace(0.0, 1.0, SVG_SAMPLES)
        if m.k == 1:
            u = (lo[0] + (hi[0] - lo[0]) * s)[:, None]
            lines.append(chart.jet(u, 1)[0][:, :2])
            continue
        # Surfaces: iso-parameter curves in each coordinate direction.
        for axis in range(m.k):
            for frac in np.linspace(0.0, 1.0, 9)[1:-1]:
                u = np.tile([lo[i] + (hi[i] - lo[i]) * frac for i in range(m.k)], (SVG_SAMPLES, 1))
                u[:, axis] = lo[axis] + (hi[axis] - lo[axis]) * s
                lines.append(chart.jet(u, 1)[0][:, :2])
        if m.k > 2:
            break
    return lines


def snapshot_times(t_final: float) -> list[float]:
    if not t_final > 0:
        return [0.0]
    return [0.0] + [t_final / 2.0 ** e for e in range(SNAPSHOTS - 2, -1, -1)]


def _nearest(samples, t):
    times = np.array([s.t for s in samples])
    return samples[int(np.argmin(np.abs(times - t)))]


def render_svg(m: ManifoldModel, chords: list[tuple[np.ndarray, np.ndarray]],
               title: str = "") -> str:
    sigma = _sigma_polylines(m)
    pts = np.concatenate(sigma + [np.array([a[:2], b[:2]]) for a, b in chords])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    lo, span = lo - 0.05 * span, 1.1 * span
    scale = SVG_SIZE / float(span.max())
    w, h = span * scale

    def xy(p):
        # SVG y grows downward.
        return f"{(p[0] - lo[0]) * scale:.3f},{(lo[1] + span[1] - p[1]) * scale:.3f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
           f'viewBox="0 0 {w:.3f} {h:.3f}">']
    if title:
        out.append(f"<title>{title}</title>")
    for line in sigma:
        out.append('<polyline fill="none" stroke="#222" stroke-width="1" points="'
                   + " ".join(xy(p) for p in line) + '"/>')
    n = len(chords)
    for i, (a, b) in enumerate(chords):
        shade = int(200 * (1 - i / max(n - 1, 1)))
        out.append(f'<line x1="{xy(a).split(",")[0]}" y1="{xy(a).split(",")[1]}" '
                   f'x2="{xy(b).split(",")[0]}" y2="{xy(b).split(",")[1]}" '
                   f'stroke="rgb(220,{shade},40)" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def flow_svg(m: ManifoldModel, traj: Trajectory) -> str:
    if not traj.samples:
        return render_svg(m, [], "flow")
    t_final = traj.samples[-1].t
    picks = [_nearest(traj.samples, t) for t in snapshot_times(t_final)]
    return render_svg(m, [(s.chord.xp, s.chord.xq) for s in picks], "flow")


def census_svg(m: ManifoldModel, cen: OgcCensus) -> str:
    return render_svg(m, [(c.representative.xp, c.representative.xq) for c in cen.clusters],
                      "census")
