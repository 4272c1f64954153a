"""Command-line entry point: ``chordflow flow|sweep|verify|demo``.

Exit codes: 0 when the flow shrinks or finds an orthogonal chord (or every
verify check passes), 2 when the time budget runs out, 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import io
from .errors import ChordFlowError, PreconditionNotMet
from .flowengine import BudgetExhausted, StepFailure, run
from .sweepcensus import census
from .verifysuite import SUITES, run_suites

log = logging.getLogger("chordflow")

EXIT_OK, EXIT_ERROR, EXIT_BUDGET = 0, 1, 2

_u30 = math.atan2(2.0 * math.sin(math.radians(30)), math.cos(math.radians(30)))

DEMOS: dict[str, dict] = {
    "flat": {
        "manifold": {"builtin": "line"},
        "chord": {"p": [-1.0], "q": [1.0]},
        "flow": {"report_dt": 0.01},
    },
    "strip": {
        "manifold": {"builtin": "strip-lines"},
        "chord": {"p": {"chart": 0, "u": [-0.5]}, "q": {"chart": 1, "u": [0.5]}},
        "flow": {"report_dt": 0.05},
    },
    "ellipse-30deg": {
        "manifold": {"builtin": "ellipse", "params": {"a": 1.0, "b": 0.5}},
        "chord": {"p": [_u30], "q": [_u30 + math.pi]},
        "flow": {"report_dt": 0.05},
    },
    "two-circles": {
        "manifold": {"builtin": "two-circles"},
        "chord": {"p": {"chart": 0, "u": [0.8]}, "q": {"chart": 1, "u": [2.0]}},
        "flow": {"report_dt": 0.05},
        "sweep": {"resolution": 16},
    },
    "ellipsoid": {
        "manifold": {"builtin": "ellipsoid", "params": {"a": 1.0, "b": 0.8, "c": 0.6}},
        # Antipodal chord in the xz-plane; symmetry keeps it centered, so it
        # settles on the shortest axis.
        "chord": {"p": [1.0, 0.0], "q": [math.pi - 1.0, math.pi]},
        "flow": {"report_dt": 0.05},
        "sweep": {"resolution": 12},
    },
}


def _flow(cfg: dict, out: Path) -> int:
    m = io.build_manifold(cfg["manifold"])
    if "chord" not in cfg:
        raise PreconditionNotMet("flow needs a 'chord' entry in the config")
    chord = io.build_chord(m, cfg["chord"])
    traj, outcome = run(m, chord, io.build_params(cfg))
    out.mkdir(parents=True, exist_ok=True)
    io.write_trajectory_csv(out / "trajectory.csv", m, traj, cfg.get("report_stride", 1))
    io.write_json(out / "outcome.json", io.outcome_doc(m, traj, outcome), io.OUTCOME_SCHEMA)
    (out / "flow.svg").write_text(io.flow_svg(m, traj), encoding="utf-8")
    log.info("outcome %s at t=%s; wrote %s", outcome.kind,
             getattr(outcome, "t_final", getattr(outcome, "t", None)), out)
    if isinstance(outcome, StepFailure):
        print(f"error: integrator failed at t={outcome.t:.17g}: {outcome.reason}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_BUDGET if isinstance(outcome, BudgetExhausted) else EXIT_OK


def _sweep(cfg: dict, out: Path, jobs: int) -> int:
    m = io.build_manifold(cfg["manifold"])
    plan = io.build_plan(cfg)
    cen = census(m, plan, jobs=jobs)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "census.json", io.census_doc(m, plan, cen), io.CENSUS_SCHEMA)
    if cfg.get("sweep", {}).get("limits_csv", False):
        io.write_limits_csv(out / "limits.csv", m, cen)
    (out / "census.svg").write_text(io.census_svg(m, cen), encoding="utf-8")
    log.info("%d clusters from %d chords; wrote %s", len(cen.clusters), cen.total, out)
    if cen.cross_component_shrinks:
        print(f"error: {cen.cross_component_shrinks} chords joining different components "
              "shrank to a point", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def _overrides(args) -> dict:
    flow = {"t_max": getattr(args, "t_max", None), "report_dt": getattr(args, "report_dt", None),
            "eps_ogc": getattr(args, "eps_ogc", None)}
    sweep = {"resolution": getattr(args, "resolution", None)}
    return {"flow": flow, "sweep": sweep}


def _apply_flags(cfg: dict, args) -> dict:
    cfg = io.merge(cfg, _overrides(args))
    io.validate(cfg, io.CONFIG_SCHEMA)
    return cfg


def cmd_flow(args) -> int:
    cfg = _apply_flags(io.load_config(args.config), args)
    return _flow(cfg, io.output_dir(cfg, args.out))


def cmd_sweep(args) -> int:
    cfg = _apply_flags(io.load_config(args.config), args)
    jobs = args.jobs or cfg.get("sweep", {}).get("jobs", 1)
    return _sweep(cfg, io.output_dir(cfg, args.out), jobs)


def cmd_verify(args) -> int:
    if args.suite != "all" and args.suite not in SUITES:
        raise PreconditionNotMet(
            f"unknown suite {args.suite!r}; valid suites: all, {', '.join(SUITES)}")
    entries = run_suites(args.suite)
    counts = {s: sum(e["status"] == s for e in entries) for s in ("pass", "fail", "skip")}
    out = io.output_dir({}, args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "verify_report.json", {"suite": args.suite, "entries": entries,
                                               "summary": counts})
    for e in entries:
        print(f"{e['status']:4}  {e['suite']}/{e['check']}")
    print(f"{counts['pass']} passed, {counts['fail']} failed, {counts['skip']} skipped")
    return EXIT_OK if counts["fail"] == 0 else EXIT_ERROR


def cmd_demo(args) -> int:
    cfg = _apply_flags(DEMOS[args.name], args)
    out = io.output_dir(cfg, args.out) / args.name
    if args.sweep:
        if "sweep" not in cfg:
            raise PreconditionNotMet(f"demo {args.name!r} has no sweep configuration")
        return _sweep(cfg, out, args.jobs or 1)
    if args.print_config:
        print(json.dumps(cfg, indent=2))
        return EXIT_OK
    return _flow(cfg, out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chordflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def flow_flags(sp):
        sp.add_argument("--out", help=f"output directory (default ${io.OUT_ENV} or ./{io.DEFAULT_OUT})")
        sp.add_argument("--t-max", type=float, dest="t_max")
        sp.add_argument("--report-dt", type=float, dest="report_dt")
        sp.add_argument("--eps-ogc", type=float, dest="eps_ogc")

    sp = sub.add_parser("flow", help="flow one chord")
    sp.add_argument("--config", required=True)
    flow_flags(sp)
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("sweep", help="census of orthogonal chords over a grid")
    sp.add_argument("--config", required=True)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--resolution", type=int)
    flow_flags(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify", help="numerical checks of the evolution equations")
    sp.add_argument("--suite", default="all")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("demo", help="run a bundled example")
    sp.add_argument("name", choices=sorted(DEMOS))
    sp.add_argument("--sweep", action="store_true", help="run the demo's sweep instead")
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--resolution", type=int)
    sp.add_argument("--print-config", action="store_true")
    flow_flags(sp)
    sp.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ChordFlowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
