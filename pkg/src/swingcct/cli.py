"""Command-line interface: per-stage commands plus the full analysis pipeline."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds_opt import optimize_bounds
from .cct import classify, compute_cct, prepare, verify_classification
from .equilibrium import sync_certificate
from .model import (Bounds, ScenarioError, SolverSettings, load_scenario_file,
                    rotating_frame_shift)
from .plots import export_geometry
from .report import PipelineError, run_pipeline
from .safety_sets import AmbiguousTopologyError


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("SWINGCCT_OUT") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_bounds(spec: str) -> Bounds:
    """Bounds from a JSON file path or an inline JSON object."""
    text = spec
    if not spec.lstrip().startswith("{"):
        text = Path(spec).read_text()
    doc = json.loads(text)
    return Bounds(lower=np.asarray(doc["lower"], dtype=float),
                  upper=np.asarray(doc["upper"], dtype=float))


def _load(args):
    scenario = load_scenario_file(args.scenario)
    if getattr(args, "bounds", None):
        scenario = scenario.with_bounds(_parse_bounds(args.bounds))
    return scenario


def _fmt(x):
    return np.array2string(np.asarray(x), precision=6, separator=", ")


def cmd_certify(args):
    scenario = _load(args)
    failed = []
    for name, stage in (("pre", scenario.pre), ("post", scenario.post)):
        shifted, _ = rotating_frame_shift(stage)
        cert = sync_certificate(shifted, args.gamma)
        verdict = "PASS" if cert.passed else "FAIL"
        print(f"{name}: {verdict}  lhs={cert.lhs:.9g} rhs={cert.rhs:.9g} "
              f"margin={cert.margin:.9g}")
        if not cert.passed:
            failed.append(name)
    if failed and not args.force:
        print(f"certificate failed for stage(s): {', '.join(failed)}",
              file=sys.stderr)
        return 1
    return 0


def cmd_equilibrium(args):
    prep = prepare(_load(args))
    print(f"omega_synch: pre={prep.omega_pre:.9g} post={prep.omega_post:.9g}")
    print(f"pre-fault equilibrium:  {_fmt(prep.eq_pre)}")
    print(f"post-fault equilibrium: {_fmt(prep.eq_post)}")
    return 0


def cmd_sets(args):
    from .cct import build_sets
    scenario = _load(args)
    if scenario.bounds is None:
        print("scenario has no bounds; pass --bounds", file=sys.stderr)
        return 1
    settings = scenario.solver
    sets, prep = build_sets(scenario, settings)
    for adm, mrpi in sets:
        i = adm.machine_index
        for s in (adm, mrpi):
            desc = "empty" if s.empty else f"area={s.area:.6g}"
            print(f"G{i + 1} {s.kind}: {desc}")
    files = export_geometry(sets, _out_dir(args), scenario, prep=prep)
    print(f"wrote {len(files)} files to {_out_dir(args)}")
    return 0


def cmd_cct(args):
    scenario = _load(args)
    if scenario.bounds is None:
        print("scenario has no bounds; pass --bounds", file=sys.stderr)
        return 1
    report, sets, traj, prep = compute_cct(scenario, scenario.solver)
    for t in report.times:
        def f(v):
            return "inf" if math.isinf(v) else f"{v:.4f}"
        print(f"G{t.index + 1}: t_mrpi={f(t.t_mrpi)} t_admissible={f(t.t_adm)}")
    print(report.summary_line(args.t_clear))
    return 0


def cmd_optimize_bounds(args):
    scenario = _load(args)
    result = optimize_bounds(scenario, budget=args.budget, seed=args.seed,
                             margin=args.margin, settings=scenario.solver)
    if not result.best.feasible:
        print("no feasible candidate found within budget", file=sys.stderr)
        return 1
    best = result.best
    print(f"best objective: {best.objective:.6g} "
          f"(areas: {_fmt(best.per_machine_areas)})")
    print(f"lower: {_fmt(best.bounds.lower)}")
    print(f"upper: {_fmt(best.bounds.upper)}")
    out = _out_dir(args)
    result.history_csv(out / "bounds_history.csv")
    with open(out / "bounds_best.json", "w") as fh:
        json.dump({"lower": best.bounds.lower.tolist(),
                   "upper": best.bounds.upper.tolist()}, fh, indent=2)
    print(f"history and best bounds written to {out}")
    return 0


def cmd_simulate(args):
    from .cct import simulate_fault
    scenario = _load(args)
    prep = prepare(scenario)
    horizon = args.horizon if args.horizon is not None else scenario.solver.horizon_s
    out = _out_dir(args)
    if args.t_clear is not None:
        if scenario.bounds is None:
            print("verification needs bounds; pass --bounds", file=sys.stderr)
            return 1
        v = verify_classification(scenario, args.t_clear, horizon,
                                  scenario.solver, prep)
        if v.in_slab:
            print(f"in-slab over {horizon:g} s after clearing at "
                  f"t_C={args.t_clear:g} s (no exit observed)")
        else:
            print(f"slab exit at t={v.first_exit_time:.4f} s after clearing "
                  f"(machine G{v.exit_machine + 1})")
        return 0
    traj = simulate_fault(scenario, horizon, scenario.solver, prep)
    path = out / "fault_trajectory.csv"
    traj.to_csv(path)
    print(f"fault-on trajectory ({horizon:g} s) written to {path}")
    return 0


def cmd_analyze(args):
    scenario = _load(args)
    report, sets, traj, prep = run_pipeline(
        scenario, gamma=args.gamma, t_clear=args.t_clear, force=args.force,
        optimize=args.optimize, budget=args.budget, seed=args.seed,
        settings=scenario.solver)
    out = _out_dir(args)
    with open(out / "report.json", "w") as fh:
        fh.write(report.to_json())
    if sets is not None:
        export_geometry(sets, out, scenario.with_bounds(
            Bounds(lower=np.asarray(report.bounds["lower"]),
                   upper=np.asarray(report.bounds["upper"]))),
            traj, report.cct, prep)
    print(report.summary_line(args.t_clear))
    print(f"report and geometry written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swingcct",
        description="Set-based critical clearing time estimation for "
                    "swing-equation networks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, bounds=True, out=True):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        if bounds:
            p.add_argument("--bounds",
                           help="angle bounds: JSON file or inline object")
        if out:
            p.add_argument("--out",
                           help="output directory (default $SWINGCCT_OUT or ./out)")

    p = sub.add_parser("certify", help="synchronization certificate per stage")
    common(p, bounds=False, out=False)
    p.add_argument("--gamma", type=float, default=math.pi / 2,
                   help="cohesiveness angle (rad), default pi/2")
    p.add_argument("--force", action="store_true",
                   help="exit 0 even on certificate failure")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("equilibrium", help="pre/post-fault equilibria")
    common(p, bounds=False, out=False)
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("sets", help="assemble and export the safety sets")
    common(p)
    p.set_defaults(func=cmd_sets)

    p = sub.add_parser("cct", help="safe/unsafe CCT from the fault-on trajectory")
    common(p, out=False)
    p.add_argument("--t-clear", type=float,
                   help="clearing time to classify (s)")
    p.set_defaults(func=cmd_cct)

    p = sub.add_parser("optimize-bounds",
                       help="search angle bounds maximizing total MRPI area")
    common(p, bounds=False)
    p.add_argument("--budget", type=int, default=200,
                   help="objective evaluations, default 200")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--margin", type=float, default=0.3,
                   help="initial inflation around the equilibrium hull (rad)")
    p.set_defaults(func=cmd_optimize_bounds)

    p = sub.add_parser("simulate",
                       help="fault-on trajectory export, or post-fault "
                            "verification with --t-clear")
    common(p)
    p.add_argument("--horizon", type=float, help="simulation horizon (s)")
    p.add_argument("--t-clear", type=float,
                   help="clearing time for post-fault verification (s)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="full pipeline: certificate through CCT")
    common(p)
    p.add_argument("--gamma", type=float, default=math.pi / 2)
    p.add_argument("--t-clear", type=float)
    p.add_argument("--force", action="store_true",
                   help="proceed past a failed certificate")
    p.add_argument("--optimize", action="store_true",
                   help="optimize bounds before set assembly")
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, PipelineError, AmbiguousTopologyError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
