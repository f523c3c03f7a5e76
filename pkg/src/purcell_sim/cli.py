"""Command-line entry point: ``purcell-sim {steady,evolve,sweep,presets,check}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import warnings

import numpy as np

from . import __version__, dicke, effective, metrics, model, solvers, sweep
from .errors import PurcellSimError
from .model import SystemSpec

log = logging.getLogger("purcell_sim")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_spec(path=None, preset=None, overrides=()) -> SystemSpec:
    """Spec from a JSON file (optionally ``{"preset": name, ...overrides}``), a preset, and ``key=value`` pairs."""
    data = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    name = preset or data.pop("preset", None)
    for item in overrides:
        key, _, value = item.partition("=")
        if not _:
            raise PurcellSimError(f"override {item!r} is not key=value")
        data[key.strip()] = _parse_value(value.strip())
    if name:
        return model.preset(name).replace(**data)
    return SystemSpec.from_dict(data)


def _write(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _default_metrics(spec: SystemSpec, solver: str) -> list:
    names = ["concurrence", "fidelity_S", "fidelity_A"] if spec.n_emitters == 2 else ["fidelity_W"]
    if solver != "effective" and spec.n_emitters != 2:
        names.append("fidelity_W_heralded")
    names += ["n_cav", "g2_0"]
    return names


def cmd_steady(args) -> int:
    spec = load_spec(args.config, args.preset, args.set)
    names = args.metrics.split(",") if args.metrics else _default_metrics(spec, args.solver)
    unknown = set(names) - set(sweep.METRICS)
    if unknown:
        raise PurcellSimError(f"unknown metrics {sorted(unknown)}")
    columns, row = sweep.evaluate_spec(spec, names, args.solver)
    plan = {"name": "steady", "base": spec.to_dict(), "solver": args.solver, "metrics": names}
    result = sweep.SweepResult(plan, {"code_version": __version__}, columns, [row])
    _write(sweep.emit(result, args.format), args.out)
    return 0 if not row[-1] else 1


def cmd_evolve(args) -> int:
    spec = load_spec(args.config, args.preset, args.set)
    names = args.metrics.split(",") if args.metrics else ["fidelity_S" if spec.n_emitters == 2 else "fidelity_W"]
    scale = "log" if args.t_min > 0 else "linear"
    plan = sweep.SweepPlan("evolve", spec, (sweep.Axis("t", args.t_min, args.t_max, args.points, scale),),
                           tuple(names), args.solver, "evolve")
    result = sweep.run_sweep(plan, jobs=1)
    _write(sweep.emit(result, args.format), args.out)
    return 0 if result.n_failed == 0 else 1


def cmd_sweep(args) -> int:
    if bool(args.config) == bool(args.preset):
        raise PurcellSimError("give exactly one of --config or --preset")
    if args.config:
        plan = sweep.load_plan(args.config)
    else:
        plan = sweep.load_plan_preset(args.preset, full_res=args.full_res)
    if args.solver:
        plan = dataclasses.replace(plan, solver=args.solver)
    log.info("sweep %s: %d points, solver=%s", plan.name, plan.size, plan.solver)
    result = sweep.run_sweep(plan, jobs=args.jobs)
    _write(sweep.emit(result, args.format), args.out)
    if result.n_failed:
        log.warning("%d of %d points failed", result.n_failed, len(result.rows))
    return 0 if result.n_failed == 0 else 1


def cmd_presets(args) -> int:
    print("parameter sets:")
    for name in sorted(model.PRESETS):
        print(f"  {name}")
    print("sweep plans:")
    for name in sweep.plan_presets():
        plan = sweep.load_plan_preset(name)
        axes = " x ".join(f"{a.column}[{a.points}]" for a in plan.axes)
        print(f"  {name:18s} {plan.solver:9s} {axes}")
    return 0


def _checks():
    """Fast invariant checks: name -> callable returning (passed, detail)."""
    S = metrics.TargetState.symmetric()

    def presets_solve():
        worst = 0.0
        for name in model.PRESETS:
            spec = model.preset(name)
            gen = dicke.build_pim_liouvillian(spec) if spec.model_kind == "all_to_all" else model.build_liouvillian(spec)
            if spec.n_emitters > 10:
                continue
            a = solvers.steady_state(gen)
            b = solvers.steady_state(gen, "shifted-inverse-iteration")
            worst = max(worst, a.residual, b.residual)
        return worst <= 1e-9, f"max residual {worst:.2e}"

    def pim_coefficients():
        worst = 0.0
        for N in (2, 3, 4):
            ref, _ = dicke.extract_local_coefficients(N)
            prod = dicke.local_coefficients(N)
            worst = max(worst, max(abs(ref.get(k, 0) - prod.get(k, 0)) for k in set(ref) | set(prod)))
        return worst <= 1e-10, f"max coefficient mismatch {worst:.2e}"

    def pim_vs_full():
        spec = model.SystemSpec(n_emitters=3, model_kind="all_to_all", J=50.0, gamma_collective=0.5,
                                P=3.0, kappa=20.0, g=3.0, Delta_a=-50.0, n_max=3)
        W = metrics.TargetState.w_state(3)
        a = metrics.fidelity(solvers.steady_state(model.build_liouvillian(spec)).rho_ss, W)
        b = metrics.fidelity(solvers.steady_state(dicke.build_pim_liouvillian(spec)).rho_ss, W)
        return abs(a - b) <= 1e-6, f"|dF(W3)| = {abs(a - b):.2e}"

    def closed_form():
        spec = model.preset("fig1")
        full = metrics.fidelity(solvers.steady_state(model.build_liouvillian(spec)).rho_ss, S)
        pred = effective.cascaded_three_level_dynamics(spec).rho_S_simplified
        return abs(full - pred) <= 0.02, f"F_full={full:.4f} closed form={pred:.4f}"

    return {
        "preset steady states": presets_solve,
        "PIM coefficients vs oracle": pim_coefficients,
        "PIM vs full space (N=3)": pim_vs_full,
        "closed-form population": closed_form,
    }


def cmd_check(args) -> int:
    failed = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, fn in _checks().items():
            ok, detail = fn()
            failed += not ok
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="purcell-sim", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def spec_args(p):
        p.add_argument("--config", help="JSON file with SystemSpec fields (or a 'preset' key)")
        p.add_argument("--preset", help="named parameter set")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one SystemSpec field (repeatable)")
        p.add_argument("--solver", choices=sweep.SOLVERS, default="full")
        p.add_argument("--metrics", help="comma-separated metric names")

    def out_args(p):
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("steady", help="steady-state metrics of one parameter set")
    spec_args(p)
    out_args(p)
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("evolve", help="time trace from the ground state")
    spec_args(p)
    out_args(p)
    p.add_argument("--t-min", type=float, default=1e-4)
    p.add_argument("--t-max", type=float, default=1.0)
    p.add_argument("--points", type=int, default=51)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("sweep", help="run a sweep plan")
    p.add_argument("--config", help="JSON sweep plan")
    p.add_argument("--preset", help="bundled sweep plan (see 'presets')")
    p.add_argument("--full-res", action="store_true", help="dense grid stored with the plan")
    p.add_argument("--solver", choices=sweep.SOLVERS, help="override the plan's solver")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: $PURCELL_SIM_THREADS or 1)")
    out_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("presets", help="list parameter sets and sweep plans")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("check", help="run the fast invariant checks")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except (PurcellSimError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
