"""Parameter sweeps over :class:`~purcell_sim.model.SystemSpec`.

A :class:`SweepPlan` names a base parameter set, one or two axes, the
metrics to record and the solver to use. :func:`run_sweep` evaluates every
grid point (optionally in a process pool) and returns a
:class:`SweepResult` whose rows can be written as CSV or JSON with
:func:`emit`. Failed points are kept, with ``None`` metrics and an error
code, so the row count always equals the grid size.

Two axis names are not ``SystemSpec`` fields: ``C`` sets the cooperativity
by adjusting ``g`` at fixed ``kappa``, and ``t`` (evolve mode only, last
axis) is the time grid. An axis with ``unit="J"`` is given in units of the
current ``J``, and ``linked`` parameters are recomputed from another field
after the axes are applied, e.g. ``{"Delta_a": ["J", -1.0]}``.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
import os
import subprocess
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from itertools import product
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, dicke, effective, metrics, model, solvers
from .errors import PlanError, PurcellSimError
from .model import SystemSpec

SCHEMA = "purcell-sim.sweep"
SCHEMA_VERSION = 1

METRICS = (
    "concurrence",
    "fidelity_S",
    "fidelity_A",
    "fidelity_W",
    "fidelity_W_heralded",
    "n_cav",
    "g2_0",
    "analytic_rho_S",
    "analytic_tau_S",
    "analytic_P_opt",
)
SOLVERS = ("full", "pim", "effective")
MODES = ("steady", "evolve")
SCALES = ("linear", "log")
PSEUDO_AXES = ("C", "t")
TWO_EMITTER_METRICS = ("concurrence", "fidelity_S", "fidelity_A")
ANALYTIC = ("analytic_rho_S", "analytic_tau_S", "analytic_P_opt")
#: Gates that depend on the swept rates; ``J >> kappa`` is fixed per preset.
RATE_GATES = ("gate_kappa_GammaP", "gate_GammaP_gamma", "gate_GammaP_P")

_SPEC_FIELDS = {f.name for f in dataclasses.fields(SystemSpec)}


@dataclass(frozen=True)
class Axis:
    name: str
    start: float
    stop: float
    points: int
    scale: str = "linear"
    unit: Optional[str] = None

    @property
    def column(self) -> str:
        return f"{self.name}/{self.unit}" if self.unit else self.name

    def values(self) -> List[float]:
        if self.scale == "log":
            return [float(x) for x in np.geomspace(self.start, self.stop, self.points)]
        return [float(x) for x in np.linspace(self.start, self.stop, self.points)]

    def validate(self, mode: str) -> None:
        if self.name not in _SPEC_FIELDS and self.name not in PSEUDO_AXES:
            raise PlanError(f"axis {self.name!r} is not a SystemSpec field")
        if self.name in ("n_emitters", "n_max", "model_kind"):
            raise PlanError(f"axis {self.name!r} cannot be swept continuously")
        if self.name == "t" and mode != "evolve":
            raise PlanError("the time axis 't' is only valid in evolve mode")
        if int(self.points) != self.points or self.points < 2:
            raise PlanError(f"axis {self.name!r} needs at least 2 points")
        if self.scale not in SCALES:
            raise PlanError(f"axis scale must be one of {SCALES}")
        if self.scale == "log" and (self.start <= 0 or self.stop <= 0):
            raise PlanError(f"log axis {self.name!r} needs positive bounds")
        if self.unit not in (None, "J"):
            raise PlanError("axis unit must be omitted or 'J'")


@dataclass(frozen=True)
class SweepPlan:
    """Declarative description of a 1-D or 2-D sweep."""

    name: str
    base: SystemSpec
    axes: tuple
    metrics: tuple
    solver: str = "full"
    mode: str = "steady"
    linked: Dict[str, tuple] = field(default_factory=dict)
    pump: str = "fixed"
    steady_method: str = "null-space-LU"

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(a if isinstance(a, Axis) else Axis(**a) for a in self.axes))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        object.__setattr__(self, "linked", {k: tuple(v) for k, v in self.linked.items()})

    @property
    def shape(self) -> tuple:
        return tuple(a.points for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def validate(self) -> None:
        if not 1 <= len(self.axes) <= 2:
            raise PlanError("a plan sweeps one or two axes")
        if self.mode not in MODES:
            raise PlanError(f"mode must be one of {MODES}")
        if self.solver not in SOLVERS:
            raise PlanError(f"solver must be one of {SOLVERS}")
        for a in self.axes:
            a.validate(self.mode)
        if len({a.name for a in self.axes}) != len(self.axes):
            raise PlanError("axes must be distinct")
        if self.mode == "evolve" and self.axes[-1].name != "t":
            raise PlanError("evolve mode needs 't' as the last axis")
        unknown = set(self.metrics) - set(METRICS)
        if unknown or not self.metrics:
            raise PlanError(f"unknown or empty metrics: {sorted(unknown)}")
        for k, (src, _) in self.linked.items():
            if k not in _SPEC_FIELDS or src not in _SPEC_FIELDS:
                raise PlanError(f"linked parameter {k!r} -> {src!r} is not a SystemSpec field")
        if self.pump not in ("fixed", "optimal"):
            raise PlanError("pump must be 'fixed' or 'optimal'")
        N = self.base.n_emitters
        if N != 2 and set(self.metrics) & set(TWO_EMITTER_METRICS + ANALYTIC):
            raise PlanError("two-emitter metrics need n_emitters == 2")
        if self.solver == "effective":
            if N != 2:
                raise PlanError("the effective solver handles two emitters only")
            if "fidelity_W_heralded" in self.metrics:
                raise PlanError("heralded metrics need the cavity in the model")
        if self.solver == "pim":
            if self.base.model_kind == "dimer" and self.base.delta != 0:
                raise PlanError("the permutation-invariant solver needs delta = 0")
            if N > dicke.FULL_SPACE_MAX_N and "concurrence" in self.metrics:
                raise PlanError("concurrence is only defined for two emitters")
        if self.solver == "full" and N > 6:
            raise PlanError("full-space solver limited to 6 emitters; use solver='pim'")
        if "analytic_rho_S" in self.metrics and self.base.P == 0 and self.pump == "fixed" \
                and "P" not in {a.name for a in self.axes}:
            raise PlanError("analytic_rho_S is the incoherent closed form and needs P > 0")

    def with_points(self, points: Dict[str, int]) -> "SweepPlan":
        axes = tuple(dataclasses.replace(a, points=int(points.get(a.name, a.points))) for a in self.axes)
        return dataclasses.replace(self, axes=axes)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base": self.base.to_dict(),
            "axes": [dataclasses.asdict(a) for a in self.axes],
            "metrics": list(self.metrics),
            "solver": self.solver,
            "mode": self.mode,
            "linked": {k: list(v) for k, v in sorted(self.linked.items())},
            "pump": self.pump,
            "steady_method": self.steady_method,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepPlan":
        data = dict(data)
        data.pop("full_res", None)
        data.pop("description", None)
        base = dict(data.pop("base", {}))
        name = base.pop("preset", None)
        spec = model.preset(name).replace(**base) if name else SystemSpec.from_dict(base)
        known = {f.name for f in dataclasses.fields(cls)} - {"base"}
        extra = set(data) - known
        if extra:
            raise PlanError(f"unknown plan keys: {sorted(extra)}")
        return cls(base=spec, **data)


@dataclass
class SweepResult:
    """Plan echo, run metadata, column names and rows.

    Each row holds the axis values, one value per metric (``None`` when it
    failed), the gate flags and an error string (empty when all is well).
    """

    plan: dict
    metadata: dict
    columns: List[str]
    rows: List[list]

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.rows if r[-1])

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def to_json(self) -> str:
        doc = {
            "schema": SCHEMA,
            "schema_version": SCHEMA_VERSION,
            "plan": self.plan,
            "metadata": self.metadata,
            "columns": self.columns,
            "rows": self.rows,
        }
        return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SweepResult":
        doc = json.loads(text)
        if doc.get("schema") != SCHEMA:
            raise PlanError("not a sweep result document")
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise PlanError(f"unsupported schema version {doc.get('schema_version')}")
        return cls(doc["plan"], doc["metadata"], doc["columns"], doc["rows"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_csv_cell(x) for x in row) + "\n")
        return buf.getvalue()


def _csv_cell(x) -> str:
    if x is None:
        return "nan"
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit(result: SweepResult, format: str = "csv", path: Optional[str] = None) -> str:
    """Serialize ``result``; also write it to ``path`` if given."""
    if format == "csv":
        text = result.to_csv()
    elif format == "json":
        text = result.to_json()
    else:
        raise ValueError("format must be 'csv' or 'json'")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


# --- evaluation ------------------------------------------------------------------

def point_spec(plan: SweepPlan, values: Sequence[float]) -> SystemSpec:
    """``SystemSpec`` at one grid point (the time axis is ignored)."""
    spec = plan.base
    for axis, x in zip(plan.axes, values):
        if axis.name == "t":
            continue
        if axis.unit == "J":
            x = x * spec.J
        if axis.name == "C":
            spec = spec.with_cooperativity(x)
        else:
            spec = spec.replace(**{axis.name: x})
    if plan.linked:
        spec = spec.replace(**{k: getattr(spec, src) * f for k, (src, f) in plan.linked.items()})
    if plan.pump == "optimal":
        spec = spec.replace(P=effective.optimal_pump(spec).P_opt)
    return spec


def _generator(spec: SystemSpec, solver: str):
    if solver == "full":
        return model.build_liouvillian(spec)
    if solver == "pim":
        return dicke.build_pim_liouvillian(spec)
    return effective.effective_model(spec).reduced_liouvillian


def _initial_state(spec: SystemSpec, solver: str):
    if solver == "pim":
        return dicke.PimState.ground(dicke.DickeSpace(spec.n_emitters, spec.n_max + 1))
    layout = spec.layout if solver == "full" else spec.emitter_layout
    return metrics.DensityMatrix.basis_state(layout, [0] * layout.n_sites)


def _state_metric(name: str, state, spec: SystemSpec, solver: str) -> float:
    N = spec.n_emitters
    if name == "concurrence":
        return metrics.concurrence(metrics.emitter_state(state, 2))
    if name == "fidelity_S":
        return metrics.fidelity(state, metrics.TargetState.symmetric())
    if name == "fidelity_A":
        return metrics.fidelity(state, metrics.TargetState.antisymmetric())
    if name in ("fidelity_W", "fidelity_W_heralded"):
        target = dicke.dicke_target(N, "W") if solver == "pim" else metrics.TargetState.w_state(N)
        if name == "fidelity_W_heralded":
            jump = "cavity" if solver == "pim" else model.cavity_operator(spec)
            state = solvers.conditional_state(state, jump)
        return metrics.fidelity(state, target)
    if solver == "effective":
        n, n2 = effective.effective_cavity_moments(spec, state)
        if name == "n_cav":
            return n
        if n <= 1e-12:
            raise metrics.UndefinedStatisticsError(f"<a^dag a> = {n:.3e}")
        return n2 / n ** 2
    if name == "n_cav":
        return metrics.cavity_population(state)
    return metrics.g2_zero(state)


def _analytic_metric(name: str, spec: SystemSpec, t: Optional[float]) -> float:
    if name == "analytic_P_opt":
        return effective.optimal_pump(spec).P_opt
    pred = effective.cascaded_three_level_dynamics(spec)
    if name == "analytic_tau_S":
        return 1.0 / pred.inv_tau
    if pred.rho_S_simplified is None:
        raise PlanError("no closed-form population for coherent drive")
    return float(pred.rho_S(t)) if t is not None else pred.rho_S_simplified


def _row(names, solver, values, spec, state, t=None, error: str = "") -> list:
    out = [float(v) for v in values]
    errors = [error] if error else []
    for name in names:
        try:
            if name.startswith("analytic_"):
                v = _analytic_metric(name, spec, t)
            elif state is None:
                v = None
            else:
                v = _state_metric(name, state, spec, solver)
            if v is not None and not math.isfinite(v):
                raise ValueError("non-finite value")
            out.append(None if v is None else float(v))
        except (PurcellSimError, ValueError, ZeroDivisionError) as exc:
            out.append(None)
            errors.append(f"{name}:{type(exc).__name__}")
    gates = effective.hierarchy_gates(spec)
    out.extend(gates[g] for g in effective.GATE_NAMES)
    out.append(";".join(errors))
    return out


def _evaluate(args) -> List[list]:
    """Rows for one unit of work (a steady point or one trajectory)."""
    plan, values = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            spec = point_spec(plan, values)
        except PurcellSimError as exc:
            if plan.mode == "evolve":
                return [_row(plan.metrics, plan.solver, (*values, t), plan.base, None, t, type(exc).__name__)
                        for t in plan.axes[-1].values()]
            return [_row(plan.metrics, plan.solver, values, plan.base, None, error=type(exc).__name__)]
        if plan.mode == "steady":
            try:
                state = solvers.steady_state(_generator(spec, plan.solver), plan.steady_method).rho_ss
                return [_row(plan.metrics, plan.solver, values, spec, state)]
            except (PurcellSimError, ValueError, np.linalg.LinAlgError, MemoryError) as exc:
                return [_row(plan.metrics, plan.solver, values, spec, None, error=type(exc).__name__)]
        times = plan.axes[-1].values()
        try:
            gen = _generator(spec, plan.solver)
            grid = np.asarray(times)
            shift = grid[0] if grid[0] > 0 else None
            traj = solvers.time_evolve(gen, _initial_state(spec, plan.solver),
                                       np.concatenate([[0.0], grid]) if shift else grid)
            states = traj.states[1:] if shift else traj.states
            return [_row(plan.metrics, plan.solver, (*values, t), spec, s, t) for t, s in zip(times, states)]
        except (PurcellSimError, ValueError, np.linalg.LinAlgError, MemoryError) as exc:
            return [_row(plan.metrics, plan.solver, (*values, t), spec, None, t, type(exc).__name__) for t in times]


def evaluate_spec(spec: SystemSpec, names: Sequence[str], solver: str = "full",
                  steady_method: str = "null-space-LU") -> tuple:
    """Steady-state ``(columns, row)`` for a single parameter set."""
    columns = list(names) + list(effective.GATE_NAMES) + ["error"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            state = solvers.steady_state(_generator(spec, solver), steady_method).rho_ss
            return columns, _row(names, solver, (), spec, state)
        except (PurcellSimError, ValueError, np.linalg.LinAlgError, MemoryError) as exc:
            return columns, _row(names, solver, (), spec, None, error=type(exc).__name__)


def _work_units(plan: SweepPlan) -> list:
    axes = plan.axes[:-1] if plan.mode == "evolve" else plan.axes
    return [(plan, combo) for combo in product(*(a.values() for a in axes))]


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("PURCELL_SIM_THREADS", "1")))
    except ValueError:
        return 1


def _git_commit() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=os.path.dirname(__file__), capture_output=True, text=True, timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def run_sweep(plan: SweepPlan, jobs: Optional[int] = None) -> SweepResult:
    """Evaluate every grid point of ``plan``.

    Validation errors raise :class:`~purcell_sim.errors.PlanError` before any
    computation. ``jobs > 1`` evaluates independent points in a process pool;
    the rows are identical to a serial run.
    """
    plan.validate()
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    units = _work_units(plan)
    if jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_evaluate, units, chunksize=max(1, len(units) // (4 * jobs))))
    else:
        chunks = [_evaluate(u) for u in units]
    rows = [r for chunk in chunks for r in chunk]
    columns = [a.column for a in plan.axes] + list(plan.metrics) + list(effective.GATE_NAMES) + ["error"]
    metadata = {
        "code_version": __version__,
        "git_commit": _git_commit(),
        "seed": 0,
        "tolerances": {"validate_trace": 1e-10, "validate_psd": 1e-8, "ode_rtol": 1e-8, "ode_atol": 1e-10},
        "steady_method": plan.steady_method,
    }
    return SweepResult(plan.to_dict(), metadata, columns, rows)


def solver_consistency(result: SweepResult, n: int = 5, seed: int = 0,
                       metric: str = "concurrence") -> float:
    """Largest |full - effective| of ``metric`` over ``n`` random gated rows.

    Rows qualify when the rate gates pass. Returns NaN if none do.
    """
    plan = SweepPlan.from_dict(result.plan)
    if plan.solver != "full" or plan.mode != "steady":
        raise PlanError("spot checks apply to steady full-model sweeps")
    cols = result.columns
    idx = [k for k, r in enumerate(result.rows)
           if all(r[cols.index(g)] for g in RATE_GATES) and r[cols.index(metric)] is not None]
    if not idx:
        return float("nan")
    rng = np.random.default_rng(seed)
    pick = rng.choice(idx, size=min(n, len(idx)), replace=False)
    eff_plan = dataclasses.replace(plan, solver="effective", metrics=(metric,))
    naxes = len(plan.axes)
    worst = 0.0
    for k in sorted(pick):
        row = result.rows[int(k)]
        other = _evaluate((eff_plan, row[:naxes]))[0][naxes]
        worst = max(worst, abs(row[cols.index(metric)] - other))
    return worst


# --- preset plans ----------------------------------------------------------------

def plan_presets() -> List[str]:
    files = resources.files("purcell_sim") / "presets"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_plan_preset(name: str, full_res: bool = False) -> SweepPlan:
    """Bundled sweep plan; ``full_res`` switches to its dense grid."""
    path = resources.files("purcell_sim") / "presets" / f"{name}.json"
    if not path.is_file():
        raise PlanError(f"unknown plan preset {name!r}; available: {plan_presets()}")
    data = json.loads(path.read_text(encoding="utf-8"))
    plan = SweepPlan.from_dict(data)
    if full_res:
        plan = plan.with_points(data.get("full_res", {}))
    return plan


def load_plan(path: str) -> SweepPlan:
    with open(path, encoding="utf-8") as fh:
        return SweepPlan.from_dict(json.load(fh))
