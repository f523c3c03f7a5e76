"""Steady states, time propagation and photon-heralded conditioning.

The solvers accept any *generator* exposing

* ``superop`` -- sparse matrix acting on the state vector,
* ``trace_vector()`` -- row vector ``w`` with ``Tr[rho] = w @ x``,
* ``state_to_vector(state)`` / ``vector_to_state(x)``,
* ``coherence_degree()`` -- per-element excitation difference, or ``None``.

:class:`purcell_sim.qop.Liouvillian` and
:class:`purcell_sim.dicke.PimLiouvillian` both qualify. When the coherence
degree is available the stationary problem is solved on the degree-zero
sector only, which is exact for excitation-conserving generators.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .errors import (
    DegenerateSteadyStateError,
    HeraldImpossibleError,
    SolverError,
    StiffnessError,
)
from .qop import DensityMatrix, LabeledOperator

logger = logging.getLogger(__name__)

#: Generators (after sector restriction) up to this size are solved densely.
DENSE_SOLVE_MAX = 4096
#: Kernel multiplicity is checked by SVD up to this size.
SVD_CHECK_MAX = 1600
#: Direct factorizations are refused above this state-space size.
DIRECT_SOLVE_MAX = 200_000

METHODS = ("null-space-LU", "shifted-inverse-iteration", "iterative-gmres")


@dataclass
class SteadyStateResult:
    rho_ss: object
    residual: float
    method: str
    generator_norm: float = 0.0

    @property
    def relative_residual(self) -> float:
        return self.residual / self.generator_norm if self.generator_norm else self.residual


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    observables: Dict[str, np.ndarray] = field(default_factory=dict)
    trace_drift: float = 0.0


def _sector(gen):
    """Indices of the degree-zero sector (or None for the full space)."""
    degree = gen.coherence_degree()
    if degree is None:
        return None
    return np.flatnonzero(degree == 0)


def _restricted(gen):
    A = sp.csr_matrix(gen.superop)
    w = np.asarray(gen.trace_vector(), dtype=complex)
    idx = _sector(gen)
    if idx is not None:
        A = A[idx][:, idx]
        w = w[idx]
    return A, w, idx


def _expand(x, idx, n):
    if idx is None:
        return x
    full = np.zeros(n, dtype=complex)
    full[idx] = x
    return full


def _kernel_multiplicity(A_dense: np.ndarray) -> int:
    s = la.svdvals(A_dense)
    tol = max(A_dense.shape) * np.finfo(float).eps * s[0] * 10
    return int(np.sum(s <= tol))


def _finalize(gen, x, method, norm):
    n = gen.superop.shape[0]
    x = x / (np.asarray(gen.trace_vector()) @ x)
    state = gen.vector_to_state(x).hermitized()
    residual = float(np.linalg.norm(gen.superop @ gen.state_to_vector(state)))
    try:
        state.validate()
    except ValueError as exc:
        raise SolverError(f"steady state failed validation: {exc}", residual) from exc
    return SteadyStateResult(state, residual, method, norm)


def _null_space_lu(A, w):
    n = A.shape[0]
    r = int(np.flatnonzero(np.abs(w) > 0)[0])
    rhs = np.zeros(n, dtype=complex)
    rhs[r] = 1.0
    if n <= DENSE_SOLVE_MAX:
        M = A.toarray()
        M[r, :] = w
        try:
            lu = la.lu_factor(M, check_finite=False)
        except (la.LinAlgError, ValueError) as exc:
            raise DegenerateSteadyStateError(_kernel_multiplicity(A.toarray())) from exc
        x = la.lu_solve(lu, rhs)
        solve = lambda b: la.lu_solve(lu, b)
    else:
        M = A.tolil()
        M[r, :] = w
        try:
            lu = spla.splu(sp.csc_matrix(M))
        except RuntimeError as exc:
            raise DegenerateSteadyStateError(2, f"sparse factorization singular ({exc}); "
                                                "steady state is likely not unique") from exc
        x = lu.solve(rhs)
        solve = lu.solve
    # one step of iterative refinement on the full (trace-augmented) system
    Ad = A
    for _ in range(2):
        res = Ad @ x
        res[r] = w @ x - 1.0
        x = x - solve(res)
    return x


def _shifted_inverse(A, w, norm, tol=1e-15, maxiter=60):
    n = A.shape[0]
    shift = 1e-10 * norm
    x = np.conj(w) / np.vdot(w, w)
    if n <= DENSE_SOLVE_MAX:
        lu = la.lu_factor(A.toarray() - shift * np.eye(n), check_finite=False)
        solve = lambda b: la.lu_solve(lu, b)
    else:
        lu = spla.splu(sp.csc_matrix(A - shift * sp.identity(n, format="csc")))
        solve = lu.solve
    for _ in range(maxiter):
        y = solve(x)
        y = y / (w @ y)
        change = np.linalg.norm(y - x) / max(np.linalg.norm(y), 1e-300)
        x = y
        if change < tol:
            break
    return x


def _iterative(A, w, tol=1e-10):
    n = A.shape[0]
    r = int(np.flatnonzero(np.abs(w) > 0)[0])
    M = A.tolil()
    M[r, :] = w
    M = sp.csc_matrix(M)
    rhs = np.zeros(n, dtype=complex)
    rhs[r] = 1.0
    ilu = spla.spilu(M, drop_tol=1e-6, fill_factor=20)
    pre = spla.LinearOperator(M.shape, ilu.solve, dtype=complex)
    x, info = spla.gmres(M, rhs, M=pre, rtol=tol, restart=200, maxiter=200)
    res = float(np.linalg.norm(M @ x - rhs))
    # rounding floors the residual near eps * ||M||; accept that as converged
    if info != 0 and res > max(tol, 1e-13 * spla.norm(M, 1)):
        raise SolverError("GMRES did not converge", res)
    return x


def steady_state(gen, method: str = "null-space-LU", check_unique: bool = True) -> SteadyStateResult:
    """Stationary state of ``gen``.

    Parameters
    ----------
    gen : Liouvillian or PimLiouvillian
    method : {"null-space-LU", "shifted-inverse-iteration", "iterative-gmres"}
        Direct kernel solve with the trace row substituted, inverse
        iteration with a tiny negative shift, or ILU-preconditioned GMRES.
        The first two refuse problems above ``DIRECT_SOLVE_MAX`` unknowns.
    check_unique : bool
        Count the numerical kernel dimension by SVD for small problems and
        raise :class:`DegenerateSteadyStateError` when it exceeds one.
    """
    if method not in METHODS:
        raise ValueError(f"unknown steady-state method {method!r}")
    A, w, idx = _restricted(gen)
    n_full = gen.superop.shape[0]
    norm = float(spla.norm(gen.superop, 1))
    n = A.shape[0]
    if method != "iterative-gmres" and n > DIRECT_SOLVE_MAX:
        raise SolverError(f"direct solve refused for {n} unknowns; use method='iterative-gmres'")
    if check_unique and n <= SVD_CHECK_MAX:
        mult = _kernel_multiplicity(A.toarray())
        if mult > 1:
            raise DegenerateSteadyStateError(mult)
    if method == "null-space-LU":
        x = _null_space_lu(A, w)
    elif method == "shifted-inverse-iteration":
        x = _shifted_inverse(A, w, norm)
    else:
        x = _iterative(A, w)
    return _finalize(gen, _expand(x, idx, n_full), method, norm)


# --- dynamics -----------------------------------------------------------------

def log_time_grid(t_min: float = 1e-6, t_max: float = 10.0, points: int = 141) -> np.ndarray:
    """Logarithmic grid in units of ``1/gamma``, prefixed by ``t = 0``."""
    return np.concatenate([[0.0], np.geomspace(t_min, t_max, points)])


def time_evolve(
    gen,
    rho0,
    t_grid: Sequence[float],
    observables: Optional[Dict[str, Callable]] = None,
    method: str = "auto",
    rtol: float = 1e-8,
    atol: float = 1e-10,
    store_states: bool = True,
) -> Trajectory:
    """Propagate ``rho0`` under ``gen`` and sample it on ``t_grid``.

    ``method="bdf"`` integrates with an adaptive implicit BDF scheme using
    the exact sparse Jacobian; ``method="expm"`` propagates exactly between
    grid points with dense matrix exponentials. ``"auto"`` picks ``expm`` for
    generators (after sector restriction) of at most ``DENSE_SOLVE_MAX``
    unknowns.
    """
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0):
        raise ValueError("t_grid must be a strictly increasing 1-D sequence")
    observables = observables or {}
    x0 = gen.state_to_vector(rho0)
    n_full = x0.size
    A = sp.csr_matrix(gen.superop)
    idx = _sector(gen)
    if idx is not None and np.allclose(np.delete(x0, idx), 0):
        A = A[idx][:, idx]
        x0r = x0[idx]
    else:
        idx = None
        x0r = x0
    if method == "auto":
        method = "expm" if A.shape[0] <= DENSE_SOLVE_MAX else "bdf"

    if method == "expm":
        Ad = A.toarray()
        xs = []
        x = x0r.copy()
        t_prev = times[0]
        if t_prev != 0.0:
            x = la.expm(Ad * t_prev) @ x
        for t in times:
            if t > t_prev:
                x = la.expm(Ad * (t - t_prev)) @ x
                t_prev = t
            xs.append(x.copy())
        ys = np.array(xs).T
    elif method == "bdf":
        def rhs(_t, y):
            return A @ y

        t0 = 0.0 if times[0] > 0 else times[0]
        sol = solve_ivp(rhs, (t0, times[-1]), x0r.astype(complex), method="BDF",
                        t_eval=times, jac=A, rtol=rtol, atol=atol)
        if sol.status != 0:
            raise StiffnessError(
                f"integration failed ({sol.message}); tighten the Fock truncation "
                "or loosen/scale the tolerances"
            )
        ys = sol.y
    else:
        raise ValueError(f"unknown propagation method {method!r}")

    w = np.asarray(gen.trace_vector())
    states, series = [], {k: [] for k in observables}
    drift = 0.0
    for k in range(ys.shape[1]):
        x = _expand(ys[:, k], idx, n_full)
        drift = max(drift, abs(w @ x - 1.0))
        state = gen.vector_to_state(x)
        for name, fn in observables.items():
            series[name].append(float(np.real(fn(state))))
        if store_states:
            states.append(state)
    if drift > 1e-8:
        warnings.warn(f"trace drift {drift:.2e} exceeds 1e-8", RuntimeWarning)
    return Trajectory(times, states, {k: np.asarray(v) for k, v in series.items()}, drift)


def fit_exponential_rise(times, values) -> tuple:
    """Least-squares fit of ``A (1 - exp(-t / tau))``; returns ``(A, 1/tau)``."""
    from scipy.optimize import curve_fit

    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    amp0 = values[-1]
    half = amp0 * (1 - np.exp(-1))
    t_guess = times[np.argmax(values >= half)] if np.any(values >= half) else times[-1]
    rate0 = 1.0 / max(t_guess, 1e-12)
    popt, _ = curve_fit(lambda t, a, r: a * (1 - np.exp(-r * t)), times, values, p0=(amp0, rate0))
    return float(popt[0]), float(popt[1])


# --- post-selection -------------------------------------------------------------

HERALD_FLOOR = 1e-14


def conditional_state(rho, jump) -> object:
    """``J rho J^dag / Tr[J rho J^dag]``.

    For a :class:`~purcell_sim.dicke.PimState` the jump must be the string
    ``"cavity"`` (photon emission through the cavity mode).
    """
    if hasattr(rho, "apply_cavity_jump"):
        if jump != "cavity":
            raise ValueError("permutation-invariant states only support the cavity jump")
        return rho.apply_cavity_jump(HERALD_FLOOR)
    if not isinstance(jump, LabeledOperator):
        raise TypeError("jump must be a LabeledOperator")
    if jump.layout != rho.layout:
        from .errors import LayoutError

        raise LayoutError("jump and state live on different layouts")
    Jm = jump.toarray()
    out = Jm @ rho.matrix @ Jm.conj().T
    weight = float(np.real(np.trace(out)))
    if weight <= HERALD_FLOOR:
        raise HeraldImpossibleError(f"herald probability {weight:.3e} is below {HERALD_FLOOR}")
    return DensityMatrix(rho.layout, out / weight)
