"""Cavity elimination for two emitters and the closed-form predictions it yields.

The cavity is traced out to second order in ``g`` (Born-Markov), giving an
emitter-only generator in which each transition ``|i> -> |j>`` of the
emitter Hamiltonian is Purcell-enhanced according to its detuning from the
cavity. Deep in the resolved regime only ``|ee> -> |+>`` (and weakly
``|-> -> |gg>``) survive, and the emitters reduce to a cascaded three-level
system whose populations and timescale are available in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import model, qop
from .errors import SpecError
from .model import SystemSpec
from .qop import LabeledOperator, Liouvillian, SubsystemLayout

#: "x >> y" is read as x / y >= MUCH_GREATER.
MUCH_GREATER = 10.0

#: Indices (0-based) of the enhanced transitions ``|-> -> |gg>`` and ``|ee> -> |+>``.
MU_S = ((1, 0), (3, 2))

EMITTER_LAYOUT = SubsystemLayout((2, 2))


@dataclass(frozen=True)
class EffectiveModel:
    """Emitter eigenbasis and cavity-mediated transition data for ``N = 2``.

    ``eigenvectors[:, k]`` is eigenstate ``k`` in the product basis, ordered
    ``|gg>, |->, |+>, |ee>``. ``couplings[i, j] = g <j|sigma_1 + sigma_2|i>``
    and ``frequencies[i, j] = lambda_i - lambda_j``.
    """

    spec: SystemSpec
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    couplings: np.ndarray
    frequencies: np.ndarray
    Gamma_P: float
    xi_S: LabeledOperator
    reduced_liouvillian: Liouvillian

    def transition_operator(self, i: int, j: int) -> np.ndarray:
        """``|j><i|`` in the product basis."""
        V = self.eigenvectors
        return np.outer(V[:, j], V[:, i].conj())


def _check_two_emitters(spec: SystemSpec):
    if spec.n_emitters != 2:
        raise SpecError("the cavity elimination is implemented for two emitters")


def emitter_eigenbasis(spec: SystemSpec):
    """Eigenvalues and eigenvectors of the bare emitter Hamiltonian.

    Ordered ``|gg>, |->, |+>, |ee>`` with the ``|eg>`` amplitude of the
    one-excitation states chosen real and positive.
    """
    _check_two_emitters(spec)
    H = model.build_hamiltonian(spec.replace(Omega=0.0), include_cavity=False).toarray()
    vals, vecs = np.linalg.eigh(H)
    exc = model.excitation_numbers(spec, include_cavity=False)
    weight = np.abs(vecs) ** 2
    n_exc = exc @ weight
    order = np.lexsort((vals, np.round(n_exc, 6)))
    vals, vecs = vals[order], vecs[:, order]
    for k in range(4):
        ref = 2 if k in (1, 2) else int(np.argmax(np.abs(vecs[:, k])))
        phase = vecs[ref, k] / abs(vecs[ref, k]) if abs(vecs[ref, k]) > 1e-14 else 1.0
        vecs[:, k] = vecs[:, k] / phase
    return vals, vecs


def _transition_data(spec: SystemSpec):
    vals, V = emitter_eigenbasis(spec)
    S_minus = sum(op.toarray() for op in model.emitter_operators(spec, include_cavity=False))
    G = V.conj().T @ S_minus @ V  # G[j, i] = <j|S^-|i>
    couplings = spec.g * G.T
    freqs = vals[:, None] - vals[None, :]
    return vals, V, couplings, freqs


def _restricted_pairs(restrict_mu_s: bool):
    if restrict_mu_s:
        return set(MU_S)
    return {(i, j) for i in range(4) for j in range(4)}


def cavity_mediated_operators(spec: SystemSpec, restrict_mu_s: bool = False):
    """Operators ``X`` and ``Y`` with the eliminated cavity field ``a ≈ -i X``.

    ``X = sum c_ij |j><i|`` with ``c_ij = g_ij / (kappa/2 + i(Delta_a - omega_ij))``
    and ``Y = sum g_mn |n><m|``, both in the product basis.
    """
    vals, V, gij, wij = _transition_data(spec)
    pairs = _restricted_pairs(restrict_mu_s)
    X = np.zeros((4, 4), dtype=complex)
    Y = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            if (i, j) not in pairs or gij[i, j] == 0:
                continue
            sig = np.outer(V[:, j], V[:, i].conj())
            X += gij[i, j] / (spec.kappa / 2 + 1j * (spec.Delta_a - wij[i, j])) * sig
            Y += gij[i, j] * sig
    return X, Y


def bloch_redfield_cavity_term(spec: SystemSpec, restrict_mu_s: bool = False) -> Liouvillian:
    """Second-order cavity contribution on the two-emitter space.

    Implements ``sum_{ijmn} c_ij g*_mn [sigma_ij rho, sigma_mn^dag] + H.c.``
    over the full double sum (no secular approximation). With
    ``restrict_mu_s=True`` both sums run only over the two enhanced
    transitions.
    """
    _check_two_emitters(spec)
    if spec.g > 0 and spec.kappa < MUCH_GREATER * spec.g:
        warnings.warn("cavity elimination assumes kappa >> g", RuntimeWarning, stacklevel=2)
    X, Y = cavity_mediated_operators(spec, restrict_mu_s)
    Yd, Xd = Y.conj().T, X.conj().T
    superop = (
        qop.sprepost(X, Yd) + qop.sprepost(Y, Xd) - qop.spre(Yd @ X) - qop.spost(Xd @ Y)
    )
    return Liouvillian(EMITTER_LAYOUT, sp.csr_matrix(superop))


def effective_jump_model(spec: SystemSpec, coherent: bool = False):
    """``(Gamma_P, xi_S)`` of the resolved-Purcell effective dissipator.

    ``xi_S = |+><ee| + beta |gg><-|``; the coherent-drive variant is
    ``-|+><ee| + (beta/2) |gg><-|``. The returned dissipator is
    ``Gamma_P D[xi_S]``.
    """
    _check_two_emitters(spec)
    d = spec.derived()
    if spec.kappa and (spec.J < MUCH_GREATER * spec.kappa or spec.kappa < MUCH_GREATER * spec.g):
        warnings.warn("effective jump model assumes J >> kappa >> g", RuntimeWarning, stacklevel=2)
    _, V = emitter_eigenbasis(spec)
    plus_ee = np.outer(V[:, 2], V[:, 3].conj())
    gg_minus = np.outer(V[:, 0], V[:, 1].conj())
    if coherent:
        xi = -plus_ee + 0.5 * d.beta * gg_minus
    else:
        xi = plus_ee + d.beta * gg_minus
    return d.Gamma_P, LabeledOperator(EMITTER_LAYOUT, xi)


def emitter_liouvillian(spec: SystemSpec) -> Liouvillian:
    """Everything except the cavity: interaction, drive, decay, pump, extra channels."""
    return model.build_liouvillian(spec, include_cavity=False)


def effective_model(spec: SystemSpec, restrict_mu_s: bool = False) -> EffectiveModel:
    vals, V, gij, wij = _transition_data(spec)
    gamma_P, xi = effective_jump_model(spec) if spec.J else (spec.derived().Gamma_P, None)
    L = emitter_liouvillian(spec) + bloch_redfield_cavity_term(spec, restrict_mu_s)
    return EffectiveModel(spec, vals, V, gij, wij, gamma_P, xi, L)


def jump_model_liouvillian(spec: SystemSpec, coherent: bool = False) -> Liouvillian:
    """Emitter generator plus ``Gamma_P D[xi_S]``."""
    gamma_P, xi = effective_jump_model(spec, coherent)
    return emitter_liouvillian(spec) + gamma_P * qop.lindblad_dissipator(xi)


def effective_cavity_moments(spec: SystemSpec, rho2) -> tuple:
    """``(<a^dag a>, <a^dag a^dag a a>)`` with the cavity slaved to ``a ≈ -i X``."""
    X, _ = cavity_mediated_operators(spec)
    m = rho2.matrix if hasattr(rho2, "matrix") else np.asarray(rho2)
    Xd = X.conj().T
    n = float(np.real(np.trace(Xd @ X @ m)))
    n2 = float(np.real(np.trace(Xd @ Xd @ X @ X @ m)))
    return n, n2


# --- closed forms ------------------------------------------------------------

@dataclass(frozen=True)
class CascadedPrediction:
    """Closed-form populations and preparation rate of the symmetric state."""

    mode: str
    rho_S_general: Optional[float]
    rho_A_general: Optional[float]
    rho_ee_general: Optional[float]
    rho_S_simplified: Optional[float]
    rho_S_purcell: Optional[float]
    inv_tau: float
    inv_tau_approx: float
    low_pump_regime: bool = False

    def rho_S(self, t) -> np.ndarray:
        """``rho_S,ss (1 - exp(-t / tau_S))`` using the simplified stationary value."""
        ss = self.rho_S_simplified if self.rho_S_simplified is not None else np.nan
        return ss * (1.0 - np.exp(-np.asarray(t, dtype=float) * self.inv_tau))


def cascaded_three_level_dynamics(spec: SystemSpec, mode: Optional[str] = None) -> CascadedPrediction:
    """Closed-form stationary populations and ``1/tau_S``.

    ``mode`` defaults to ``"coherent"`` when ``Omega > 0`` and ``P == 0``,
    else ``"incoherent"``. The incoherent formulas need ``P > 0``; they are
    derived for ``P`` of order ``gamma`` or above, and smaller pumps are
    evaluated anyway but flagged via ``low_pump_regime``.
    """
    if mode is None:
        mode = "coherent" if spec.Omega > 0 and spec.P == 0 else "incoherent"
    d = spec.derived()
    GP, gS, gam = d.Gamma_P, d.gamma_S, spec.gamma
    if mode == "coherent":
        W = d.Omega_2p
        inv_tau = 0.5 * (GP - np.real(np.sqrt(complex(GP ** 2 - 4 * W ** 2))))
        return CascadedPrediction("coherent", None, None, None, None, None, inv_tau, inv_tau)
    if mode != "incoherent":
        raise ValueError(f"unknown drive mode {mode!r}")
    P = spec.P
    if P <= 0:
        raise SpecError("incoherent closed forms require P > 0")
    g, J, k = spec.g, spec.J, spec.kappa
    den = 8 * g ** 2 * P * J ** 2 * (P + gS) + 4 * g ** 4 * P * k + J ** 2 * k * P ** 3
    rho_S = P ** 2 * J ** 2 * (8 * g ** 2 + gS * k) / den
    rho_A = P * (4 * g ** 2 * J ** 2 * gS + 2 * g ** 4 * k + J ** 2 * k * gS * gam) / den
    rho_ee = P ** 2 * J ** 2 * k * (P + gam) / den
    simplified = 1.0 / (1 + P / (2 * GP) + gS / P + GP / (8 * P) * (k / J) ** 2)
    purcell = 1.0 / (1 + P / (2 * GP) + gS / P)
    inv_tau = P + GP + gS / 2 - math.sqrt(P * gS + 0.25 * (gS - 2 * GP) ** 2)
    approx = P + GP - math.sqrt(GP ** 2 + P * gS)
    return CascadedPrediction(
        "incoherent", rho_S, rho_A, rho_ee, simplified, purcell, inv_tau, approx,
        low_pump_regime=P < gam,
    )


def three_level_liouvillian(spec: SystemSpec) -> Liouvillian:
    """Cascaded ``{|gg>, |S>, |ee>}`` model under incoherent pumping."""
    d = spec.derived()
    layout = SubsystemLayout((3,))
    gg_S = np.zeros((3, 3), complex)
    gg_S[0, 1] = 1.0
    S_ee = np.zeros((3, 3), complex)
    S_ee[1, 2] = 1.0
    ops = [(d.gamma_S / 2, gg_S), (d.Gamma_P, S_ee), (spec.P / 2, gg_S.T), (spec.P / 2, S_ee.T)]
    L = sum(rate * qop.dissipator_matrix(op) for rate, op in ops)
    return Liouvillian(layout, sp.csr_matrix(L))


@dataclass(frozen=True)
class OptimalPump:
    P_opt: float
    rho_S_max: float
    rho_S_max_J_limited: float
    rho_S_max_C_limited: float
    regime: str


def optimal_pump(spec: SystemSpec) -> OptimalPump:
    """Pump rate maximizing the symmetric population, and that maximum."""
    d = spec.derived()
    if d.C <= 0 or spec.J <= 0:
        raise SpecError("optimal pump needs C > 0 and J > 0")
    ratio = spec.kappa / spec.J
    root = math.sqrt(ratio ** 2 + 16.0 / d.C)
    balance = d.C * ratio ** 2 / 16.0
    if balance >= MUCH_GREATER:
        regime = "J-limited"
    elif balance * MUCH_GREATER <= 1.0:
        regime = "C-limited"
    else:
        regime = "intermediate"
    return OptimalPump(
        P_opt=0.5 * d.Gamma_P * root,
        rho_S_max=1.0 / (1.0 + 0.5 * root),
        rho_S_max_J_limited=1.0 / (1.0 + ratio / 2.0),
        rho_S_max_C_limited=1.0 / (1.0 + 2.0 / math.sqrt(d.C)),
        regime=regime,
    )


GATE_NAMES = ("gate_J_kappa", "gate_kappa_GammaP", "gate_GammaP_gamma", "gate_GammaP_P")


def hierarchy_gates(spec: SystemSpec, factor: float = MUCH_GREATER) -> Dict[str, bool]:
    """Rate-hierarchy predicates ``J>>kappa``, ``kappa>>Gamma_P``, ``Gamma_P>>gamma``, ``Gamma_P>>P``."""
    d = spec.derived()
    return {
        "gate_J_kappa": abs(spec.J) >= factor * spec.kappa,
        "gate_kappa_GammaP": spec.kappa >= factor * d.Gamma_P,
        "gate_GammaP_gamma": d.Gamma_P >= factor * spec.gamma,
        "gate_GammaP_P": d.Gamma_P >= factor * spec.P,
    }


def numerical_optimum(
    spec: SystemSpec,
    name: str,
    grid: Sequence[float],
    objective: Callable[[SystemSpec], float],
) -> tuple:
    """Scan parameter ``name`` over ``grid``; return ``(best_value, best_objective, values)``.

    Used for the coherent-drive optimum, which has no closed form.
    """
    values = np.array([objective(spec.replace(**{name: float(x)})) for x in grid])
    k = int(np.nanargmax(values))
    return float(grid[k]), float(values[k]), values
