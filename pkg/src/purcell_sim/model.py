"""Physical parameter sets and the Hamiltonians/Liouvillians they define.

All rates and frequencies are in units of the local emitter decay rate
``gamma`` (which therefore defaults to 1). Hamiltonians are written in the
frame rotating at the mean emitter frequency, and the coherent drive is
resonant with it.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import qop
from .errors import AssemblyError, SpecError
from .qop import LabeledOperator, Liouvillian, SubsystemLayout

MODEL_KINDS = ("dimer", "all_to_all")


@dataclass(frozen=True)
class SystemSpec:
    """Full parameter set of the emitters + cavity problem.

    ``model_kind="dimer"`` is the detuned two-emitter model with emitter
    frequencies ``-delta``/``+delta`` and exchange ``J``;
    ``model_kind="all_to_all"`` is ``N`` degenerate emitters with
    ``H_q = J S^+ S^-``. ``gamma_collective`` is the cross decay rate shared
    by every emitter pair.
    """

    n_emitters: int = 2
    model_kind: str = "dimer"
    J: float = 9.18e4
    delta: float = 0.0
    gamma: float = 1.0
    gamma_collective: float = 0.0
    P: float = 0.0
    Omega: float = 0.0
    Delta_a: float = 0.0
    kappa: float = 1e4
    g: float = 0.0
    n_max: int = 4
    Gamma_extra: float = 0.0
    gamma_phi: float = 0.0
    Gamma_phi: float = 0.0

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise SpecError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if int(self.n_emitters) != self.n_emitters or self.n_emitters < 1:
            raise SpecError("n_emitters must be a positive integer")
        object.__setattr__(self, "n_emitters", int(self.n_emitters))
        if self.model_kind == "dimer" and self.n_emitters != 2:
            raise SpecError("the dimer model has exactly two emitters")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise SpecError("n_max must be an integer >= 1")
        object.__setattr__(self, "n_max", int(self.n_max))
        for name in ("gamma", "P", "kappa", "g", "Gamma_extra", "gamma_phi", "Gamma_phi", "Omega"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise SpecError(f"{name} must be a finite non-negative rate, got {value}")
        for name in ("J", "delta", "Delta_a", "gamma_collective"):
            if not math.isfinite(getattr(self, name)):
                raise SpecError(f"{name} must be finite")
        if abs(self.gamma_collective) > self.gamma * (1 + 1e-12):
            raise SpecError("|gamma_collective| must not exceed gamma (dissipation matrix positivity)")

    # --- convenience ---------------------------------------------------
    @property
    def layout(self) -> SubsystemLayout:
        return SubsystemLayout((2,) * self.n_emitters + (self.n_max + 1,))

    @property
    def emitter_layout(self) -> SubsystemLayout:
        return SubsystemLayout((2,) * self.n_emitters)

    @property
    def cavity_site(self) -> int:
        return self.n_emitters

    def replace(self, **changes) -> "SystemSpec":
        return dataclasses.replace(self, **changes)

    def derived(self) -> "DerivedRates":
        return DerivedRates.from_spec(self)

    def with_cooperativity(self, C: float) -> "SystemSpec":
        """Return a copy whose ``g`` gives cooperativity ``C`` at fixed ``kappa``."""
        if C < 0:
            raise SpecError("cooperativity must be non-negative")
        return self.replace(g=math.sqrt(C * self.gamma * self.kappa / 4.0))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SpecError(f"unknown SystemSpec keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SystemSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DerivedRates:
    Omega_2p: float
    Gamma_P: float
    C: float
    beta: float
    R: float
    gamma_S: float
    gamma_A: float
    P_S: float

    @classmethod
    def from_spec(cls, spec: SystemSpec) -> "DerivedRates":
        gamma_P = 4.0 * spec.g ** 2 / spec.kappa if spec.kappa > 0 else math.inf
        omega_2p = 2.0 * spec.Omega ** 2 / spec.J if spec.J != 0 else math.inf
        return cls(
            Omega_2p=omega_2p,
            Gamma_P=gamma_P,
            C=gamma_P / spec.gamma,
            beta=math.atan(abs(spec.delta) / abs(spec.J)) if spec.J != 0 else math.pi / 2,
            R=math.hypot(spec.J, spec.delta),
            gamma_S=spec.gamma + spec.gamma_collective,
            gamma_A=spec.gamma - spec.gamma_collective,
            P_S=omega_2p ** 2 / gamma_P if gamma_P > 0 else math.inf,
        )


# --- presets ----------------------------------------------------------------

_FIG1_J = 9.18e4


def _fig1(**kw) -> SystemSpec:
    base = dict(
        n_emitters=2,
        model_kind="dimer",
        J=_FIG1_J,
        delta=1e-2 * _FIG1_J,
        gamma_collective=0.999,
        kappa=1e4,
        g=1e3,
        P=40.0,
        Omega=0.0,
        Delta_a=-_FIG1_J,
    )
    base.update(kw)
    return SystemSpec(**base)


def _all_to_all(N, J, C, P, **kw) -> SystemSpec:
    # g = kappa / 10 at cooperativity C fixes kappa = 25 C gamma
    kappa = 25.0 * C
    base = dict(
        n_emitters=N,
        model_kind="all_to_all",
        J=J,
        gamma_collective=0.999,
        kappa=kappa,
        g=0.1 * kappa,
        P=P,
        Delta_a=J * (2 - N),
    )
    base.update(kw)
    return SystemSpec(**base)


PRESETS: dict = {
    "fig1": lambda: _fig1(),
    "fig1_coherent": lambda: _fig1(P=0.0, Omega=1e4),
    "sm_s7_n2": lambda: _fig1(kappa=12500.0, g=1250.0, P=66.39),
    "fig3c": lambda: _all_to_all(5, 1e5, 496.84, 132.3),
    "fig3c_weak": lambda: _all_to_all(5, 1e3, 496.84, 132.3),
    "fig3d": lambda: _all_to_all(50, 1e5, 500.0, 300.0, n_max=2),
}


def preset(name: str) -> SystemSpec:
    """Return a named parameter set (``fig1``, ``fig1_coherent``, ...)."""
    try:
        return PRESETS[name]()
    except KeyError:
        raise SpecError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None


# --- operators ------------------------------------------------------------------

def _ops(spec: SystemSpec, include_cavity: bool = True):
    layout = spec.layout if include_cavity else spec.emitter_layout
    sig = [qop.embed(qop.qubit_lowering(), i, layout) for i in range(spec.n_emitters)]
    a = qop.embed(qop.destroy(spec.n_max + 1), spec.cavity_site, layout) if include_cavity else None
    return layout, sig, a


def emitter_operators(spec: SystemSpec, include_cavity: bool = True):
    """Lowering operators ``sigma_i`` on the model layout."""
    return _ops(spec, include_cavity)[1]


def cavity_operator(spec: SystemSpec) -> LabeledOperator:
    return _ops(spec)[2]


def excitation_numbers(spec: SystemSpec, include_cavity: bool = True) -> np.ndarray:
    """Total excitation (excited emitters + photons) of each product basis state."""
    layout = spec.layout if include_cavity else spec.emitter_layout
    grids = np.indices(layout.dims).reshape(layout.n_sites, -1)
    return grids.sum(axis=0)


def build_hamiltonian(spec: SystemSpec, include_cavity: bool = True) -> LabeledOperator:
    """Rotating-frame Hamiltonian of ``spec``.

    With ``include_cavity=False`` only the emitter part (interaction and
    drive) is returned, on the emitter-only layout.
    """
    layout, sig, a = _ops(spec, include_cavity)
    d = layout.total_dim
    H = sp.csr_matrix((d, d), dtype=complex)
    sig_m = [s.tocsr() for s in sig]
    S_minus = sum(sig_m[1:], sig_m[0])
    if spec.model_kind == "dimer":
        s1, s2 = sig_m
        H = H - spec.delta * (s1.conj().T @ s1) + spec.delta * (s2.conj().T @ s2)
        H = H + spec.J * (s1.conj().T @ s2 + s2.conj().T @ s1)
    else:
        H = H + spec.J * (S_minus.conj().T @ S_minus)
    if include_cavity:
        am = a.tocsr()
        H = H + spec.Delta_a * (am.conj().T @ am)
        H = H + spec.g * (am.conj().T @ S_minus + S_minus.conj().T @ am)
    if spec.Omega:
        H = H + spec.Omega * (S_minus + S_minus.conj().T)
    op = LabeledOperator(layout, H)
    if not op.is_hermitian(1e-12 * max(1.0, abs(H).max())):
        raise AssemblyError("assembled Hamiltonian is not Hermitian")
    return op


def build_dissipators(spec: SystemSpec, include_cavity: bool = True) -> list:
    """``(rate, A, B)`` triples such that the dissipative part is ``sum rate D[A, B]``.

    The cavity, emitter-decay (diagonal and cross) and pump triples are always
    present; the optional extra channels appear only when their rate is nonzero.
    """
    layout, sig, a = _ops(spec, include_cavity)
    N = spec.n_emitters
    out = []
    if include_cavity:
        out.append((spec.kappa / 2.0, a, a))
    for i in range(N):
        for j in range(N):
            rate = spec.gamma if i == j else spec.gamma_collective
            out.append((rate / 2.0, sig[i], sig[j]))
    for i in range(N):
        out.append((spec.P / 2.0, sig[i].dag(), sig[i].dag()))
    if spec.Gamma_extra:
        for i in range(N):
            out.append((spec.Gamma_extra / 2.0, sig[i], sig[i]))
    if spec.gamma_phi or spec.Gamma_phi:
        sz = [qop.embed(qop.qubit_sigma_z(), i, layout) for i in range(N)]
        if spec.gamma_phi:
            for i in range(N):
                out.append((spec.gamma_phi / 2.0, sz[i], sz[i]))
        if spec.Gamma_phi:
            total = sz[0]
            for s in sz[1:]:
                total = total + s
            out.append((spec.Gamma_phi / 2.0, total, total))
    return out


def build_liouvillian(spec: SystemSpec, include_cavity: bool = True) -> Liouvillian:
    """``L = -i[H, .] + sum rate D[A, B]`` for ``spec``.

    When the coherent drive is off the excitation number is a weak symmetry
    and the result carries the per-state excitation numbers so solvers can
    restrict themselves to the relevant sector.
    """
    H = build_hamiltonian(spec, include_cavity)
    terms = build_dissipators(spec, include_cavity)
    exc = excitation_numbers(spec, include_cavity) if spec.Omega == 0 else None
    return qop.assemble_liouvillian(H, terms, exc)


def check_truncation(
    spec: SystemSpec,
    observable: Callable[[SystemSpec], float],
    extra: int = 2,
    tol: float = 1e-4,
) -> tuple:
    """Compare ``observable`` at ``n_max`` and ``n_max + extra``.

    Returns ``(converged, shift)``.
    """
    base = observable(spec)
    bigger = observable(spec.replace(n_max=spec.n_max + extra))
    shift = abs(bigger - base)
    return shift < tol, shift
