"""Entanglement and optical observables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import qop
from .errors import LayoutError, UndefinedStatisticsError
from .qop import DensityMatrix, SubsystemLayout

TARGET_KINDS = ("symmetric_S", "antisymmetric_A", "W_N", "custom")


@dataclass(frozen=True)
class TargetState:
    """Pure target over the ``2**N`` emitter basis (qubit order ``(g, e)``)."""

    kind: str
    N: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amps.size != 2 ** self.N:
            raise LayoutError(f"target has {amps.size} amplitudes, expected {2 ** self.N}")
        if abs(np.linalg.norm(amps) - 1.0) > 1e-12:
            raise ValueError("target amplitudes must have unit norm")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def symmetric(cls) -> "TargetState":
        return cls("symmetric_S", 2, _one_excitation(2, [1, 1]))

    @classmethod
    def antisymmetric(cls) -> "TargetState":
        # (|eg> - |ge>)/sqrt(2): site 0 excited carries the + sign
        return cls("antisymmetric_A", 2, _one_excitation(2, [1, -1]))

    @classmethod
    def w_state(cls, N: int) -> "TargetState":
        """Equal superposition of all states with exactly one emitter de-excited."""
        amps = np.zeros(2 ** N, dtype=complex)
        full = 2 ** N - 1
        for i in range(N):
            amps[full ^ (1 << (N - 1 - i))] = 1.0
        return cls("W_N", N, amps / np.sqrt(N))

    @classmethod
    def custom(cls, vector) -> "TargetState":
        vector = np.asarray(vector, dtype=complex).ravel()
        N = int(round(np.log2(vector.size)))
        return cls("custom", N, vector / np.linalg.norm(vector))


def _one_excitation(N, coeffs):
    amps = np.zeros(2 ** N, dtype=complex)
    for i, c in enumerate(coeffs):
        amps[1 << (N - 1 - i)] = c
    return amps / np.linalg.norm(amps)


def _emitter_part(rho: DensityMatrix, n_qubits: int) -> DensityMatrix:
    """Trace out any non-qubit tail sites."""
    if rho.layout.dims == (2,) * n_qubits:
        return rho
    if rho.layout.dims[:n_qubits] == (2,) * n_qubits:
        return qop.partial_trace(rho, range(n_qubits))
    raise LayoutError(f"state layout {rho.layout.dims} has no {n_qubits}-qubit prefix")


_SYSY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def concurrence(rho2) -> float:
    """Wootters concurrence of a two-qubit state.

    ``max(0, l1 - l2 - l3 - l4)`` with ``l_i`` the decreasing square roots of
    the eigenvalues of ``rho (sy⊗sy) rho* (sy⊗sy)``.
    """
    if isinstance(rho2, DensityMatrix):
        if rho2.layout.dims != (2, 2):
            raise LayoutError(f"concurrence needs a two-qubit layout, got {rho2.layout.dims}")
        m = rho2.matrix
    else:
        m = np.asarray(rho2)
        if m.shape != (4, 4):
            raise LayoutError("concurrence needs a 4x4 matrix")
    tilde = m @ _SYSY @ m.conj() @ _SYSY
    ev = np.sqrt(np.abs(np.linalg.eigvals(tilde)))
    ev = np.sort(ev)[::-1]
    return float(max(0.0, ev[0] - ev[1] - ev[2] - ev[3]))


def fidelity(rho, target: TargetState) -> float:
    """Pure-target overlap ``<psi|rho|psi>``.

    ``rho`` may still include the cavity as a trailing site; it is traced out.
    Permutation-invariant states delegate to their own Dicke-basis overlap.
    """
    if hasattr(rho, "dicke_fidelity"):
        return rho.dicke_fidelity(target)
    red = _emitter_part(rho, target.N)
    psi = target.amplitudes
    return float(np.real(np.vdot(psi, red.matrix @ psi)))


def _cavity_matrix(rho, cavity_site: Optional[int]) -> np.ndarray:
    if hasattr(rho, "cavity_reduced"):
        return rho.cavity_reduced()
    site = rho.layout.n_sites - 1 if cavity_site is None else cavity_site
    return qop.partial_trace(rho, [site]).matrix


def cavity_population(rho, cavity_site: Optional[int] = None) -> float:
    """``<a^dag a>``; the cavity is the last site unless stated otherwise."""
    m = _cavity_matrix(rho, cavity_site)
    n = np.arange(m.shape[0])
    return float(np.real(np.sum(n * np.diag(m))))


def g2_zero(rho, cavity_site: Optional[int] = None, floor: float = 1e-12) -> float:
    """``<a^dag a^dag a a> / <a^dag a>^2`` from the cavity's photon distribution."""
    m = _cavity_matrix(rho, cavity_site)
    probs = np.real(np.diag(m))
    n = np.arange(probs.size)
    mean = float(np.sum(n * probs))
    if mean <= floor:
        raise UndefinedStatisticsError(f"<a^dag a> = {mean:.3e} is below {floor}")
    second = float(np.sum(n * (n - 1) * probs))
    return max(second, 0.0) / mean ** 2


def photon_statistics(rho, cavity_site: Optional[int] = None) -> tuple:
    """``(<a^dag a>, g2(0))``; ``g2`` is NaN for an empty cavity."""
    n = cavity_population(rho, cavity_site)
    try:
        g2 = g2_zero(rho, cavity_site)
    except UndefinedStatisticsError:
        g2 = float("nan")
    return n, g2


def emitter_state(rho, n_qubits: int) -> DensityMatrix:
    """Reduced emitter state (cavity traced out)."""
    if hasattr(rho, "to_full"):
        rho = rho.to_full()
    return _emitter_part(rho, n_qubits)
