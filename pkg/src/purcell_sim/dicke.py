"""Permutationally invariant representation of ``N`` identical emitters + cavity.

A permutation-symmetric emitter state is block diagonal in the total spin
``j`` and, inside each block, identical on every one of the ``d_j``
degenerate copies. It is therefore stored as one matrix per block,

    p_j = d_j * rho_j        (shape ``(2j+1) n_c`` squared),

where ``rho_j`` is the density matrix on a single copy tensored with the
cavity. With this weighting ``Tr rho = sum_j Tr p_j``. Inside a block the
flat index of ``|j, m> ⊗ |n>`` is ``(j - m) * n_c + n``; blocks are ordered
from ``j = N/2`` downwards.

Collective operators act inside a block. Local channels (``sum_i A_i rho
A_i^dag`` with ``A`` one of ``sigma``, ``sigma^dag``, ``sigma_z``) move
weight between neighbouring blocks ``j -> j' ∈ {j-1, j, j+1}`` as

    p_j' += R(j, j') T p_j T^dag,   T[m+q, m] = c_q <j m; 1 q | j' m+q>,

with ``c_q`` the spherical-tensor normalization of the single-site
operator and ``R`` a scalar depending only on ``N, j, j'``.
:func:`extract_local_coefficients` recovers the same numbers by brute-force
symmetrization of the full space and is the reference they are tested
against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from . import qop
from .errors import HeraldImpossibleError, LayoutError, SpecError
from .model import SystemSpec
from .qop import DensityMatrix

#: ``to_full`` and the symmetrization oracle are limited to this many emitters.
FULL_SPACE_MAX_N = 8

#: Spherical-tensor prefactor of each single-site operator.
CHANNEL_Q = {"-": -1, "+": 1, "z": 0}
CHANNEL_C = {"-": math.sqrt(2.0), "+": -math.sqrt(2.0), "z": 2.0}


# --- angular momentum -------------------------------------------------------------

def multiplicity(N: int, j: float) -> int:
    """Number of degenerate spin-``j`` copies among ``N`` spin-1/2."""
    k = int(round(N / 2 - j))
    return math.comb(N, k) - (math.comb(N, k - 1) if k >= 1 else 0)


def cg_rank1(j: float, m: float, q: int, jp: float) -> float:
    """``<j m; 1 q | jp m+q>`` for ``jp`` in ``{j-1, j, j+1}``."""
    M = m + q
    if abs(M) > jp + 1e-12 or abs(m) > j + 1e-12 or jp < 0:
        return 0.0
    if abs(jp - j) < 1e-12 and j < 1e-12:
        return 0.0

    def root(num, den):
        return math.sqrt(max(num, 0.0) / den)

    if abs(jp - (j + 1)) < 1e-12:
        den = (2 * j + 1) * (2 * j + 2)
        if q == 1:
            return root((j + M) * (j + M + 1), den)
        if q == 0:
            return root((j - M + 1) * (j + M + 1), (2 * j + 1) * (j + 1))
        return root((j - M) * (j - M + 1), den)
    if abs(jp - j) < 1e-12:
        den = 2 * j * (j + 1)
        if q == 1:
            return -root((j + M) * (j - M + 1), den)
        if q == 0:
            return M / math.sqrt(j * (j + 1))
        return root((j - M) * (j + M + 1), den)
    if abs(jp - (j - 1)) < 1e-12:
        den = 2 * j * (2 * j + 1)
        if q == 1:
            return root((j - M) * (j - M + 1), den)
        if q == 0:
            return -root((j - M) * (j + M), j * (2 * j + 1))
        return root((j + M + 1) * (j + M), den)
    return 0.0


def block_transfer_scalar(N: int, j: float, jp: float) -> float:
    """Scalar ``R(j, j')`` of the local sandwich in block-weight coordinates."""
    if abs(jp - (j + 1)) < 1e-12:
        return (N / 2 - j) / 2
    if abs(jp - j) < 1e-12:
        return (N / 2 + 1) / 2
    if abs(jp - (j - 1)) < 1e-12:
        return (N / 2 + j + 1) / 2
    return 0.0


def transfer_matrix(channel: str, j: float, jp: float) -> np.ndarray:
    """``T[k', k] = c_q <j m; 1 q | j' m+q>`` with ``k = j - m``, ``k' = j' - m'``."""
    q, c = CHANNEL_Q[channel], CHANNEL_C[channel]
    T = np.zeros((int(round(2 * jp + 1)), int(round(2 * j + 1))))
    for k in range(T.shape[1]):
        m = j - k
        kp = jp - (m + q)
        if -1e-9 < kp < T.shape[0] - 1 + 1e-9:
            T[int(round(kp)), k] = c * cg_rank1(j, m, q, jp)
    return T


def local_coefficients(N: int) -> Dict[tuple, float]:
    """Production block-mixing coefficients keyed ``(channel, j, j', m, m')``.

    The value is the amplitude transferred from the ``|j m><j m'|`` element
    of ``p_j`` to the ``|j' m+q><j' m'+q|`` element of ``p_j'``.
    """
    space = DickeSpace(N, 1)
    out = {}
    for channel, q in CHANNEL_Q.items():
        for j in space.js:
            for jp in space.js:
                if abs(jp - j) > 1 + 1e-12:
                    continue
                T = transfer_matrix(channel, j, jp)
                R = block_transfer_scalar(N, j, jp)
                for k in range(T.shape[1]):
                    for kk in range(T.shape[1]):
                        m, mp = j - k, j - kk
                        if abs(m + q) > jp or abs(mp + q) > jp:
                            continue
                        a = int(round(jp - m - q))
                        b = int(round(jp - mp - q))
                        out[(channel, j, jp, m, mp)] = R * T[a, k] * T[b, kk]
    return out


# --- spaces and states ------------------------------------------------------------

@dataclass(frozen=True)
class DickeSpace:
    """Block structure of the symmetric ``N``-emitter space tensored with a cavity."""

    N: int
    cavity_dim: int

    def __post_init__(self):
        if self.N < 1 or self.cavity_dim < 1:
            raise LayoutError("need N >= 1 and cavity_dim >= 1")

    @property
    def js(self) -> List[float]:
        return [self.N / 2 - k for k in range(self.N // 2 + 1)]

    @property
    def blocks(self) -> List[Tuple[float, int]]:
        return [(j, multiplicity(self.N, j)) for j in self.js]

    def block_dim(self, j: float) -> int:
        return int(round(2 * j + 1)) * self.cavity_dim

    @property
    def block_dims(self) -> List[int]:
        return [self.block_dim(j) for j in self.js]

    @property
    def vector_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([d * d for d in self.block_dims])])

    @property
    def vector_size(self) -> int:
        return int(self.vector_offsets[-1])

    def block_index(self, j: float) -> int:
        k = self.N / 2 - j
        if abs(k - round(k)) > 1e-9 or not 0 <= round(k) <= self.N // 2:
            raise LayoutError(f"j = {j} is not a block of N = {self.N}")
        return int(round(k))

    def basis_index(self, j: float, m: float, n: int = 0) -> Tuple[int, int]:
        """``(block, local index)`` of ``|j, m> ⊗ |n>``."""
        b = self.block_index(j)
        if abs(m) > j + 1e-12 or abs((j - m) - round(j - m)) > 1e-9:
            raise LayoutError(f"m = {m} invalid for j = {j}")
        if not 0 <= n < self.cavity_dim:
            raise LayoutError(f"photon number {n} outside truncation")
        return b, int(round(j - m)) * self.cavity_dim + n

    def excitations(self, j: float) -> np.ndarray:
        """``m + N/2 + n`` for every basis state of block ``j``."""
        ms = j - np.arange(int(round(2 * j + 1)))
        return np.add.outer(ms + self.N / 2, np.arange(self.cavity_dim)).ravel().round().astype(int)


@dataclass(frozen=True)
class DickeTarget:
    """Pure Dicke state ``|j, m>`` on the maximal-``j`` block."""

    N: int
    kind: str
    j: float
    m: float

    def energy(self, J: float) -> float:
        """Eigenvalue of ``J S^+ S^-``: ``J [j(j+1) - m(m-1)]``."""
        return J * (self.j * (self.j + 1) - self.m * (self.m - 1))

    def ket(self) -> np.ndarray:
        """Unit vector on block ``j = N/2`` (no cavity)."""
        v = np.zeros(self.N + 1)
        v[int(round(self.j - self.m))] = 1.0
        return v

    def full_ket(self) -> np.ndarray:
        if self.N > FULL_SPACE_MAX_N:
            raise LayoutError(f"full-space vectors limited to N <= {FULL_SPACE_MAX_N}")
        return dicke_basis(self.N)[self.j][0][:, int(round(self.j - self.m))]


def dicke_target(N: int, kind: str) -> DickeTarget:
    """``"top"`` is ``|N/2, N/2>``; ``"W"`` is ``|N/2, N/2 - 1>``."""
    if kind == "top":
        return DickeTarget(N, kind, N / 2, N / 2)
    if kind == "W":
        return DickeTarget(N, kind, N / 2, N / 2 - 1)
    raise ValueError(f"unknown Dicke target kind {kind!r}; use 'top' or 'W'")


def _as_dicke_target(target, N: int) -> Optional[DickeTarget]:
    if isinstance(target, DickeTarget):
        return target
    kind = getattr(target, "kind", None)
    if kind == "W_N" or (kind == "symmetric_S" and N == 2):
        return dicke_target(N, "W")
    return None


@dataclass(frozen=True)
class PimState:
    """Block-weight representation ``p_j = d_j rho_j`` of a symmetric state."""

    space: DickeSpace
    blocks: tuple

    def __post_init__(self):
        dims = self.space.block_dims
        if len(self.blocks) != len(dims):
            raise LayoutError("one matrix per Dicke block is required")
        frozen = []
        for p, d in zip(self.blocks, dims):
            p = np.array(p, dtype=complex)
            if p.shape != (d, d):
                raise LayoutError(f"block shape {p.shape} != {(d, d)}")
            p.setflags(write=False)
            frozen.append(p)
        object.__setattr__(self, "blocks", tuple(frozen))

    @classmethod
    def basis_state(cls, space: DickeSpace, j: float, m: float, n: int = 0) -> "PimState":
        b, k = space.basis_index(j, m, n)
        blocks = [np.zeros((d, d), complex) for d in space.block_dims]
        blocks[b][k, k] = 1.0
        return cls(space, tuple(blocks))

    @classmethod
    def ground(cls, space: DickeSpace) -> "PimState":
        """All emitters in ``|g>``, cavity empty."""
        return cls.basis_state(space, space.N / 2, -space.N / 2, 0)

    @property
    def trace(self) -> complex:
        return sum(np.trace(p) for p in self.blocks)

    def block_weights(self) -> np.ndarray:
        return np.array([np.trace(p).real for p in self.blocks])

    def hermitized(self) -> "PimState":
        blocks = [0.5 * (p + p.conj().T) for p in self.blocks]
        tr = sum(np.trace(p).real for p in blocks)
        return PimState(self.space, tuple(p / tr for p in blocks))

    def validate(self, trace_tol=1e-10, herm_tol=1e-10, psd_tol=1e-8) -> None:
        if abs(self.trace - 1) > trace_tol:
            raise ValueError(f"trace {self.trace:.3e} differs from 1")
        for j, p in zip(self.space.js, self.blocks):
            if np.max(np.abs(p - p.conj().T), initial=0.0) > herm_tol:
                raise ValueError(f"block j={j} is not Hermitian")
            if p.size and np.linalg.eigvalsh(0.5 * (p + p.conj().T)).min() < -psd_tol:
                raise ValueError(f"block j={j} has a negative eigenvalue")

    def trace_distance(self, other: "PimState") -> float:
        """Half the trace norm of the difference (block diagonal, so blockwise)."""
        if other.space != self.space:
            raise LayoutError("states live on different Dicke spaces")
        total = 0.0
        for (_, d), a, b in zip(self.space.blocks, self.blocks, other.blocks):
            diff = (a - b) / d
            total += d * np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum()
        return 0.5 * float(total)

    def dicke_fidelity(self, target) -> float:
        """``<psi|rho|psi>`` for a target on the ``j = N/2`` block, cavity traced out."""
        t = _as_dicke_target(target, self.space.N)
        if t is None:
            psi = np.asarray(target.amplitudes)
            red = qop.partial_trace(self.to_full(), range(self.space.N))
            return float(np.real(np.vdot(psi, red.matrix @ psi)))
        b, k0 = self.space.basis_index(t.j, t.m, 0)
        p = self.blocks[b]
        nc = self.space.cavity_dim
        return float(np.real(sum(p[k0 + n, k0 + n] for n in range(nc))))

    def cavity_reduced(self) -> np.ndarray:
        nc = self.space.cavity_dim
        out = np.zeros((nc, nc), complex)
        for p in self.blocks:
            k = p.shape[0] // nc
            out += np.einsum("inib->nb", p.reshape(k, nc, k, nc))
        return out

    def apply_cavity_jump(self, floor: float = 1e-14) -> "PimState":
        """Conditional state after one cavity photon, ``a rho a^dag`` normalized."""
        nc = self.space.cavity_dim
        a = qop.destroy(nc)
        out = []
        for j, p in zip(self.space.js, self.blocks):
            A = np.kron(np.eye(int(round(2 * j + 1))), a)
            out.append(A @ p @ A.T)
        prob = sum(np.trace(p).real for p in out)
        if prob < floor:
            raise HeraldImpossibleError(f"photon detection probability {prob:.3e} below {floor}")
        return PimState(self.space, tuple(p / prob for p in out))

    def to_full(self) -> DensityMatrix:
        """Expand to the ``2^N`` emitter ⊗ cavity space (``N <= 8``)."""
        N, nc = self.space.N, self.space.cavity_dim
        if N > FULL_SPACE_MAX_N:
            raise LayoutError(f"full-space expansion limited to N <= {FULL_SPACE_MAX_N}")
        basis = dicke_basis(N)
        D = 2 ** N * nc
        rho = np.zeros((D, D), complex)
        Ic = np.eye(nc)
        for (j, d), p in zip(self.space.blocks, self.blocks):
            for V in basis[j]:
                W = np.kron(V, Ic)
                rho += W @ (p / d) @ W.conj().T
        return DensityMatrix(qop.SubsystemLayout((2,) * N + (nc,)), rho)

    @classmethod
    def from_full(cls, rho: DensityMatrix, N: int) -> "PimState":
        """Project a full-space state onto block weights (exact for symmetric states)."""
        nc = rho.layout.dims[-1]
        space = DickeSpace(N, nc)
        basis = dicke_basis(N)
        Ic = np.eye(nc)
        blocks = []
        for j in space.js:
            p = sum(np.kron(V, Ic).conj().T @ rho.matrix @ np.kron(V, Ic) for V in basis[j])
            blocks.append(p)
        return cls(space, tuple(blocks))


# --- full-space reference -----------------------------------------------------------

def _collective_full(N: int):
    lay = qop.SubsystemLayout((2,) * N)
    sig = [qop.embed(qop.qubit_lowering(), i, lay).toarray().real for i in range(N)]
    sz = [qop.embed(qop.qubit_sigma_z(), i, lay).toarray().real for i in range(N)]
    return sig, sz


@lru_cache(maxsize=None)
def dicke_basis(N: int) -> Dict[float, tuple]:
    """Orthonormal ``|j, m, alpha>`` vectors in the product basis.

    Returns ``{j: (V_1, ..., V_dj)}`` with ``V_alpha[:, j - m] = |j, m, alpha>``.
    Each copy is generated by lowering a highest-weight state with ``S^-``.
    """
    if N > FULL_SPACE_MAX_N:
        raise LayoutError(f"full-space basis limited to N <= {FULL_SPACE_MAX_N}")
    sig, _ = _collective_full(N)
    Sm = sum(sig)
    Sp = Sm.T
    n_exc = np.array([bin(x).count("1") for x in range(2 ** N)])
    out = {}
    for j in DickeSpace(N, 1).js:
        cols = np.flatnonzero(n_exc == round(N / 2 + j))
        hw = np.zeros((2 ** N, 0))
        if cols.size:
            ker = la.null_space(Sp[:, cols]) if j < N / 2 else np.ones((1, 1))
            hw = np.zeros((2 ** N, ker.shape[1]))
            hw[cols, :] = ker
        copies = []
        for a in range(hw.shape[1]):
            V = np.zeros((2 ** N, int(round(2 * j + 1))))
            v = hw[:, a]
            m = j
            for k in range(V.shape[1]):
                V[:, k] = v
                if k + 1 < V.shape[1]:
                    v = Sm @ v / math.sqrt(j * (j + 1) - m * (m - 1))
                    m -= 1
            copies.append(V)
        out[j] = tuple(copies)
    return out


def extract_local_coefficients(N: int) -> Tuple[Dict[tuple, float], float]:
    """Brute-force block-mixing coefficients from the full ``2^N`` space.

    For every ``E^j_{m m'} = sum_alpha |j m alpha><j m' alpha|`` the local
    sandwich ``sum_i A_i E A_i^dag`` is computed explicitly and projected
    back onto the ``E^{j'}`` family. Returns the coefficients in block-weight
    units, keyed as in :func:`local_coefficients`, and the largest norm of
    what the projection misses (zero if the family is closed).
    """
    basis = dicke_basis(N)
    sig, sz = _collective_full(N)
    local = {"-": sig, "+": [s.T for s in sig], "z": sz}

    def E(j, m, mp):
        a, b = int(round(j - m)), int(round(j - mp))
        return sum(np.outer(V[:, a], V[:, b]) for V in basis[j])

    js = DickeSpace(N, 1).js
    coeffs, worst = {}, 0.0
    for channel, q in CHANNEL_Q.items():
        ops = local[channel]
        for j in js:
            dj = multiplicity(N, j)
            for m in np.arange(j, -j - 0.5, -1):
                for mp in np.arange(j, -j - 0.5, -1):
                    Y = sum(A @ E(j, m, mp) @ A.T for A in ops)
                    rest = Y.copy()
                    for jp in js:
                        if abs(jp - j) > 1 + 1e-12 or abs(m + q) > jp or abs(mp + q) > jp:
                            continue
                        Z = E(jp, m + q, mp + q)
                        c = np.sum(Z * Y) / np.sum(Z * Z)
                        rest -= c * Z
                        coeffs[(channel, j, jp, float(m), float(mp))] = c * multiplicity(N, jp) / dj
                    worst = max(worst, float(np.abs(rest).max()))
    return coeffs, worst


# --- generator ------------------------------------------------------------------

@dataclass(frozen=True)
class PimLiouvillian:
    """Generator on the concatenated, column-stacked block vectors."""

    space: DickeSpace
    superop: sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.superop.shape[0]

    def trace_vector(self) -> np.ndarray:
        return np.concatenate([qop.vec(np.eye(d, dtype=complex)) for d in self.space.block_dims])

    def state_to_vector(self, state: PimState) -> np.ndarray:
        if state.space != self.space:
            raise LayoutError("state and generator live on different Dicke spaces")
        return np.concatenate([qop.vec(p) for p in state.blocks]).astype(complex)

    def vector_to_state(self, v: np.ndarray) -> PimState:
        off = self.space.vector_offsets
        return PimState(
            self.space,
            tuple(qop.unvec(v[off[b]:off[b + 1]], d) for b, d in enumerate(self.space.block_dims)),
        )

    def coherence_degree(self) -> np.ndarray:
        parts = []
        for j in self.space.js:
            e = self.space.excitations(j)
            parts.append(np.tile(e, e.size) - np.repeat(e, e.size))
        return np.concatenate(parts)

    def apply(self, state: PimState) -> PimState:
        return self.vector_to_state(self.superop @ self.state_to_vector(state))


def _block_operators(j: float, nc: int):
    dim_s = int(round(2 * j + 1))
    ms = j - np.arange(dim_s)
    low = np.sqrt(np.maximum(j * (j + 1) - ms[:-1] * (ms[:-1] - 1), 0.0))
    Jm = sp.diags(low, -1, shape=(dim_s, dim_s), format="csr")
    Jz = sp.diags(ms, 0, format="csr")
    Is, Ic = sp.identity(dim_s, format="csr"), sp.identity(nc, format="csr")
    a = sp.csr_matrix(qop.destroy(nc))
    return sp.kron(Jm, Ic, "csr"), sp.kron(Jz, Ic, "csr"), sp.kron(Is, a, "csr"), sp.kron(Is, Ic, "csr")


def build_pim_liouvillian(spec: SystemSpec) -> PimLiouvillian:
    """Generator of ``spec`` in block-weight coordinates.

    Supports the ``all_to_all`` model and the unbiased dimer (``delta = 0``),
    which are the permutation-symmetric cases.
    """
    if spec.model_kind == "dimer" and spec.delta != 0:
        raise SpecError("a detuned dimer breaks permutation symmetry; use the full solver")
    N, nc = spec.n_emitters, spec.n_max + 1
    space = DickeSpace(N, nc)
    js = space.js
    nb = len(js)
    local = {
        "-": spec.gamma - spec.gamma_collective + spec.Gamma_extra,
        "+": spec.P,
        "z": spec.gamma_phi,
    }
    grid = [[None] * nb for _ in range(nb)]
    for b, j in enumerate(js):
        Jm, Jz, a, I = _block_operators(j, nc)
        Jp = Jm.T.tocsr()
        H = spec.J * (Jp @ Jm) + spec.Delta_a * (a.T @ a) + spec.g * (a.T @ Jm + Jp @ a)
        if spec.model_kind == "dimer":
            H = H - spec.J * (Jz + (N / 2) * I)
        if spec.Omega:
            H = H + spec.Omega * (Jm + Jp)
        L = -1j * (qop.spre(H) - qop.spost(H))
        L = L + (spec.kappa / 2) * qop.dissipator_matrix(a)
        if spec.gamma_collective:
            L = L + (spec.gamma_collective / 2) * qop.dissipator_matrix(Jm)
        if spec.Gamma_phi:
            L = L + (spec.Gamma_phi / 2) * qop.dissipator_matrix(2 * Jz)
        # anticommutator halves of the local channels
        K = local["-"] * (Jz + (N / 2) * I) + local["+"] * ((N / 2) * I - Jz) + local["z"] * N * I
        L = L - 0.5 * (qop.spre(K) + qop.spost(K))
        grid[b][b] = sp.csr_matrix(L)
    Ic = np.eye(nc)
    for channel, rate in local.items():
        if not rate:
            continue
        for b, j in enumerate(js):
            for bp, jp in enumerate(js):
                if abs(jp - j) > 1 + 1e-12:
                    continue
                R = block_transfer_scalar(N, j, jp)
                T = np.kron(transfer_matrix(channel, j, jp), Ic)
                if R == 0 or not T.any():
                    continue
                block = rate * R * sp.kron(sp.csr_matrix(T), sp.csr_matrix(T), "csr")
                grid[bp][b] = block if grid[bp][b] is None else grid[bp][b] + block
    superop = sp.bmat(grid, format="csr")
    return PimLiouvillian(space, superop)
