"""Tensor-product operator algebra and Lindblad superoperators.

Conventions
-----------
* Density matrices are vectorized by **column stacking**:
  ``vec(rho) = rho.reshape(-1, order="F")`` so that
  ``vec(A @ X @ B) = kron(B.T, A) @ vec(X)``.
* Subsystems are ordered as listed in :class:`SubsystemLayout`; the first
  site is the most significant (slowest) index of the Kronecker product.
* Qubits use the local basis ``(|g>, |e>)``; the lowering operator is
  ``|g><e|`` and ``sigma_z = 2 sigma^dag sigma - 1 = diag(-1, +1)``.
* The dissipator follows ``D[A, B] rho = 2 A rho B^dag - {B^dag A, rho}``;
  rate prefactors are applied by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import LayoutError

#: Operators on spaces up to this total dimension are stored densely.
DENSE_MAX_DIM = 64

Matrix = Union[np.ndarray, sp.spmatrix]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


def vec(mat: np.ndarray) -> np.ndarray:
    """Column-stack a square matrix into a vector."""
    return np.asarray(mat).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: Optional[int] = None) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise LayoutError(f"vector of length {v.size} is not a vectorized {dim}x{dim} matrix")
    return v.reshape((dim, dim), order="F")


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered local dimensions of a tensor-product Hilbert space."""

    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise LayoutError(f"invalid local dimensions {self.dims!r}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    def __len__(self):
        return len(self.dims)

    def basis_index(self, labels: Sequence[int]) -> int:
        """Flat index of the product basis state with local indices ``labels``."""
        if len(labels) != len(self.dims):
            raise LayoutError("label count does not match the layout")
        return int(np.ravel_multi_index(tuple(labels), self.dims))


def _as_layout(layout) -> SubsystemLayout:
    return layout if isinstance(layout, SubsystemLayout) else SubsystemLayout(tuple(layout))


def _storage(mat, dim: int) -> Matrix:
    """Pick dense or sparse storage by the size threshold."""
    if dim <= DENSE_MAX_DIM:
        return np.asarray(mat.toarray() if sp.issparse(mat) else mat, dtype=complex)
    return sp.csr_matrix(mat, dtype=complex)


def _require_same_layout(a, b):
    if a.layout != b.layout:
        raise LayoutError(f"layout mismatch: {a.layout.dims} vs {b.layout.dims}")


@dataclass(frozen=True)
class LabeledOperator:
    """A matrix acting on the space described by ``layout``."""

    layout: SubsystemLayout
    matrix: Matrix

    def __post_init__(self):
        layout = _as_layout(self.layout)
        d = layout.total_dim
        if self.matrix.shape != (d, d):
            raise LayoutError(
                f"matrix shape {self.matrix.shape} does not fit layout {layout.dims}"
            )
        mat = _storage(self.matrix, d)
        if isinstance(mat, np.ndarray):
            mat = _freeze(mat)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", mat)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.array(self.matrix)

    def tocsr(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.matrix)

    def dag(self) -> "LabeledOperator":
        m = self.matrix
        return LabeledOperator(self.layout, m.conj().T if self.is_sparse else m.conj().T.copy())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.conj().T
        err = abs(diff).max() if diff.size else 0.0
        return float(err) <= tol

    def __add__(self, other):
        _require_same_layout(self, other)
        return LabeledOperator(self.layout, self.matrix + other.matrix)

    def __sub__(self, other):
        _require_same_layout(self, other)
        return LabeledOperator(self.layout, self.matrix - other.matrix)

    def __neg__(self):
        return LabeledOperator(self.layout, -self.matrix)

    def __mul__(self, scalar):
        return LabeledOperator(self.layout, self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        _require_same_layout(self, other)
        return LabeledOperator(self.layout, self.matrix @ other.matrix)


def identity(layout) -> LabeledOperator:
    layout = _as_layout(layout)
    return LabeledOperator(layout, sp.identity(layout.total_dim, dtype=complex, format="csr"))


def zero(layout) -> LabeledOperator:
    layout = _as_layout(layout)
    d = layout.total_dim
    return LabeledOperator(layout, sp.csr_matrix((d, d), dtype=complex))


def embed(local_op, site: int, layout) -> LabeledOperator:
    """Place ``local_op`` at position ``site`` with identities elsewhere.

    Parameters
    ----------
    local_op : array_like, shape (d_k, d_k)
        Operator acting on subsystem ``site``.
    site : int
        Position in ``layout.dims``.
    layout : SubsystemLayout or sequence of int

    Returns
    -------
    LabeledOperator
        ``I ⊗ ... ⊗ local_op ⊗ ... ⊗ I``.
    """
    layout = _as_layout(layout)
    if not 0 <= site < layout.n_sites:
        raise LayoutError(f"site {site} outside layout with {layout.n_sites} sites")
    local = local_op.toarray() if sp.issparse(local_op) else np.asarray(local_op)
    dk = layout.dims[site]
    if local.shape != (dk, dk):
        raise LayoutError(f"local operator shape {local.shape} does not match dims[{site}]={dk}")
    left = int(np.prod(layout.dims[:site]))
    right = int(np.prod(layout.dims[site + 1 :]))
    mat = sp.kron(
        sp.kron(sp.identity(left, format="csr"), sp.csr_matrix(local, dtype=complex)),
        sp.identity(right, format="csr"),
        format="csr",
    )
    return LabeledOperator(layout, mat)


# --- local operators -------------------------------------------------------

def qubit_lowering() -> np.ndarray:
    """``|g><e|`` in the ``(|g>, |e>)`` basis."""
    return np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


def qubit_sigma_z() -> np.ndarray:
    """``2 sigma^dag sigma - 1``."""
    return np.diag([-1.0, 1.0]).astype(complex)


def destroy(dim: int) -> np.ndarray:
    """Truncated bosonic annihilation operator on ``dim`` Fock levels."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


# --- density matrices -------------------------------------------------------

@dataclass(frozen=True)
class DensityMatrix:
    """A quantum state on ``layout``. Construction does not enforce positivity;
    call :meth:`validate` where the invariants must hold."""

    layout: SubsystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        layout = _as_layout(self.layout)
        mat = self.matrix.toarray() if sp.issparse(self.matrix) else np.array(self.matrix, dtype=complex)
        d = layout.total_dim
        if mat.shape != (d, d):
            raise LayoutError(f"state shape {mat.shape} does not fit layout {layout.dims}")
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", _freeze(mat))

    @classmethod
    def from_ket(cls, layout, ket) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex).ravel()
        ket = ket / np.linalg.norm(ket)
        return cls(layout, np.outer(ket, ket.conj()))

    @classmethod
    def basis_state(cls, layout, labels: Sequence[int]) -> "DensityMatrix":
        layout = _as_layout(layout)
        ket = np.zeros(layout.total_dim, dtype=complex)
        ket[layout.basis_index(labels)] = 1.0
        return cls.from_ket(layout, ket)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return float(np.real(np.einsum("ij,ji->", self.matrix, self.matrix)))

    def eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return np.linalg.eigvalsh(herm)

    def hermitized(self) -> "DensityMatrix":
        """``(rho + rho^dag)/2`` normalized to unit trace."""
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return DensityMatrix(self.layout, herm / np.real(np.trace(herm)))

    def validate(self, trace_tol=1e-10, herm_tol=1e-10, psd_tol=1e-8) -> None:
        """Raise :class:`ValueError` unless the state is a valid density matrix."""
        m = self.matrix
        if abs(np.trace(m) - 1.0) > trace_tol:
            raise ValueError(f"trace {np.trace(m)} differs from 1")
        if np.abs(m - m.conj().T).max() > herm_tol:
            raise ValueError("state is not Hermitian")
        lo = self.eigenvalues().min()
        if lo < -psd_tol:
            raise ValueError(f"state has negative eigenvalue {lo:.3e}")


def trace_distance(a, b) -> float:
    """``||a - b||_1 / 2`` for two states (or raw matrices)."""
    ma = a.matrix if isinstance(a, DensityMatrix) else np.asarray(a)
    mb = b.matrix if isinstance(b, DensityMatrix) else np.asarray(b)
    diff = ma - mb
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduce ``rho`` onto the sites listed in ``keep`` (order preserved)."""
    keep = sorted(set(int(k) for k in keep))
    dims = rho.layout.dims
    n = len(dims)
    if not keep:
        raise LayoutError("partial trace needs a non-empty set of kept sites")
    if keep[0] < 0 or keep[-1] >= n:
        raise LayoutError(f"kept sites {keep} outside layout with {n} sites")
    tensor = rho.matrix.reshape(dims + dims)
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    reduced = np.einsum(tensor, row + col, out)
    dk = int(np.prod([dims[i] for i in keep]))
    return DensityMatrix(SubsystemLayout(tuple(dims[i] for i in keep)), reduced.reshape(dk, dk))


def expectation(op: LabeledOperator, rho: DensityMatrix) -> complex:
    """``Tr[op rho]``."""
    _require_same_layout(op, rho)
    if op.is_sparse:
        return complex(op.matrix.multiply(rho.matrix.T).sum())
    return complex(np.einsum("ij,ji->", op.matrix, rho.matrix))


# --- superoperators ---------------------------------------------------------

@dataclass(frozen=True)
class Liouvillian:
    """Sparse generator ``L`` of ``d vec(rho)/dt = L vec(rho)``.

    ``excitations`` optionally lists a conserved excitation number for each
    basis state; when present, ``L`` is promised not to couple
    ``|i><j|`` elements of different ``excitations[i] - excitations[j]``.
    """

    layout: SubsystemLayout
    superop: sp.csr_matrix
    excitations: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        layout = _as_layout(self.layout)
        d2 = layout.total_dim ** 2
        if self.superop.shape != (d2, d2):
            raise LayoutError(f"superoperator shape {self.superop.shape} does not fit layout {layout.dims}")
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "superop", sp.csr_matrix(self.superop, dtype=complex))
        if self.excitations is not None:
            object.__setattr__(self, "excitations", _freeze(np.asarray(self.excitations, dtype=int)))

    @property
    def dim(self) -> int:
        return self.superop.shape[0]

    def __add__(self, other: "Liouvillian") -> "Liouvillian":
        _require_same_layout(self, other)
        exc = None
        if (
            self.excitations is not None
            and other.excitations is not None
            and np.array_equal(self.excitations, other.excitations)
        ):
            exc = self.excitations
        return Liouvillian(self.layout, self.superop + other.superop, exc)

    def __mul__(self, scalar) -> "Liouvillian":
        return Liouvillian(self.layout, self.superop * scalar, self.excitations)

    __rmul__ = __mul__

    def apply(self, rho: DensityMatrix) -> np.ndarray:
        """Return the matrix ``L[rho]``."""
        _require_same_layout(self, rho)
        d = self.layout.total_dim
        return unvec(self.superop @ vec(rho.matrix), d)

    # generic generator protocol used by the solvers
    def trace_vector(self) -> np.ndarray:
        return vec(np.eye(self.layout.total_dim, dtype=complex))

    def state_to_vector(self, rho: DensityMatrix) -> np.ndarray:
        _require_same_layout(self, rho)
        return vec(rho.matrix).astype(complex)

    def vector_to_state(self, v: np.ndarray) -> DensityMatrix:
        return DensityMatrix(self.layout, unvec(v, self.layout.total_dim))

    def coherence_degree(self) -> Optional[np.ndarray]:
        """Excitation difference of every vectorized element, or None."""
        if self.excitations is None:
            return None
        exc = self.excitations
        d = exc.size
        # column stacking: k = row + d * col
        return np.tile(exc, d) - np.repeat(exc, d)


def _csr(op) -> sp.csr_matrix:
    if isinstance(op, LabeledOperator):
        return op.tocsr()
    return sp.csr_matrix(op, dtype=complex)


def spre(op) -> sp.csr_matrix:
    """Superoperator of ``rho -> op @ rho``."""
    a = _csr(op)
    return sp.kron(sp.identity(a.shape[0], format="csr"), a, format="csr")


def spost(op) -> sp.csr_matrix:
    """Superoperator of ``rho -> rho @ op``."""
    a = _csr(op)
    return sp.kron(a.T, sp.identity(a.shape[0], format="csr"), format="csr")


def sprepost(a, b) -> sp.csr_matrix:
    """Superoperator of ``rho -> a @ rho @ b``."""
    return sp.kron(_csr(b).T, _csr(a), format="csr")


def hamiltonian_superop(h: LabeledOperator) -> Liouvillian:
    """``-i[H, .]``."""
    return Liouvillian(h.layout, -1j * (spre(h) - spost(h)))


def dissipator_matrix(a, b=None) -> sp.csr_matrix:
    """Raw superoperator of ``D[a, b]`` (``b`` defaults to ``a``)."""
    a = _csr(a)
    b = a if b is None else _csr(b)
    bda = b.conj().T @ a
    return (2.0 * sprepost(a, b.conj().T) - spre(bda) - spost(bda)).tocsr()


def lindblad_dissipator(a: LabeledOperator, b: Optional[LabeledOperator] = None) -> Liouvillian:
    """Superoperator of ``D[A, B] rho = 2 A rho B^dag - {B^dag A, rho}``.

    ``lindblad_dissipator(a)`` is the ordinary dissipator ``D[A]``.
    """
    b = a if b is None else b
    _require_same_layout(a, b)
    return Liouvillian(a.layout, dissipator_matrix(a.matrix, b.matrix))


def assemble_liouvillian(
    hamiltonian: LabeledOperator,
    dissipators: Iterable[tuple],
    excitations: Optional[np.ndarray] = None,
) -> Liouvillian:
    """``-i[H, .] + sum rate * D[A, B]`` from ``(rate, A, B)`` triples."""
    total = -1j * (spre(hamiltonian) - spost(hamiltonian))
    for rate, a, b in dissipators:
        _require_same_layout(hamiltonian, a)
        _require_same_layout(hamiltonian, b)
        if rate == 0:
            continue
        total = total + rate * dissipator_matrix(a.matrix, b.matrix)
    return Liouvillian(hamiltonian.layout, sp.csr_matrix(total), excitations)


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Dense Kronecker product of a sequence (brute-force reference)."""
    return reduce(np.kron, [np.asarray(m) for m in mats])
