import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from purcell_sim import qop
from purcell_sim.errors import LayoutError
from purcell_sim.qop import DensityMatrix, LabeledOperator, SubsystemLayout


def random_matrix(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def random_state(rng, d):
    m = random_matrix(rng, d)
    rho = m @ m.conj().T
    return rho / np.trace(rho)


class TestVectorization:
    def test_column_stacking_identity(self):
        rng = np.random.default_rng(0)
        A, X, B = (random_matrix(rng, 3) for _ in range(3))
        assert np.allclose(qop.vec(A @ X @ B), np.kron(B.T, A) @ qop.vec(X))

    def test_unvec_roundtrip(self):
        X = np.arange(16.0).reshape(4, 4)
        assert np.array_equal(qop.unvec(qop.vec(X)), X)

    def test_unvec_rejects_non_square_length(self):
        with pytest.raises(LayoutError):
            qop.unvec(np.zeros(5))


class TestLayout:
    def test_total_dim_and_index(self):
        lay = SubsystemLayout((2, 2, 5))
        assert lay.total_dim == 20
        assert lay.basis_index([1, 0, 3]) == 13

    def test_invalid_dims(self):
        with pytest.raises(LayoutError):
            SubsystemLayout((2, 0))

    def test_storage_threshold(self):
        small = qop.identity((2, 2))
        big = qop.identity((2, 2, 2, 3, 3))
        assert not small.is_sparse
        assert big.is_sparse


@pytest.mark.parametrize("dims", [(2, 2), (2, 2, 3), (3, 2, 2)])
def test_embed_matches_kron_oracle(dims):
    rng = np.random.default_rng(len(dims))
    for site, d in enumerate(dims):
        local = random_matrix(rng, d)
        mats = [local if k == site else np.eye(dk) for k, dk in enumerate(dims)]
        assert np.allclose(qop.embed(local, site, dims).toarray(), qop.kron_all(mats))


def test_embed_rejects_wrong_local_shape():
    with pytest.raises(LayoutError):
        qop.embed(np.eye(3), 0, (2, 2))


def test_operator_layout_mismatch():
    a = qop.identity((2, 2))
    b = qop.identity((4,))
    with pytest.raises(LayoutError):
        a + b


def test_local_operators():
    s = qop.qubit_lowering()
    assert np.allclose(s @ np.array([0, 1]), [1, 0])  # |e> -> |g>
    assert np.allclose(qop.qubit_sigma_z(), 2 * s.conj().T @ s - np.eye(2))
    a = qop.destroy(4)
    assert np.allclose(np.diag(a.conj().T @ a), [0, 1, 2, 3])


class TestDensityMatrix:
    def test_basis_state(self):
        rho = DensityMatrix.basis_state((2, 3), [1, 2])
        assert rho.matrix[5, 5] == 1
        rho.validate()

    def test_validate_rejects_bad_states(self):
        with pytest.raises(ValueError):
            DensityMatrix((2,), np.diag([0.7, 0.7])).validate()
        with pytest.raises(ValueError):
            DensityMatrix((2,), np.diag([1.5, -0.5])).validate()

    def test_partial_trace_of_product(self):
        rng = np.random.default_rng(1)
        a, b = random_state(rng, 2), random_state(rng, 3)
        rho = DensityMatrix((2, 3), np.kron(a, b))
        assert np.allclose(qop.partial_trace(rho, [0]).matrix, a)
        assert np.allclose(qop.partial_trace(rho, [1]).matrix, b)

    def test_expectation_dense_and_sparse(self):
        rng = np.random.default_rng(2)
        rho = DensityMatrix((2, 2, 5), random_state(rng, 20))
        op = qop.embed(qop.destroy(5), 2, rho.layout)
        n = op.dag() @ op
        assert np.isclose(qop.expectation(n, rho), np.trace(n.toarray() @ rho.matrix))

    def test_trace_distance_orthogonal(self):
        a = DensityMatrix.basis_state((2,), [0])
        b = DensityMatrix.basis_state((2,), [1])
        assert np.isclose(qop.trace_distance(a, b), 1.0)


class TestSuperoperators:
    def test_dissipator_matches_definition(self):
        rng = np.random.default_rng(3)
        A, B, X = (random_matrix(rng, 3) for _ in range(3))
        expected = 2 * A @ X @ B.conj().T - B.conj().T @ A @ X - X @ B.conj().T @ A
        got = qop.unvec(qop.dissipator_matrix(A, B) @ qop.vec(X))
        assert np.allclose(got, expected)

    def test_hamiltonian_superop(self):
        rng = np.random.default_rng(4)
        h = random_matrix(rng, 4)
        h = h + h.conj().T
        X = random_matrix(rng, 4)
        L = qop.hamiltonian_superop(LabeledOperator((2, 2), h))
        assert np.allclose(qop.unvec(L.superop @ qop.vec(X)), -1j * (h @ X - X @ h))

    def test_coherence_degree(self):
        L = qop.Liouvillian((3,), sp.csr_matrix((9, 9)), excitations=[0, 1, 2])
        deg = qop.unvec(L.coherence_degree(), 3)
        assert np.array_equal(deg, np.subtract.outer([0, 1, 2], [0, 1, 2]))

    def test_sum_keeps_matching_excitations_only(self):
        L1 = qop.Liouvillian((2,), sp.csr_matrix((4, 4)), excitations=[0, 1])
        L2 = qop.Liouvillian((2,), sp.csr_matrix((4, 4)))
        assert (L1 + L1).excitations is not None
        assert (L1 + L2).excitations is None


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_ops=st.integers(1, 3))
def test_random_lindbladian_is_trace_preserving_and_hermiticity_preserving(seed, n_ops):
    rng = np.random.default_rng(seed)
    d = 4
    h = random_matrix(rng, d)
    h = LabeledOperator((2, 2), h + h.conj().T)
    terms = []
    for _ in range(n_ops):
        op = LabeledOperator((2, 2), random_matrix(rng, d))
        terms.append((float(rng.uniform(0, 2)), op, op))
    L = qop.assemble_liouvillian(h, terms)
    w = L.trace_vector()
    assert np.abs(w @ L.superop).max() < 1e-10
    rho = DensityMatrix((2, 2), random_state(rng, d))
    out = L.apply(rho)
    assert np.allclose(out, out.conj().T)
