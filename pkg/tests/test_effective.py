import math

import numpy as np
import pytest

from purcell_sim import effective, metrics, model, qop, solvers
from purcell_sim.errors import SpecError
from purcell_sim.model import SystemSpec


@pytest.fixture(scope="module")
def fig1_effective_steady(fig1):
    return solvers.steady_state(effective.effective_model(fig1).reduced_liouvillian).rho_ss


class TestEigenbasis:
    def test_order_and_energies(self, fig1):
        vals, V = effective.emitter_eigenbasis(fig1)
        R = math.hypot(fig1.J, fig1.delta)
        assert np.allclose(vals[1:3], [-R, R])
        assert vals[0] == pytest.approx(0, abs=1e-9) and vals[3] == pytest.approx(0, abs=1e-9)
        assert vals[1] < 0 < vals[2]
        assert np.allclose(V.conj().T @ V, np.eye(4))

    def test_symmetric_state_at_zero_detuning(self):
        spec = SystemSpec(J=100.0, delta=0.0)
        _, V = effective.emitter_eigenbasis(spec)
        assert np.allclose(V[:, 2], metrics.TargetState.symmetric().amplitudes)
        assert np.allclose(V[:, 1], metrics.TargetState.antisymmetric().amplitudes)

    def test_positive_eg_amplitude(self, fig1):
        _, V = effective.emitter_eigenbasis(fig1)
        assert V[2, 1].real > 0 and V[2, 2].real > 0

    def test_requires_two_emitters(self):
        with pytest.raises(SpecError):
            effective.emitter_eigenbasis(SystemSpec(n_emitters=3, model_kind="all_to_all"))


class TestCouplings:
    def test_total_coupling_is_basis_independent(self, fig1):
        m = effective.effective_model(fig1)
        assert np.isclose(np.sum(np.abs(m.couplings) ** 2), 4 * fig1.g ** 2)

    def test_enhanced_transitions_dominate(self, fig1):
        X, _ = effective.cavity_mediated_operators(fig1)
        Xs, _ = effective.cavity_mediated_operators(fig1, restrict_mu_s=True)
        assert np.linalg.norm(X - Xs) < 0.05 * np.linalg.norm(Xs)

    def test_zero_coupling_gives_zero_term(self, fig1):
        L = effective.bloch_redfield_cavity_term(fig1.replace(g=0.0))
        assert abs(L.superop).max() == 0

    def test_bad_coupling_hierarchy_warns(self):
        with pytest.warns(RuntimeWarning):
            effective.bloch_redfield_cavity_term(SystemSpec(J=100.0, kappa=1.0, g=1.0))


class TestJumpModel:
    def test_purcell_rate(self, fig1):
        gamma_P, _ = effective.effective_jump_model(fig1)
        assert gamma_P == pytest.approx(4 * fig1.g ** 2 / fig1.kappa) == 400.0

    def test_operator_without_detuning(self, fig1):
        _, xi = effective.effective_jump_model(fig1.replace(delta=0.0))
        S = metrics.TargetState.symmetric().amplitudes
        ee = np.zeros(4)
        ee[3] = 1
        assert np.allclose(xi.toarray(), np.outer(S, ee))

    def test_coherent_variant(self, fig1):
        _, xi = effective.effective_jump_model(fig1, coherent=False)
        _, xc = effective.effective_jump_model(fig1, coherent=True)
        a, b = xi.toarray(), xc.toarray()
        assert np.allclose(b[:, 3], -a[:, 3])
        assert np.allclose(b[:, 1], 0.5 * a[:, 1])

    def test_jump_model_population_close_to_full(self, fig1, fig1_steady, sym):
        rho = solvers.steady_state(effective.jump_model_liouvillian(fig1)).rho_ss
        assert abs(metrics.fidelity(rho, sym) - metrics.fidelity(fig1_steady, sym)) < 0.02


class TestBlochRedfield:
    def test_trace_preserving(self, fig1):
        L = effective.effective_model(fig1).reduced_liouvillian
        assert np.abs(L.trace_vector() @ L.superop).max() < 1e-8 * abs(L.superop).max()

    def test_matches_full_model(self, fig1, fig1_steady, fig1_effective_steady):
        full = metrics.emitter_state(fig1_steady, 2)
        assert qop.trace_distance(full, fig1_effective_steady) < 1e-2

    def test_cavity_moments(self, fig1, fig1_steady, fig1_effective_steady):
        n, n2 = effective.effective_cavity_moments(fig1, fig1_effective_steady)
        assert n == pytest.approx(metrics.cavity_population(fig1_steady), rel=0.02)
        assert 0 <= n2 < n ** 2


class TestClosedForms:
    def test_fig1_values(self, fig1):
        pred = effective.cascaded_three_level_dynamics(fig1)
        assert pred.rho_S_general == pytest.approx(0.8993, abs=1e-4)
        assert pred.rho_S_simplified == pytest.approx(0.8970, abs=1e-4)
        assert pred.rho_S_purcell == pytest.approx(0.9091, abs=1e-4)
        assert pred.inv_tau_approx == pytest.approx(39.90, abs=0.01)
        total = pred.rho_S_general + pred.rho_A_general + pred.rho_ee_general
        assert total < 1

    def test_rate_is_three_level_gap(self, fig1):
        pred = effective.cascaded_three_level_dynamics(fig1)
        L = effective.three_level_liouvillian(fig1).superop.toarray()
        pops = [0, 4, 8]  # diagonal entries under column stacking
        ev = np.abs(np.linalg.eigvals(L[np.ix_(pops, pops)]).real)
        nonzero = ev[ev > 1e-9]
        assert nonzero.min() == pytest.approx(pred.inv_tau, rel=1e-10)

    def test_three_level_stationary_population(self, fig1):
        pred = effective.cascaded_three_level_dynamics(fig1)
        rho = solvers.steady_state(effective.three_level_liouvillian(fig1)).rho_ss
        d = fig1.derived()
        P, G, gS = fig1.P, d.Gamma_P, d.gamma_S
        exact = 1 / (1 + P / (2 * G) + gS / P)
        assert rho.matrix[1, 1].real == pytest.approx(exact, rel=1e-10)
        assert exact == pytest.approx(pred.rho_S_purcell, rel=1e-12)

    def test_time_profile(self, fig1):
        pred = effective.cascaded_three_level_dynamics(fig1)
        assert pred.rho_S(0.0) == 0
        assert pred.rho_S(1e3) == pytest.approx(pred.rho_S_simplified)

    def test_zero_pump_rejected(self, fig1):
        with pytest.raises(SpecError):
            effective.cascaded_three_level_dynamics(fig1.replace(P=0.0), mode="incoherent")

    def test_low_pump_flag(self, fig1):
        assert effective.cascaded_three_level_dynamics(fig1.replace(P=0.5)).low_pump_regime

    def test_coherent_mode_selected(self):
        pred = effective.cascaded_three_level_dynamics(model.preset("fig1_coherent"))
        assert pred.mode == "coherent" and pred.rho_S_simplified is None
        assert pred.inv_tau == pytest.approx(200.0)


class TestOptimalPump:
    def test_fig1(self, fig1):
        opt = effective.optimal_pump(fig1)
        assert opt.P_opt == pytest.approx(45.55, abs=0.01)
        assert opt.regime == "intermediate"
        assert opt.rho_S_max <= min(opt.rho_S_max_J_limited, opt.rho_S_max_C_limited)

    def test_optimum_of_simplified_formula(self, fig1):
        opt = effective.optimal_pump(fig1)
        grid = np.linspace(0.5, 2, 301) * opt.P_opt
        vals = [effective.cascaded_three_level_dynamics(fig1.replace(P=p)).rho_S_simplified for p in grid]
        assert grid[int(np.argmax(vals))] == pytest.approx(opt.P_opt, rel=0.01)

    @pytest.mark.parametrize("J, regime", [(1e7, "C-limited"), (1e4, "J-limited")])
    def test_regimes(self, fig1, J, regime):
        assert effective.optimal_pump(fig1.replace(J=J, Delta_a=-J)).regime == regime

    def test_requires_coupling(self, fig1):
        with pytest.raises(SpecError):
            effective.optimal_pump(fig1.replace(g=0.0))


def test_hierarchy_gates(fig1):
    gates = effective.hierarchy_gates(fig1)
    assert set(gates) == set(effective.GATE_NAMES)
    assert gates == {"gate_J_kappa": False, "gate_kappa_GammaP": True,
                     "gate_GammaP_gamma": True, "gate_GammaP_P": True}
    assert effective.hierarchy_gates(fig1, factor=9)["gate_J_kappa"]


def test_numerical_optimum(fig1):
    best, value, values = effective.numerical_optimum(
        fig1, "P", np.array([1.0, 2.0, 3.0]), lambda s: -(s.P - 2.0) ** 2)
    assert best == 2.0 and value == 0.0 and values.shape == (3,)
