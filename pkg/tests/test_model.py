import math

import numpy as np
import pytest

from purcell_sim import metrics, model, qop, solvers
from purcell_sim.errors import SpecError
from purcell_sim.model import SystemSpec


class TestSystemSpec:
    def test_defaults_are_valid(self):
        spec = SystemSpec()
        assert spec.layout.dims == (2, 2, 5)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(model_kind="chain"),
            dict(n_emitters=3),  # dimer with three emitters
            dict(kappa=-1.0),
            dict(P=float("nan")),
            dict(gamma_collective=1.5),
            dict(n_max=0),
        ],
    )
    def test_invalid_specs_rejected(self, kwargs):
        with pytest.raises(SpecError):
            SystemSpec(**kwargs)

    def test_json_roundtrip(self):
        spec = model.preset("fig3c")
        assert SystemSpec.from_json(spec.to_json()) == spec

    def test_unknown_key_rejected(self):
        with pytest.raises(SpecError):
            SystemSpec.from_dict({"J": 1.0, "chi": 2.0})

    def test_with_cooperativity(self):
        spec = SystemSpec(kappa=1e4).with_cooperativity(400)
        assert math.isclose(spec.g, 1e3)
        assert math.isclose(spec.derived().C, 400)


class TestDerivedRates:
    def test_fig1_rates(self, fig1):
        d = fig1.derived()
        assert math.isclose(d.Gamma_P, 400.0)
        assert math.isclose(d.C, 400.0)
        assert math.isclose(d.gamma_S, 1.999)
        assert math.isclose(d.beta, math.atan(1e-2))

    def test_two_photon_rate(self):
        d = model.preset("fig1_coherent").derived()
        assert math.isclose(d.Omega_2p, 2 * 1e8 / 9.18e4)
        assert math.isclose(d.P_S, d.Omega_2p ** 2 / 400.0)


def test_unknown_preset():
    with pytest.raises(SpecError):
        model.preset("nope")


@pytest.mark.parametrize("name", sorted(model.PRESETS))
def test_presets_construct(name):
    spec = model.preset(name)
    if spec.model_kind == "all_to_all":
        assert math.isclose(spec.Delta_a, spec.J * (2 - spec.n_emitters))
        assert math.isclose(spec.g, 0.1 * spec.kappa)


class TestHamiltonian:
    def test_dimer_single_excitation_spectrum(self):
        spec = SystemSpec(J=5.0, delta=1.5)
        H = model.build_hamiltonian(spec, include_cavity=False).toarray()
        ev = np.linalg.eigvalsh(H)
        assert np.allclose(sorted(ev), sorted([0, 0, math.hypot(5, 1.5), -math.hypot(5, 1.5)]))

    @pytest.mark.parametrize("N", [2, 3, 4])
    def test_all_to_all_dicke_spectrum(self, N):
        spec = SystemSpec(n_emitters=N, model_kind="all_to_all", J=1.0)
        ev = np.linalg.eigvalsh(model.build_hamiltonian(spec, include_cavity=False).toarray())
        expected = []
        for k in range(N // 2 + 1):
            j = N / 2 - k
            mult = math.comb(N, k) - (math.comb(N, k - 1) if k else 0)
            for m in np.arange(-j, j + 1):
                expected += [j * (j + 1) - m * (m - 1)] * mult
        assert np.allclose(np.sort(ev), np.sort(expected))

    def test_cavity_and_drive_terms(self):
        spec = SystemSpec(J=0.0, Delta_a=2.0, g=0.5, Omega=0.3, n_max=2)
        H = model.build_hamiltonian(spec).toarray()
        lay = spec.layout
        a = qop.embed(qop.destroy(3), 2, lay).toarray()
        Sm = sum(qop.embed(qop.qubit_lowering(), i, lay).toarray() for i in range(2))
        ref = 2.0 * a.conj().T @ a + 0.5 * (a.conj().T @ Sm + Sm.conj().T @ a) + 0.3 * (Sm + Sm.conj().T)
        assert np.allclose(H, ref)


class TestDissipators:
    def test_always_present_terms(self, fig1):
        terms = model.build_dissipators(fig1)
        # kappa, 2x2 decay matrix, 2 pumps
        assert len(terms) == 1 + 4 + 2
        rates = sorted(round(r, 6) for r, _, _ in terms)
        assert rates == sorted([5000.0, 0.5, 0.5, 0.4995, 0.4995, 20.0, 20.0])

    def test_optional_channels_only_when_nonzero(self, fig1):
        n0 = len(model.build_dissipators(fig1))
        spec = fig1.replace(Gamma_extra=1.0, gamma_phi=2.0, Gamma_phi=3.0)
        assert len(model.build_dissipators(spec)) == n0 + 2 + 2 + 1

    def test_single_qubit_pump_decay_balance(self):
        # no coupling: each emitter relaxes to <sigma^dag sigma> = P / (P + gamma)
        spec = SystemSpec(J=0.0, P=3.0, gamma=1.0, g=0.0, kappa=1.0, n_max=1)
        rho = solvers.steady_state(model.build_liouvillian(spec)).rho_ss
        red = qop.partial_trace(rho, [0]).matrix
        assert np.isclose(red[1, 1].real, 0.75, atol=1e-10)


def test_excitation_numbers_attached_only_without_drive(fig1):
    assert model.build_liouvillian(fig1).excitations is not None
    assert model.build_liouvillian(model.preset("fig1_coherent")).excitations is None


def test_truncation_check(fig1):
    def n_cav(spec):
        return metrics.cavity_population(solvers.steady_state(model.build_liouvillian(spec)).rho_ss)

    converged, shift = model.check_truncation(fig1, n_cav)
    assert converged and shift < 1e-4
