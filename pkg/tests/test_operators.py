import numpy as np
import pytest
import scipy.linalg

from conftest import (TWO_PI_MHZ, dense_hamiltonian, lowering, random_state, sector_indices,
                      site_operator, two_site_spec)
from ladderflux.basis import build_sector
from ladderflux.ensemble import checkerboard_state
from ladderflux.lattice import Edge, LatticeSpec, default_device, device_for_size
from ladderflux.operators import (Observables, StateVector, bath_population, build_hamiltonian,
                                  current_expectation, current_operator, pauli_current_operator,
                                  reduced_density_two_site, site_occupations, two_site_current_operator)


def random_sv(basis, rng):
    return StateVector(basis, random_state(basis.dim, rng))


class TestHamiltonian:
    def test_two_level(self):
        spec = two_site_spec(1.0)
        H = build_hamiltonian(spec, build_sector(2, 2, 1)).toarray()
        g = TWO_PI_MHZ * 1.0
        np.testing.assert_allclose(H, [[0, g], [g, 0]], atol=1e-15)
        np.testing.assert_allclose(np.linalg.eigvalsh(H), [-g, g], atol=1e-15)

    @pytest.mark.parametrize("d,N", [(2, 2), (2, 1), (3, 2), (3, 4)])
    def test_matches_full_space_block(self, d, N):
        spec = default_device(1, 1, local_dim=d)
        spec = spec.__class__(**{**spec.__dict__, "potentials_mhz": (3.0, -1.0, 0.5, 2.0)})
        basis = build_sector(4, d, N)
        full = dense_hamiltonian(spec)
        idx = sector_indices(basis)
        np.testing.assert_allclose(build_hamiltonian(spec, basis).toarray(), full[np.ix_(idx, idx)],
                                   atol=1e-14)
        # no coupling out of the sector
        rest = np.setdiff1d(np.arange(full.shape[0]), idx)
        assert np.abs(full[np.ix_(rest, idx)]).max() < 1e-15

    def test_double_occupation_energy(self):
        spec = LatticeSpec(2, 3, (Edge(0, 1, 0.0, "bridge"),), (0.0, 0.0), -175.0,
                           frozenset({0}), frozenset({1}), (0, 1))
        basis = build_sector(2, 3, 2)
        H = build_hamiltonian(spec, basis)
        k = basis.rank((2, 0))
        assert H.toarray()[k, k].real == pytest.approx(TWO_PI_MHZ * -175.0, rel=1e-14)

    def test_hardcore_ignores_anharmonicity(self):
        spec = default_device(2, 2, local_dim=2, u_mhz=-175.0)
        spec0 = default_device(2, 2, local_dim=2, u_mhz=0.0)
        b = build_sector(8, 2, 4)
        assert abs(build_hamiltonian(spec, b).matrix - build_hamiltonian(spec0, b).matrix).max() == 0

    @pytest.mark.parametrize("L,d", [(10, 2), (8, 3)])
    def test_hermitian_and_sparse(self, L, d):
        spec = device_for_size(L, local_dim=d)
        H = build_hamiltonian(spec, build_sector(L, d, L // 2))
        assert H.max_hermiticity_error() < 1e-12
        assert np.diff(H.matrix.indptr).max() <= 2 * len(spec.edges) + 2

    def test_basis_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            build_hamiltonian(default_device(1, 1), build_sector(6, 2, 3))


class TestCurrent:
    def test_real_amplitudes_carry_no_current(self, rng):
        spec = device_for_size(8)
        b = build_sector(8, 2, 4)
        psi = rng.normal(size=b.dim)
        assert current_expectation(StateVector(b, (psi / np.linalg.norm(psi)).astype(complex)),
                                   spec) == pytest.approx(0.0, abs=1e-14)

    def test_rabi(self):
        spec = two_site_spec(1.0)
        b = build_sector(2, 2, 1)
        g = TWO_PI_MHZ
        for t in np.linspace(0, 1000, 37):
            psi = np.zeros(2, complex)
            psi[b.rank((1, 0))] = np.cos(g * t)
            psi[b.rank((0, 1))] = -1j * np.sin(g * t)
            expected = g * np.sin(2 * g * t) * 1000
            assert current_expectation(StateVector(b, psi), spec) == pytest.approx(expected, abs=1e-12)

    def test_pauli_form_equals_bosonic(self, rng):
        spec = device_for_size(8)
        b = build_sector(8, 2, 4)
        a, c = spec.bridge_edge
        P = pauli_current_operator(spec)
        for _ in range(100):
            sv = random_sv(b, rng)
            rho = reduced_density_two_site(sv, a, c).matrix
            assert np.trace(rho @ P).real == pytest.approx(current_expectation(sv, spec), abs=1e-12)

    def test_full_space_oracle_for_cut_current(self, rng):
        spec = default_device(1, 1, local_dim=3, jx_mhz=0.3)
        basis = build_sector(4, 3, 3)
        a = [site_operator(lowering(3), s, 4, 3) for s in range(4)]
        full = np.zeros((81, 81), complex)
        for e in spec.cut_edges():
            hop = a[e.i].conj().T @ a[e.j]
            full += 1j * TWO_PI_MHZ * 1e3 * e.f_mhz * (hop - hop.conj().T)
        idx = sector_indices(basis)
        np.testing.assert_allclose(current_operator(spec, basis, "cut").toarray(), full[np.ix_(idx, idx)],
                                   atol=1e-13)

    def test_channels_add_up(self, rng):
        spec = device_for_size(10)
        b = build_sector(10, 2, 5)
        obs = Observables(spec, b)
        psi = random_state(b.dim, rng)
        assert obs.current(psi, "cut") == pytest.approx(obs.current(psi, "bridge") + obs.current(psi, "cross"),
                                                        abs=1e-12)

    def test_unknown_channel(self):
        with pytest.raises(ValueError):
            current_operator(default_device(1, 1), build_sector(4, 2, 2), "diagonal")


class TestOccupations:
    def test_fock_pattern(self):
        b = build_sector(6, 3, 4)
        c = (2, 0, 1, 0, 1, 0)
        np.testing.assert_array_equal(site_occupations(StateVector.fock(b, c)), c)

    def test_uniform_single_particle(self):
        L = 7
        b = build_sector(L, 2, 1)
        sv = StateVector(b, np.full(L, 1 / np.sqrt(L), complex))
        np.testing.assert_allclose(site_occupations(sv), 1 / L, atol=1e-15)

    @pytest.mark.parametrize("d", [2, 3])
    def test_sum_rule_and_complement(self, rng, d):
        spec = device_for_size(8, local_dim=d)
        b = build_sector(8, d, 5)
        for _ in range(20):
            sv = random_sv(b, rng)
            occ = site_occupations(sv)
            assert occ.sum() == pytest.approx(5, abs=1e-10)
            assert occ.min() >= -1e-12 and occ.max() <= d - 1 + 1e-12
            total = bath_population(sv, spec.bath_a) + bath_population(sv, spec.bath_b)
            assert total == pytest.approx(5, abs=1e-10)

    def test_empty_bath_b(self):
        spec = device_for_size(10)
        b = build_sector(10, 2, 3)
        sv = StateVector.fock(b, checkerboard_state(spec))
        assert bath_population(sv, spec.bath_b) == 0.0

    def test_unknown_sites(self):
        b = build_sector(4, 2, 2)
        with pytest.raises(ValueError):
            bath_population(StateVector.fock(b, (1, 1, 0, 0)), {7})

    @pytest.mark.parametrize("d", [2, 3])
    def test_continuity(self, d):
        """d N_B / dt equals the total current across the cut."""
        spec = device_for_size(8, local_dim=d)
        c = checkerboard_state(spec)
        b = build_sector(8, d, sum(c))
        H = build_hamiltonian(spec, b).toarray()
        obs = Observables(spec, b)
        psi0 = np.zeros(b.dim, complex)
        psi0[b.rank(c)] = 1
        h = 1e-3
        for t in (37.0, 211.0, 640.0):
            states = [scipy.linalg.expm(-1j * H * s) @ psi0 for s in (t - h, t, t + h)]
            dn = (obs.bath_population(states[2], spec.bath_b) - obs.bath_population(states[0], spec.bath_b))
            assert dn / (2 * h) * 1e3 == pytest.approx(obs.current(states[1], "cut"), abs=1e-6)


class TestReducedDensity:
    def test_product_fock(self):
        b = build_sector(5, 3, 3)
        rho = reduced_density_two_site(StateVector.fock(b, (1, 0, 2, 0, 0)), 0, 2).matrix
        expected = np.zeros((9, 9))
        expected[1 * 3 + 2, 1 * 3 + 2] = 1
        np.testing.assert_allclose(rho, expected, atol=1e-15)

    @pytest.mark.parametrize("d", [2, 3])
    def test_density_invariants(self, rng, d):
        b = build_sector(7, d, 3)
        for _ in range(20):
            rho = reduced_density_two_site(random_sv(b, rng), 1, 5).matrix
            assert np.trace(rho).real == pytest.approx(1, abs=1e-10)
            assert np.abs(rho - rho.conj().T).max() < 1e-12
            assert np.linalg.eigvalsh(rho).min() > -1e-10

    @pytest.mark.parametrize("d,N", [(2, 3), (3, 4)])
    def test_full_space_partial_trace(self, rng, d, N):
        L, i, j = 5, 3, 1
        b = build_sector(L, d, N)
        psi = random_state(b.dim, rng)
        full = np.zeros(d ** L, complex)
        full[sector_indices(b)] = psi
        t = np.moveaxis(full.reshape((d,) * L), (i, j), (0, 1)).reshape(d * d, -1)
        np.testing.assert_allclose(reduced_density_two_site(psi, i, j, b).matrix, t @ t.conj().T, atol=1e-14)

    @pytest.mark.parametrize("d", [2, 3])
    def test_current_consistency(self, rng, d):
        spec = device_for_size(8, local_dim=d)
        b = build_sector(8, d, 4)
        O = two_site_current_operator(spec)
        a, c = spec.bridge_edge
        for _ in range(20):
            sv = random_sv(b, rng)
            rho = reduced_density_two_site(sv, a, c).matrix
            assert np.trace(rho @ O).real == pytest.approx(current_expectation(sv, spec), abs=1e-12)

    def test_same_site_rejected(self):
        b = build_sector(4, 2, 2)
        with pytest.raises(ValueError):
            reduced_density_two_site(StateVector.fock(b, (1, 1, 0, 0)), 2, 2)


class TestHardcoreLimit:
    @staticmethod
    def trace(d, u, times):
        from ladderflux.propagation import ExactPropagator

        spec = device_for_size(6, local_dim=d, u_mhz=u)
        c = checkerboard_state(spec)
        b = build_sector(6, d, sum(c))
        H = build_hamiltonian(spec, b)
        obs = Observables(spec, b, H)
        psi0 = np.zeros(b.dim, complex)
        psi0[b.rank(c)] = 1
        return ExactPropagator(H).series(psi0, times, {"I": obs.current})["I"].values

    def test_strong_anharmonicity_reproduces_hardcore(self):
        """local_dim 3 with U/2pi = -1e6 MHz tracks the hard-core current on L = 6 (500 ns)."""
        times = np.arange(0.0, 500.0 + 1e-9, 5.0)
        dev = np.abs(self.trace(3, -1e6, times) - self.trace(2, 0.0, times))
        assert dev.max() < 1e-3

    def test_residual_scales_as_inverse_anharmonicity(self):
        """Over 1 us the remaining deviation is the J^2/U virtual-hopping correction."""
        times = np.arange(0.0, 1000.0 + 1e-9, 5.0)
        ref = self.trace(2, 0.0, times)
        scaled = [abs(u) * np.abs(self.trace(3, u, times) - ref).max() for u in (-1e6, -1e7, -1e8)]
        np.testing.assert_allclose(scaled, scaled[0], rtol=0.05)


class TestStateVector:
    def test_rejects_unnormalised(self):
        with pytest.raises(ValueError, match="normalised"):
            StateVector(build_sector(3, 2, 1), np.ones(3, complex))

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            StateVector(build_sector(3, 2, 1), np.ones(2, complex) / np.sqrt(2))
