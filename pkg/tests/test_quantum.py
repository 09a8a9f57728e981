import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crabnv.errors import DimensionMismatch, DomainError, LeakageError
from crabnv.quantum import (BlochVector, DensityMatrix, QuantumState, basis_state,
                            bloch_from_density, density_from_state, fidelity,
                            free_phase_evolve, larmor_phase, overlap_probability,
                            spin1_operators, state_from_bloch, trace_distance)

from conftest import random_qubit

PLUS_X = QuantumState(np.array([1, 1]) / np.sqrt(2))
angles = st.floats(0, np.pi), st.floats(0, 2 * np.pi)


class TestStates:
    def test_basis_states(self):
        assert np.array_equal(basis_state("0").amplitudes, [1, 0])
        assert np.array_equal(basis_state("-1", 3).amplitudes, [0, 1, 0])
        assert np.array_equal(basis_state("+1", 3).amplitudes, [0, 0, 1])
        with pytest.raises(DimensionMismatch):
            basis_state("+1", 2)

    def test_dimension_checked(self):
        with pytest.raises(DimensionMismatch):
            QuantumState(np.ones(4))

    def test_amplitudes_read_only(self):
        psi = basis_state("0")
        with pytest.raises(ValueError):
            psi.amplitudes[0] = 0

    def test_normalized(self):
        assert QuantumState.normalized([3, 4j]).norm == pytest.approx(1, abs=1e-12)
        with pytest.raises(DomainError):
            QuantumState.normalized([0, 0])

    def test_embed_round_trip(self):
        psi = PLUS_X.embed(3)
        assert psi.dim == 3 and psi.embed(2).dim == 2
        with pytest.raises(LeakageError):
            QuantumState.normalized([1, 0, 0.2]).embed(2)


class TestSpinOperators:
    ops = spin1_operators()

    def test_sz_diagonal(self):
        assert np.array_equal(self.ops.sz, np.diag([0, -1, 1]))
        assert sorted(np.linalg.eigvalsh(self.ops.sz)) == [-1, 0, 1]

    @pytest.mark.parametrize("a,b,c", [("sx", "sy", "sz"), ("sy", "sz", "sx"), ("sz", "sx", "sy")])
    def test_commutators(self, a, b, c):
        A, B, C = (getattr(self.ops, n) for n in (a, b, c))
        assert np.max(np.abs(A @ B - B @ A - 1j * C)) < 1e-12

    def test_casimir(self):
        s2 = sum(m @ m for m in (self.ops.sx, self.ops.sy, self.ops.sz))
        assert np.max(np.abs(s2 - 2 * np.eye(3))) < 1e-12

    def test_sqrt2_sx_element(self):
        assert np.sqrt(2) * self.ops.sx[0, 1] == pytest.approx(1, abs=1e-15)


class TestDensity:
    def test_examples(self):
        assert np.allclose(density_from_state(basis_state("0")).entries, [[1, 0], [0, 0]])
        assert np.allclose(density_from_state(PLUS_X).entries, 0.5)
        with pytest.raises(LeakageError):
            density_from_state(QuantumState.normalized([1, 0, 0.2 / np.sqrt(0.96)]))

    def test_small_leakage_projected(self):
        rho = density_from_state(QuantumState.normalized([1, 0, 0.05]))
        assert np.allclose(rho.entries, [[1, 0], [0, 0]])

    @pytest.mark.parametrize("bad", [
        [[1, 0.1], [0.2, 0]],  # not Hermitian
        [[0.6, 0], [0, 0.6]],  # trace
        [[1.1, 0], [0, -0.1]],  # negative eigenvalue
    ])
    def test_validation(self, bad):
        with pytest.raises(DomainError):
            DensityMatrix(np.array(bad, dtype=complex))

    def test_real_list_layout(self):
        rho = DensityMatrix(np.array([[0.5, 0.25 - 0.125j], [0.25 + 0.125j, 0.5]]))
        assert rho.as_real_list() == [0.5, 0, 0.25, -0.125, 0.25, 0.125, 0.5, 0]


class TestFidelity:
    def test_examples(self):
        minus = basis_state("-1")
        assert fidelity(minus, density_from_state(minus)) == pytest.approx(1)
        assert fidelity(minus, density_from_state(basis_state("0"))) == pytest.approx(0)

    def test_measured_matrix(self):
        # measured reconstructions need not be positive semidefinite
        rho = np.array([[0.01, 0.16 - 0.15j], [0.16 + 0.15j, 0.99]])
        with pytest.raises(DomainError):
            DensityMatrix(rho)
        assert fidelity(basis_state("-1"), rho) == pytest.approx(np.sqrt(0.99), abs=1e-12)

    def test_overlap_examples(self):
        zero, minus = basis_state("0"), basis_state("-1")
        assert overlap_probability(zero, zero) == 1
        assert overlap_probability(zero, minus) == 0
        assert overlap_probability(zero, PLUS_X) == pytest.approx(0.5)
        with pytest.raises(DimensionMismatch):
            overlap_probability(zero, basis_state("0", 3))

    def test_pure_state_fidelity_is_one(self, rng):
        for _ in range(1000):
            psi = QuantumState(random_qubit(rng))
            assert fidelity(psi, density_from_state(psi)) == pytest.approx(1, abs=1e-9)

    def test_overlap_is_fidelity_squared(self, rng):
        for _ in range(500):
            psi, phi = QuantumState(random_qubit(rng)), QuantumState(random_qubit(rng))
            f = fidelity(phi, density_from_state(psi)) ** 2
            assert overlap_probability(psi, phi) == pytest.approx(f, abs=1e-9)


class TestBloch:
    def test_examples(self):
        cases = {((1, 0), (0, 0)): (0, 0, 1), ((0.5, 0.5), (0.5, 0.5)): (1, 0, 0),
                 ((0.5, -0.5j), (0.5j, 0.5)): (0, -1, 0),
                 ((0.5, 0.5j), (-0.5j, 0.5)): (0, 1, 0)}
        for m, expected in cases.items():
            b = bloch_from_density(DensityMatrix(np.array(m, dtype=complex)))
            assert np.allclose(b.as_array(), expected, atol=1e-12)

    def test_outside_ball_rejected(self):
        with pytest.raises(DomainError):
            BlochVector(1, 1, 0)

    def test_round_trip(self, rng):
        for _ in range(1000):
            v = rng.normal(size=3)
            v *= rng.uniform() ** (1 / 3) / np.linalg.norm(v)
            b = bloch_from_density(DensityMatrix.from_bloch(BlochVector(*v)))
            assert np.allclose(b.as_array(), v, atol=1e-9)

    @given(*angles)
    def test_state_from_bloch(self, theta, phi):
        b = bloch_from_density(density_from_state(state_from_bloch(theta, phi)))
        expected = [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
        assert np.allclose(b.as_array(), expected, atol=1e-9)


class TestFreePhase:
    x_state = DensityMatrix(np.full((2, 2), 0.5, dtype=complex))

    def test_zero_time(self):
        assert np.allclose(free_phase_evolve(self.x_state, 0, 30).entries, self.x_state.entries)

    def test_half_period(self):
        rho = free_phase_evolve(self.x_state, 1e3 / 60, 30)
        assert np.allclose(rho.entries, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-12)

    def test_whole_turns(self):
        assert larmor_phase(100, 30) == pytest.approx(6 * np.pi)
        rho = free_phase_evolve(self.x_state, 100, 30)
        assert rho.entries[0, 1] == pytest.approx(0.5, abs=1e-12)

    def test_sense_matches_hamiltonian(self):
        # diag(0, w) advances <0|rho|-1> as exp(+i 2 pi w t)
        t, w = 3.0, 30.0
        u = np.diag([1, np.exp(-1j * larmor_phase(t, w))])
        rho = density_from_state(PLUS_X)
        direct = u @ rho.entries @ u.conj().T
        assert np.allclose(free_phase_evolve(rho, t, w).entries, direct, atol=1e-12)

    def test_negative_time(self):
        with pytest.raises(DomainError):
            free_phase_evolve(self.x_state, -1, 30)


def test_trace_distance():
    a = density_from_state(basis_state("0"))
    b = density_from_state(basis_state("-1"))
    assert trace_distance(a, b) == pytest.approx(1)
    assert trace_distance(a, a) == pytest.approx(0)
