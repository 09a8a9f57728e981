import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crabnv.errors import StepTooLarge
from crabnv.propagator import (AnalyticControl, CosineDrive, SpinSystem, ZeroControl,
                               _qubit_steps, chain_product, cosine_pulse_unitaries,
                               cumulative_propagators, hamiltonian_at, midpoint_amplitudes,
                               propagate, propagate_free, pulse_unitary,
                               two_vs_three_level_check)
from crabnv.pulse import TABLE1_PI, TABLE1_PI_HALF
from crabnv.quantum import (QuantumState, basis_state, density_from_state, fidelity,
                            overlap_probability)

from conftest import random_qubit

# DOP853 (rtol 1e-12) integration of the same lab-frame equation
ORACLE = {
    ("pi", 2): 0.998567, ("pi", 3): 0.998579,
    ("pi_half", 2): 0.953972, ("pi_half", 3): 0.954569,
}
ZERO, MINUS = basis_state("0"), basis_state("-1")
PLUS_X = QuantumState(np.array([1, 1]) / np.sqrt(2))
QUBIT, SPIN1 = SpinSystem(30.0), SpinSystem(30.0, levels=3)


class TestHamiltonian:
    def test_undriven(self):
        assert np.allclose(hamiltonian_at(0.0, ZeroControl(1.0), QUBIT), np.diag([0, 30]))
        h3 = hamiltonian_at(0.0, ZeroControl(1.0), SPIN1)
        assert np.allclose(sorted(np.linalg.eigvalsh(h3)), [0, 30, 2 * 2870 - 30])

    def test_coupling(self):
        drive = AnalyticControl(lambda t: np.full_like(t, 30.0), 1.0)
        assert np.allclose(hamiltonian_at(0.5, drive, QUBIT), [[0, 30], [30, 30]])
        assert hamiltonian_at(0.5, drive, SPIN1)[0, 1] == pytest.approx(30)

    def test_system_validation(self):
        from crabnv.errors import DomainError
        with pytest.raises(DomainError):
            SpinSystem(-1.0)
        with pytest.raises(DomainError):
            SpinSystem(30.0, levels=4)
        assert SpinSystem(30.0).omega_z == 2840.0


class TestPropagate:
    def test_eigenstate(self):
        psi = propagate(ZERO, ZeroControl(123.4), QUBIT).psi_final
        assert np.allclose(psi.populations(), [1, 0], atol=1e-10)

    def test_weak_resonant_flip(self):
        drive = CosineDrive(0.3, 30.0, 1e3 / 0.6)
        psi = propagate(ZERO, drive, QUBIT, dt=0.01).psi_final
        assert psi.populations()[1] >= 0.999

    @pytest.mark.parametrize("name,params,target", [
        ("pi", TABLE1_PI, MINUS), ("pi_half", TABLE1_PI_HALF, PLUS_X)])
    @pytest.mark.parametrize("levels", [2, 3])
    def test_table1_against_oracle(self, name, params, target, levels):
        psi = propagate(ZERO, params, QUBIT.with_levels(levels)).psi_final
        f = overlap_probability(target.embed(levels), psi)
        assert f == pytest.approx(ORACLE[(name, levels)], abs=2e-6)

    def test_pi_pulse_fidelity(self):
        psi = propagate(ZERO, TABLE1_PI, QUBIT).psi_final
        assert fidelity(MINUS, density_from_state(psi)) == pytest.approx(0.9986, abs=0.002)

    def test_trajectory_normalized(self):
        res = propagate(ZERO, TABLE1_PI, SPIN1, stride=500)
        assert res.trajectory[0][0] == 0 and res.trajectory[-1][0] == pytest.approx(TABLE1_PI.T)
        assert all(abs(s.norm - 1) < 1e-9 for _, s in res.trajectory)
        assert np.allclose(res.trajectory[-1][1].amplitudes, res.psi_final.amplitudes)
        assert res.steps == 15407

    def test_convergence_check(self):
        propagate(ZERO, TABLE1_PI, QUBIT, check_convergence=True)
        propagate(ZERO, TABLE1_PI_HALF, QUBIT, check_convergence=True)
        with pytest.raises(StepTooLarge):
            propagate(ZERO, TABLE1_PI, QUBIT, dt=0.5, check_convergence=True)

    @given(st.integers(0, 2**31))
    def test_norm_preserved(self, seed):
        rng = np.random.default_rng(seed)
        amps = rng.normal(size=4)
        drive = AnalyticControl(lambda t: amps[0] * 40 * np.cos(amps[1] * t) + amps[2] * 10, 5.0)
        for sys in (QUBIT, SPIN1):
            psi0 = QuantumState(random_qubit(rng)).embed(sys.levels)
            res = propagate(psi0, drive, sys, dt=0.01, stride=50)
            assert all(abs(s.norm - 1) < 1e-9 for _, s in res.trajectory)

    def test_time_reversal_qubit(self):
        gamma, h = midpoint_amplitudes(TABLE1_PI, 0.001)
        forward = chain_product(_qubit_steps(gamma, 30.0, h))
        backward = chain_product(_qubit_steps(-gamma[::-1], -30.0, h))
        psi0 = np.array([1, 0], complex)
        assert abs(np.vdot(psi0, backward @ forward @ psi0)) ** 2 >= 1 - 1e-7

    def test_time_reversal_spin1(self):
        # H is real symmetric: the reversed drive propagates with U^T, so conj gives U^-1
        u = pulse_unitary(TABLE1_PI, SPIN1)
        rev = AnalyticControl(lambda t: TABLE1_PI(TABLE1_PI.T - t), TABLE1_PI.T)
        u_rev = pulse_unitary(rev, SPIN1)
        assert np.max(np.abs(u_rev.conj() @ u - np.eye(3))) < 1e-7

    def test_rwa_period(self):
        sys = SpinSystem(300.0)
        times, props = cumulative_propagators(CosineDrive(3.0, 300.0, 400.0), sys, 0.01,
                                              round(500 / 300 / 0.01))
        p0 = np.abs(props[:, 0, 0]) ** 2
        # first return to |0> near one Rabi period, 1/3 us
        late = times > 200
        t_max = times[late][np.argmax(p0[late])]
        assert t_max == pytest.approx(1e3 / 3, rel=0.01)


class TestFree:
    def test_ground_state(self):
        assert np.allclose(propagate_free(ZERO, 17.0, QUBIT).populations(), [1, 0])

    def test_full_turn(self):
        psi = propagate_free(PLUS_X, 1e3 / 30, QUBIT)
        assert overlap_probability(psi, PLUS_X) == pytest.approx(1, abs=1e-12)

    def test_phase_advance(self):
        psi = propagate_free(PLUS_X, 100.0, QUBIT)
        rel = np.angle(psi.amplitudes[0] / psi.amplitudes[1])
        assert np.mod(rel + 1e-9, 2 * np.pi) == pytest.approx(1e-9, abs=1e-8)

    def test_consistent_with_driven_zero(self):
        psi = propagate_free(PLUS_X, 12.3, SPIN1)
        ref = propagate(PLUS_X, ZeroControl(12.3), SPIN1).psi_final
        assert overlap_probability(psi, ref) == pytest.approx(1, abs=1e-10)


class TestTwoVsThree:
    def test_zero_drive(self):
        assert two_vs_three_level_check(ZeroControl(10.0), QUBIT) == 0

    def test_table1(self):
        assert two_vs_three_level_check(TABLE1_PI, QUBIT) < 0.005

    def test_nearby_level_detected(self):
        # oracle: DOP853 gives 0.348
        value = two_vs_three_level_check(TABLE1_PI, SpinSystem(30.0, D=60.0))
        assert value > 0.01
        assert value == pytest.approx(0.3482, abs=1e-3)


class TestBatched:
    def test_phases_match_single_pulses(self):
        phases = [0.0, 0.7, np.pi]
        batch = cosine_pulse_unitaries(8.0, 30.0, 31.25, phases, QUBIT, 0.001, chunk_steps=40000)
        for ph, u in zip(phases, batch):
            assert np.allclose(u, pulse_unitary(CosineDrive(8.0, 30.0, 31.25, ph), QUBIT))

    def test_cumulative_end_matches_full(self):
        _, props = cumulative_propagators(TABLE1_PI, QUBIT, 0.001, 777)
        assert np.allclose(props[-1], pulse_unitary(TABLE1_PI, QUBIT))
