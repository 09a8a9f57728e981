import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crabnv.errors import DomainError, NoFeasibleResult, WindowTooNarrow
from crabnv.optimizer import (MeritEvaluator, OptimizationConfig, OptimizationResult,
                              figure_of_merit, optimize_multi_start, random_init,
                              reflect_into, run_start, select_best)
from crabnv.propagator import SpinSystem, propagate
from crabnv.pulse import TABLE1_PI, CrabParams
from crabnv.quantum import QuantumState, basis_state

ZERO = basis_state("0")
PI_CFG = OptimizationConfig(T=TABLE1_PI.T, p=TABLE1_PI.p, dt=0.001)


def small_cfg(**kw):
    base = dict(T=15.4071, p=60, S=2, c_f_set=(0.35, 0.2), N_set=(3,), dt=0.02,
                max_evals=150, seed=11, kappa_f=1.0)
    base.update(kw)
    return OptimizationConfig(**base)


class TestFigureOfMerit:
    def test_no_drive(self):
        zero = CrabParams(a=np.zeros(5), b=np.zeros(5), omega=TABLE1_PI.omega, T=15.4, p=60,
                          c_f=0.35)
        assert figure_of_merit(zero, PI_CFG) == pytest.approx(1.0, abs=1e-12)

    def test_table1_pi(self):
        ev = MeritEvaluator(TABLE1_PI.T, TABLE1_PI.p, 30.0, 30.0, basis_state("-1"), 0.001)
        merit, f, amp = ev.evaluate(TABLE1_PI.a, TABLE1_PI.b, TABLE1_PI.omega, 0.35)
        # DOP853 oracle f = 0.998567
        assert 1 - f == pytest.approx(0.001433, abs=2e-5)
        assert merit == pytest.approx((1 - f) + 0.35 * amp / 30, abs=1e-12)
        assert figure_of_merit(TABLE1_PI, PI_CFG) == pytest.approx(merit, abs=1e-12)
        assert 20 < amp < 30.5

    def test_exact_transfer_leaves_amplitude_term(self):
        # target chosen as the state the pulse actually reaches
        psi = propagate(ZERO, TABLE1_PI, SpinSystem(30.0), dt=0.001).psi_final
        cfg = OptimizationConfig(T=TABLE1_PI.T, p=60, target=psi, dt=0.001)
        ev = MeritEvaluator(TABLE1_PI.T, 60, 30.0, 30.0, psi, 0.001)
        amp = ev.evaluate(TABLE1_PI.a, TABLE1_PI.b, TABLE1_PI.omega, 0.0)[2]
        assert figure_of_merit(TABLE1_PI, cfg) == pytest.approx(0.35 * amp / 30, abs=1e-6)

    @given(st.integers(0, 2**31), st.floats(0.0, 0.5))
    def test_non_negative(self, seed, c_f):
        rng = np.random.default_rng(seed)
        init = random_init(4, (10, 100), 30.0, rng)
        ev = MeritEvaluator(10.0, 20, 30.0, 30.0, basis_state("-1"), 0.02)
        merit, f, amp = ev.evaluate(init.a * 5, init.b * 5, init.omega, c_f)
        assert merit >= 0 and 0 <= f <= 1 + 1e-12
        assert merit == pytest.approx(1 - f + c_f * amp / 30, abs=1e-12)


class TestRandomInit:
    def test_deterministic(self):
        a = random_init(5, (10, 100), 30.0, np.random.default_rng(3))
        b = random_init(5, (10, 100), 30.0, np.random.default_rng(3))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_window(self):
        for seed in range(50):
            init = random_init(5, (10, 100), 30.0, np.random.default_rng(seed))
            mhz = init.omega * 1e3
            assert np.all((mhz > 10) & (mhz < 100))
            assert np.all(np.diff(mhz) >= 1.0)
            assert np.all(np.abs(init.a) <= 1) and np.all(np.abs(init.b) <= 1)

    def test_too_narrow(self):
        with pytest.raises(WindowTooNarrow):
            random_init(5, (10, 13), 30.0, np.random.default_rng(0))


class TestReflect:
    def test_inside_unchanged(self):
        assert np.allclose(reflect_into([15.0, 99.0], 10, 100), [15, 99])

    def test_mirror(self):
        assert np.allclose(reflect_into([105.0, 5.0, 195.0], 10, 100), [95, 15, 15])

    @given(st.floats(-1e4, 1e4))
    def test_always_inside(self, u):
        v = float(reflect_into(u, 10, 100))
        assert 10 < v < 100


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(omega_window=(50, 20)), dict(S=0), dict(kappa_gamma=0),
                                    dict(g0=-1), dict(target=basis_state("-1").embed(3))])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            OptimizationConfig(T=10, p=20, **kw)

    def test_starts(self):
        assert small_cfg().n_starts == 4


class TestMultiStart:
    def test_run_start_deterministic(self):
        cfg = small_cfg(S=1)
        a, b = run_start(cfg, 0, 0.35, 3), run_start(cfg, 0, 0.35, 3)
        assert a.to_dict() == b.to_dict()

    def test_worker_count_independent(self):
        cfg = small_cfg()
        one = optimize_multi_start(cfg, workers=1)
        two = optimize_multi_start(cfg, workers=2)
        assert [r.to_dict() for r in one.results] == [r.to_dict() for r in two.results]
        assert one.best.to_dict() == two.best.to_dict()

        # bookkeeping: merits recomputable and the best is the minimum
        for r in one.results:
            recomputed = (1 - r.fidelity_f) + r.params.c_f * r.max_amp / r.params.g0
            assert r.merit == pytest.approx(recomputed, abs=1e-9)
            assert figure_of_merit(r.params, cfg) == pytest.approx(r.merit, abs=1e-9)
        feasible = [r.merit for r in one.results if r.feasible(cfg.kappa_f, cfg.kappa_gamma)]
        assert one.best.merit == min(feasible)
        assert one.best.feasible(cfg.kappa_f, cfg.kappa_gamma)
        assert [r.start_index for r in one.results] == list(range(4))

    def test_unsatisfiable(self):
        with pytest.raises(NoFeasibleResult) as info:
            optimize_multi_start(small_cfg(S=1, c_f_set=(0.35,), kappa_f=-1.0), workers=1)
        assert info.value.best is not None and len(info.value.results) == 1

    def test_frozen_frequencies_stay_put(self):
        cfg = small_cfg(S=1, freeze_frequencies=True)
        res = run_start(cfg, 0, 0.35, 3)
        init = random_init(3, cfg.omega_window, cfg.g0,
                           np.random.default_rng(np.random.SeedSequence([cfg.seed, 0])))
        assert np.array_equal(res.params.omega, init.omega)

    def test_select_best_filters_amplitude(self):
        low = OptimizationResult(TABLE1_PI, 0.1, 0.99, 40.0, 10, 0, True)
        high = OptimizationResult(TABLE1_PI, 0.2, 0.99, 25.0, 10, 1, True)
        assert select_best([low, high], 1.0, 30.5).best is high

    def test_result_roundtrip(self):
        r = OptimizationResult(TABLE1_PI, 0.1, 0.99, 25.0, 10, 3, False)
        back = OptimizationResult.from_dict(r.to_dict())
        assert back.to_dict() == r.to_dict()
        assert r.fidelity_F == pytest.approx(np.sqrt(0.99))


def test_custom_target_reachable():
    target = QuantumState(np.array([np.cos(0.3), np.sin(0.3)]))
    res = run_start(small_cfg(target=target, max_evals=400), 0, 0.05, 3)
    assert res.fidelity_f > 0.5
