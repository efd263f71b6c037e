import numpy as np
import pytest

from localsgd_lab.core import ConfigError, RunConfig
from localsgd_lab.objectives import QuadraticPairProblem, least_squares_problem
from localsgd_lab.oracle import (
    localsgd_fixed_point,
    localsgd_limit_variance,
    oracle_run,
)
from localsgd_lab.simulator import run

GAMMA = 0.01

# Fixed points of the plain local SGD period map on the paired quadratic,
# gamma = 0.01, frozen from the closed form and confirmed against a
# 10^6-step brute-force trajectory (difference 2.2e-16).
FIXED_POINTS = {
    (1.0, 10): -0.059230543526523315,
    (1.0, 20): -0.11993232068858148,
    (1.0, 40): -0.22367934565526926,
    (2.0, 10): -0.11846108705304663,
    (2.0, 20): -0.23986464137716296,
    (2.0, 40): -0.4473586913105385,
    (4.0, 10): -0.23692217410609326,
    (4.0, 20): -0.4797292827543259,
    (4.0, 40): -0.894717382621077,
}

# Across-worker variance of the final step directions on the limit cycle,
# same grid, frozen from the deterministic k-step unroll at the fixed point.
LIMIT_VARIANCES = {
    (1.0, 10): 9.51857327148213,
    (1.0, 20): 5.345529560890505,
    (1.0, 40): 1.705419972333139,
    (2.0, 10): 38.07429308592852,
    (2.0, 20): 21.38211824356202,
    (2.0, 40): 6.821679889332556,
    (4.0, 10): 152.29717234371407,
    (4.0, 20): 85.52847297424807,
    (4.0, 40): 27.286719557330223,
}


def trajectory_gap(result, oracle):
    """Largest elementwise difference between engine and oracle positions."""
    traj = result.diag.trajectory
    assert len(traj) == len(oracle.xs)
    worst = 0.0
    for eng_xs, ora_xs in zip(traj, oracle.xs):
        for a, b in zip(eng_xs, ora_xs):
            worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


class TestInstanceCaps:
    def test_too_many_workers(self):
        prob = least_squares_problem(5, "non_identical", n_samples=40, n_features=2)
        cfg = RunConfig(algorithm="localsgd", gamma=0.01, k=2, n_workers=5, total_iters=4)
        with pytest.raises(ConfigError):
            oracle_run(prob, cfg)

    def test_too_many_dimensions(self):
        prob = least_squares_problem(2, "non_identical", n_samples=40, n_features=9)
        cfg = RunConfig(algorithm="localsgd", gamma=0.01, k=2, n_workers=2, total_iters=4)
        with pytest.raises(ConfigError):
            oracle_run(prob, cfg)

    def test_too_many_iterations(self):
        prob = QuadraticPairProblem()
        cfg = RunConfig(algorithm="localsgd", gamma=0.01, k=2, n_workers=2,
                        total_iters=1_000_001)
        with pytest.raises(ConfigError):
            oracle_run(prob, cfg)

    def test_worker_mismatch(self):
        prob = QuadraticPairProblem()
        cfg = RunConfig(algorithm="localsgd", gamma=0.01, k=2, n_workers=4, total_iters=4)
        with pytest.raises(ConfigError):
            oracle_run(prob, cfg)


class TestEngineAgreement:
    def test_variance_corrected_deterministic_thousand_steps(self):
        prob = QuadraticPairProblem(b_param=1.0)
        cfg = RunConfig(algorithm="vrlsgd", gamma=GAMMA, k=10, n_workers=2,
                        total_iters=1000, x0=(1.0,), diagnostics=True)
        gap = trajectory_gap(run(prob, cfg), oracle_run(prob, cfg))
        assert gap <= 1e-9

    def test_variance_corrected_stochastic(self):
        prob = least_squares_problem(4, "non_identical", n_samples=48, n_features=4,
                                     sigma=0.5, data_seed=2)
        cfg = RunConfig(algorithm="vrlsgd", gamma=0.02, k=5, n_workers=4,
                        total_iters=300, seed=9, diagnostics=True)
        gap = trajectory_gap(run(prob, cfg), oracle_run(prob, cfg))
        assert gap <= 1e-9

    def test_variance_corrected_warm_up(self):
        prob = QuadraticPairProblem(b_param=2.0)
        cfg = RunConfig(algorithm="vrlsgd", gamma=GAMMA, k=10, n_workers=2,
                        total_iters=205, x0=(1.0,), warm_up=True, diagnostics=True)
        gap = trajectory_gap(run(prob, cfg), oracle_run(prob, cfg))
        assert gap <= 1e-9

    def test_partial_terminal_period(self):
        prob = QuadraticPairProblem(b_param=1.0)
        cfg = RunConfig(algorithm="vrlsgd", gamma=GAMMA, k=5, n_workers=2,
                        total_iters=23, x0=(1.0,), diagnostics=True)
        gap = trajectory_gap(run(prob, cfg), oracle_run(prob, cfg))
        assert gap <= 1e-9

    def test_plain_local_sgd_is_bit_identical(self):
        # identical expressions in identical order: stochastic local SGD
        # must match the oracle exactly, not just to tolerance
        prob = least_squares_problem(4, "non_identical", n_samples=48, n_features=4,
                                     sigma=0.5, data_seed=2)
        cfg = RunConfig(algorithm="localsgd", gamma=0.02, k=5, n_workers=4,
                        total_iters=200, seed=5, diagnostics=True)
        r = run(prob, cfg)
        o = oracle_run(prob, cfg)
        for eng_xs, ora_xs in zip(r.diag.trajectory, o.xs):
            for a, b in zip(eng_xs, ora_xs):
                assert np.array_equal(a, b)

    def test_synchronous_machine_matches_coordinator_form(self):
        # the engine realizes synchronous SGD as the period-1 worker
        # machine; the oracle moves the average directly
        prob = least_squares_problem(4, "non_identical", n_samples=48, n_features=4,
                                     sigma=0.5, data_seed=2)
        cfg = RunConfig(algorithm="ssgd", gamma=0.02, k=1, n_workers=4,
                        total_iters=1000, seed=5, diagnostics=True)
        gap = trajectory_gap(run(prob, cfg), oracle_run(prob, cfg))
        assert gap <= 1e-9

    def test_elastic_averaging(self):
        prob = least_squares_problem(4, "non_identical", n_samples=48, n_features=4,
                                     sigma=0.5, data_seed=2)
        cfg = RunConfig(algorithm="easgd", gamma=0.02, k=5, n_workers=4,
                        total_iters=300, seed=5, diagnostics=True)
        gap = trajectory_gap(run(prob, cfg), oracle_run(prob, cfg))
        assert gap <= 1e-9

    def test_oracle_correction_terms_match_engine(self):
        prob = QuadraticPairProblem(b_param=1.0)
        cfg = RunConfig(algorithm="vrlsgd", gamma=GAMMA, k=10, n_workers=2,
                        total_iters=100, x0=(1.0,), diagnostics=True)
        r = run(prob, cfg)
        o = oracle_run(prob, cfg)
        engine_deltas = dict(r.diag.sync_deltas)
        assert set(o.deltas) <= set(engine_deltas)
        for t, ora in o.deltas.items():
            for a, b in zip(engine_deltas[t], ora):
                assert float(np.max(np.abs(a - b))) <= 1e-9


class TestFixedPoint:
    def test_frozen_goldens(self):
        for (b, k), want in FIXED_POINTS.items():
            assert localsgd_fixed_point(b, k, GAMMA) == pytest.approx(want, abs=1e-12)

    def test_magnitude_grows_with_period_and_separation(self):
        for b in (1.0, 2.0, 4.0):
            m10, m20, m40 = (abs(FIXED_POINTS[(b, k)]) for k in (10, 20, 40))
            assert 0 < m10 < m20 < m40
        for k in (10, 20, 40):
            m1, m2, m4 = (abs(FIXED_POINTS[(b, k)]) for b in (1.0, 2.0, 4.0))
            assert 0 < m1 < m2 < m4

    def test_period_one_is_unbiased(self):
        assert localsgd_fixed_point(1.0, 1, GAMMA) == 0.0
        assert localsgd_fixed_point(7.0, 1, 0.1) == 0.0

    def test_vanishing_step_removes_the_bias(self):
        assert abs(localsgd_fixed_point(1.0, 10, 1e-5)) < 1e-3

    def test_non_contractive_steps_rejected(self):
        with pytest.raises(ConfigError):
            localsgd_fixed_point(1.0, 10, 0.5)
        with pytest.raises(ConfigError):
            localsgd_fixed_point(1.0, 10, 1.0)
        with pytest.raises(ConfigError):
            localsgd_fixed_point(1.0, 0, GAMMA)

    def test_matches_brute_force_limit(self):
        prob = QuadraticPairProblem(b_param=1.0)
        cfg = RunConfig(algorithm="localsgd", gamma=GAMMA, k=10, n_workers=2,
                        total_iters=100_000, x0=(1.0,), metric_stride=100_000)
        o = oracle_run(prob, cfg)
        limit = float(o.final_mean[0])
        assert abs(limit - localsgd_fixed_point(1.0, 10, GAMMA)) <= 1e-10


class TestLimitVariance:
    def test_frozen_goldens(self):
        for (b, k), want in LIMIT_VARIANCES.items():
            assert localsgd_limit_variance(b, k, GAMMA) == pytest.approx(want, rel=1e-12)

    def test_scales_with_separation_squared(self):
        v1 = localsgd_limit_variance(1.0, 10, GAMMA)
        v3 = localsgd_limit_variance(3.0, 10, GAMMA)
        assert v3 == pytest.approx(9 * v1, rel=1e-9)

    def test_engine_settles_on_the_limit(self):
        prob = QuadraticPairProblem(b_param=1.0)
        cfg = RunConfig(algorithm="localsgd", gamma=GAMMA, k=10, n_workers=2,
                        total_iters=20_000, x0=(1.0,))
        r = run(prob, cfg)
        want = LIMIT_VARIANCES[(1.0, 10)]
        assert r.trace[-1].v_variance == pytest.approx(want, rel=0.01)
