import numpy as np
import pytest

from localsgd_lab.core import ConfigError, GradientStream
from localsgd_lab.objectives import (
    QuadraticPairProblem,
    estimate_lipschitz,
    least_squares_problem,
    load_csv_dataset,
    logistic_problem,
    make_partition,
)


class TestQuadraticPair:
    def test_local_values_at_origin(self):
        p = QuadraticPairProblem(b_param=1.0)
        x = np.array([0.0])
        assert p.local_loss(0, x) == 4.0
        assert p.local_loss(1, x) == 2.0
        assert p.full_gradient(0, x).tolist() == [4.0]
        assert p.full_gradient(1, x).tolist() == [-4.0]

    def test_local_values_away_from_origin(self):
        p = QuadraticPairProblem(b_param=2.0)
        x = np.array([1.0])
        assert p.local_loss(0, x) == 25.0
        assert p.local_loss(1, x) == 2.0
        assert p.full_gradient(0, x).tolist() == [10.0]
        assert p.full_gradient(1, x).tolist() == [-4.0]

    def test_aggregate_closed_forms(self):
        p = QuadraticPairProblem(b_param=2.0)
        assert p.loss(np.array([1.0])) == 27.0
        assert p.global_gradient(np.array([1.0])).tolist() == [6.0]
        assert p.loss(np.array([0.0])) == 24.0

    def test_optimum_metadata(self):
        p = QuadraticPairProblem(b_param=3.0)
        assert p.x_star.tolist() == [0.0]
        assert p.f_star == 54.0
        assert p.lipschitz == 4.0
        assert p.lipschitz_estimated is False
        assert p.dimension == 1
        assert p.worker_count == 2

    def test_worker_id_checked(self):
        p = QuadraticPairProblem()
        with pytest.raises(ValueError):
            p.local_loss(2, np.array([0.0]))

    def test_rejects_bad_params(self):
        with pytest.raises(ConfigError):
            QuadraticPairProblem(b_param=float("nan"))
        with pytest.raises(ConfigError):
            QuadraticPairProblem(sigma=-1.0)


class TestStochasticGradient:
    def test_zero_sigma_is_exact_and_needs_no_rng(self):
        p = QuadraticPairProblem(b_param=1.0, sigma=0.0)
        g = p.stochastic_gradient(0, np.array([1.0]), None, 1)
        assert g.tolist() == [6.0]

    def test_noise_is_reproducible(self):
        p = QuadraticPairProblem(b_param=1.0, sigma=0.5)
        x = np.array([1.0])
        a = p.stochastic_gradient(0, x, GradientStream(3, 0).generator_at(7), 1)
        b = p.stochastic_gradient(0, x, GradientStream(3, 0).generator_at(7), 1)
        assert np.array_equal(a, b)

    def test_noise_is_unbiased(self):
        p = QuadraticPairProblem(b_param=1.0, sigma=0.5)
        x = np.array([1.0])
        stream = GradientStream(0, 0)
        draws = [
            p.stochastic_gradient(0, x, stream.generator_at(t), 1) for t in range(4000)
        ]
        mean = np.mean(draws)
        assert abs(mean - 6.0) < 0.05

    def test_noise_power_matches_sigma_in_any_dimension(self):
        # E||g_noisy - g||^2 should be sigma^2 regardless of dimension
        sigma = 0.7
        prob = least_squares_problem(
            2, "non_identical", n_samples=32, n_features=6, sigma=sigma, data_seed=5
        )
        x = np.zeros(prob.dimension)
        exact = prob.full_gradient(0, x)
        stream = GradientStream(1, 0)
        sq = [
            float(np.sum((prob.stochastic_gradient(0, x, stream.generator_at(t), 1) - exact) ** 2))
            for t in range(4000)
        ]
        assert np.mean(sq) == pytest.approx(sigma**2, rel=0.1)

    def test_batch_averaging_shrinks_noise(self):
        p = QuadraticPairProblem(b_param=1.0, sigma=1.0)
        x = np.array([0.0])
        stream = GradientStream(2, 1)
        var1 = np.var(
            [p.stochastic_gradient(1, x, stream.generator_at(t), 1)[0] for t in range(4000)]
        )
        var8 = np.var(
            [p.stochastic_gradient(1, x, stream.generator_at(t), 8)[0] for t in range(4000)]
        )
        assert var8 == pytest.approx(var1 / 8, rel=0.2)


class TestPartitioning:
    def test_non_identical_assigns_class_pairs(self):
        labels = np.arange(20) % 10
        shards = make_partition(labels, 5, "non_identical")
        for i, shard in enumerate(shards):
            got = sorted(set(labels[shard]))
            assert got == [2 * i, 2 * i + 1]
        all_idx = np.concatenate(shards)
        assert sorted(all_idx.tolist()) == list(range(20))

    def test_uneven_class_counts_split_ceil_floor(self):
        labels = np.arange(14) % 7
        shards = make_partition(labels, 3, "non_identical")
        counts = [len(set(labels[s])) for s in shards]
        assert counts == [3, 2, 2]

    def test_identical_gives_everyone_everything(self):
        labels = np.array([0, 1, 0, 1])
        shards = make_partition(labels, 3, "identical")
        assert len(shards) == 3
        for s in shards:
            assert s.tolist() == [0, 1, 2, 3]

    def test_more_workers_than_classes_rejected(self):
        with pytest.raises(ConfigError):
            make_partition(np.array([0, 0, 1, 1]), 3, "non_identical")

    def test_unknown_mode_rejected(self):
        with pytest.raises(ConfigError):
            make_partition(np.array([0, 1]), 2, "striped")


class TestLeastSquares:
    def test_known_minimizer_has_zero_gradient(self):
        prob = least_squares_problem(4, "non_identical", n_samples=80, n_features=5)
        g = prob.global_gradient(prob.x_star)
        assert float(np.max(np.abs(g))) < 1e-9

    def test_f_star_is_the_minimum(self):
        prob = least_squares_problem(3, "non_identical", n_samples=60, n_features=4)
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = prob.x_star + 0.1 * rng.standard_normal(prob.dimension)
            assert prob.loss(x) >= prob.f_star - 1e-12
        assert prob.loss(prob.x_star) == pytest.approx(prob.f_star)

    def test_smoothness_is_max_shard_curvature(self):
        prob = least_squares_problem(3, "non_identical", n_samples=60, n_features=4)
        expected = 0.0
        for shard in prob.shards:
            a = prob.features[shard]
            h = a.T @ a / len(shard)
            expected = max(expected, float(np.linalg.eigvalsh(h)[-1]))
        assert prob.lipschitz == pytest.approx(expected)
        assert prob.lipschitz_estimated is False

    def test_gradient_matches_finite_differences(self):
        prob = least_squares_problem(2, "non_identical", n_samples=40, n_features=3)
        x = np.array([0.3, -0.7, 1.1])
        g = prob.full_gradient(1, x)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            num = (prob.local_loss(1, x + e) - prob.local_loss(1, x - e)) / (2 * h)
            assert g[j] == pytest.approx(num, abs=1e-5)

    def test_identical_partition_makes_workers_agree(self):
        prob = least_squares_problem(4, "identical", n_samples=40, n_features=3)
        x = np.array([0.1, 0.2, 0.3])
        grads = [prob.full_gradient(i, x) for i in range(4)]
        for g in grads[1:]:
            assert np.array_equal(g, grads[0])

    def test_heterogeneity_moves_local_minimizers_apart(self):
        close = least_squares_problem(
            2, "non_identical", n_samples=80, n_features=4, heterogeneity=0.0
        )
        far = least_squares_problem(
            2, "non_identical", n_samples=80, n_features=4, heterogeneity=5.0
        )

        def spread(prob):
            x = prob.x_star
            return max(float(np.linalg.norm(prob.full_gradient(i, x))) for i in range(2))

        assert spread(far) > spread(close)


class TestLogistic:
    def test_gradient_matches_finite_differences(self):
        prob = logistic_problem(2, "non_identical", n_samples=30, n_features=3)
        rng = np.random.default_rng(1)
        x = 0.1 * rng.standard_normal(prob.dimension)
        g = prob.full_gradient(0, x)
        h = 1e-6
        for j in range(0, prob.dimension, 3):
            e = np.zeros(prob.dimension)
            e[j] = h
            num = (prob.local_loss(0, x + e) - prob.local_loss(0, x - e)) / (2 * h)
            assert g[j] == pytest.approx(num, abs=1e-5)

    def test_dimension_is_classes_times_features(self):
        prob = logistic_problem(2, "non_identical", n_samples=30, n_features=3)
        assert prob.dimension == prob.n_classes * 3

    def test_smoothness_is_flagged_as_estimate(self):
        prob = logistic_problem(2, "non_identical", n_samples=30, n_features=3)
        assert prob.lipschitz_estimated is True
        assert prob.lipschitz > 0

    def test_loss_decreases_under_gradient_step(self):
        prob = logistic_problem(2, "identical", n_samples=30, n_features=3)
        x = np.zeros(prob.dimension)
        g = prob.global_gradient(x)
        assert prob.loss(x - 0.5 * g) < prob.loss(x)


class TestCsvImport:
    def test_round_trip(self, tmp_path):
        f = tmp_path / "data.csv"
        f.write_text("a,b,label\n1.5,2.0,0\n-1.0,0.5,1\n2.5,3.5,1\n")
        feats, labels = load_csv_dataset(f)
        assert feats.shape == (3, 2)
        assert feats[0].tolist() == [1.5, 2.0]
        assert labels.tolist() == [0, 1, 1]

    def test_rejects_ragged_rows(self, tmp_path):
        f = tmp_path / "bad.csv"
        f.write_text("a,b,label\n1.0,2.0,0\n5.0,1\n")
        with pytest.raises(ConfigError):
            load_csv_dataset(f)

    def test_rejects_non_integer_labels(self, tmp_path):
        f = tmp_path / "bad.csv"
        f.write_text("a,b,label\n1.0,2.0,0.5\n")
        with pytest.raises(ConfigError):
            load_csv_dataset(f)

    def test_rejects_empty_and_narrow_files(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("a,b,label\n")
        with pytest.raises(ConfigError):
            load_csv_dataset(empty)
        narrow = tmp_path / "narrow.csv"
        narrow.write_text("label\n1\n")
        with pytest.raises(ConfigError):
            load_csv_dataset(narrow)


class TestLipschitzEstimate:
    def test_recovers_quadratic_curvature(self):
        # true per-worker curvatures are 2 and 4; the estimate probes the
        # worst worker so it should land near 4
        est = estimate_lipschitz(QuadraticPairProblem(b_param=1.0))
        assert est == pytest.approx(4.0, rel=0.05)

    def test_close_to_exact_value_on_least_squares(self):
        prob = least_squares_problem(2, "non_identical", n_samples=40, n_features=3)
        est = estimate_lipschitz(prob)
        assert est == pytest.approx(prob.lipschitz, rel=0.1)
