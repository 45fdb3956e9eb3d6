import numpy as np
import pytest

from vsbt.model import (
    Hyperparameters,
    PiecewiseARSpec,
    Segment,
    build_dataset,
    default_midpoint_gate_priors,
    experiment1_spec,
    generate_piecewise_ar,
    generate_sine_plus_noise,
    lag_matrix,
)


class TestDataset:
    def test_lag_matrix_zero_history(self):
        X = lag_matrix([1.0, 2.0, 3.0], 2)
        np.testing.assert_array_equal(X, [[0, 0, 1], [1, 0, 1], [2, 1, 1]])

    def test_time_covariate(self):
        ds = build_dataset([5.0, 6.0, 7.0], 0)
        np.testing.assert_array_equal(ds.t_cov, [[1, 1], [2, 1], [3, 1]])
        np.testing.assert_array_equal(ds.X, np.ones((3, 1)))
        assert ds.ar_order == 0 and ds.n == 3

    @pytest.mark.parametrize("x,order", [([1.0, np.nan], 0), ([1.0, 2.0], 2), ([], 0), ([1.0], -1)])
    def test_rejects(self, x, order):
        with pytest.raises(ValueError):
            build_dataset(x, order)


class TestHyperparameters:
    def test_midpoint_priors(self):
        eta = default_midpoint_gate_priors(75, 2)
        np.testing.assert_allclose(eta, [[1, -37.5], [1, -18.75], [1, -56.25]])

    def test_defaults(self):
        h = Hyperparameters.default(75)
        assert (h.ar_order, h.d_max, h.n_models) == (1, 5, 32)
        np.testing.assert_array_equal(h.split_prob[:31], 0.5)
        np.testing.assert_array_equal(h.split_prob[31:], 0.0)
        np.testing.assert_array_equal(h.alpha, 0.5)
        np.testing.assert_array_equal(h.gate_precision[4], np.eye(2))
        np.testing.assert_array_equal(h.ar_prior.mu, [0, 0])
        np.testing.assert_array_equal(h.ar_prior.lam, np.eye(2))
        assert (h.ar_prior.a, h.ar_prior.b) == (1.0, 1.0)

    def test_round_trip(self):
        h = Hyperparameters.default(40, ar_order=2, d_max=3, n_models=5, alpha=0.7)
        back = Hyperparameters.from_dict(h.to_dict())
        assert back.to_dict() == h.to_dict()

    def test_bottom_split_prob_must_be_zero(self):
        data = Hyperparameters.default(10, d_max=1).to_dict()
        data["split_prob"] = [0.5, 0.5, 0.0]
        with pytest.raises(ValueError, match="maximum depth"):
            Hyperparameters.from_dict(data)

    def test_gate_precision_must_be_spd(self):
        data = Hyperparameters.default(10, d_max=1).to_dict()
        data["gate_precision"] = [[[1.0, 2.0], [2.0, 1.0]]]
        with pytest.raises(np.linalg.LinAlgError):
            Hyperparameters.from_dict(data)


class TestGenerators:
    def test_experiment1_shape_and_determinism(self):
        a = generate_piecewise_ar(experiment1_spec(7))
        b = generate_piecewise_ar(experiment1_spec(7))
        assert a.shape == (75,)
        np.testing.assert_array_equal(a, b)

    def test_experiment1_regime_means(self):
        # stationary means are +-2 / (1 - 0.8) = +-10; check signs over many seeds
        lows = [generate_piecewise_ar(experiment1_spec(s))[35:50].mean() for s in range(20)]
        highs = [generate_piecewise_ar(experiment1_spec(s))[60:75].mean() for s in range(20)]
        assert np.mean(lows) < -5 and np.mean(highs) > 5

    def test_noise_free_recursion(self):
        spec = PiecewiseARSpec((Segment(3, (0.5, 1.0), 1e-300),), seed=0)
        np.testing.assert_allclose(generate_piecewise_ar(spec), [1.0, 1.5, 1.75])

    def test_mixed_orders_rejected(self):
        with pytest.raises(ValueError):
            PiecewiseARSpec((Segment(3, (1.0,), 1.0), Segment(3, (0.5, 1.0), 1.0)))

    def test_sine(self):
        x = generate_sine_plus_noise(n=100, noise_std=0.0)
        np.testing.assert_allclose(x[[11, 24, 49]], [2 * np.sin(2 * np.pi * 12 / 50), 0.0, 0.0], atol=1e-12)
        assert generate_sine_plus_noise(seed=3).shape == (100,)
