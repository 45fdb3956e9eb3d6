import warnings

import numpy as np
import pytest

from vsbt.inference import update_gates
from vsbt.initialization import (
    best_split,
    deterministic_routing,
    greedy_split_search,
    initialize,
    initialize_fixed_splitting,
    midpoint_split_times,
    refine_gates,
    seed_assignment,
    seed_block_assignment,
)
from vsbt.model import Hyperparameters, build_dataset, experiment1_spec, generate_piecewise_ar
from vsbt.numerics import GaussGammaParams, log_evidence


PRIOR0 = GaussGammaParams(np.zeros(1), np.eye(1), 1.0, 1.0)


class TestBestSplit:
    def test_obvious_step(self):
        ds = build_dataset([0.0, 0.0, 10.0, 10.0], 0)
        h, _ = best_split(ds, 1, 4, PRIOR0)
        assert h == 2

    def test_ties_go_left(self):
        # a constant series scores h=1 and h=3 identically by symmetry
        ds = build_dataset(np.zeros(4), 0)
        scores = {
            h: log_evidence(np.zeros(h), np.ones((h, 1)), PRIOR0)
            + log_evidence(np.zeros(4 - h), np.ones((4 - h, 1)), PRIOR0)
            for h in (1, 2, 3)
        }
        assert scores[1] == pytest.approx(scores[3], abs=1e-12)
        h, best = best_split(ds, 1, 4, PRIOR0)
        assert best == max(scores.values())
        assert h == min(k for k, v in scores.items() if v == best)

    def test_min_side(self):
        ds = build_dataset([0.0, 10.0, 10.0, 10.0, 10.0, 10.0], 0)
        h, _ = best_split(ds, 1, 6, PRIOR0, min_side=2)
        assert h == 2

    def test_too_short(self):
        ds = build_dataset([1.0, 2.0], 0)
        with pytest.raises(ValueError, match="too short"):
            best_split(ds, 1, 2, PRIOR0, min_side=2)


class TestGreedySearch:
    def test_experiment1_root_split(self):
        x = generate_piecewise_ar(experiment1_spec(1))
        ds = build_dataset(x, 1)
        plan = greedy_split_search(ds, Hyperparameters.default(75))
        assert abs(plan.split_time[0] - 25) <= 3 or abs(plan.split_time[0] - 50) <= 3
        # every interval is non-empty and the leaves tile 1..n
        leaves = plan.bounds[31:]
        assert np.all(leaves[:, 0] <= leaves[:, 1])
        assert leaves[0, 0] == 1 and leaves[-1, 1] == 75
        np.testing.assert_array_equal(leaves[1:, 0], leaves[:-1, 1] + 1)

    def test_needs_enough_points(self):
        ds = build_dataset(np.arange(20.0), 1)
        with pytest.raises(ValueError, match="at least"):
            greedy_split_search(ds, Hyperparameters.default(20))

    def test_needs_full_model_count(self):
        ds = build_dataset(np.arange(40.0), 1)
        with pytest.raises(ValueError, match="n_models"):
            greedy_split_search(ds, Hyperparameters.default(40, n_models=4))


class TestRoutingAndSeeding:
    def test_boundary(self):
        varpi = deterministic_routing([2], 4)
        np.testing.assert_array_equal(varpi[0, 1], [0, 0, 1, 1])
        np.testing.assert_array_equal(varpi[0, 0], [1, 1, 0, 0])

    def test_midpoints(self):
        np.testing.assert_allclose(midpoint_split_times(75, 2), [37.5, 18.75, 56.25])

    def test_seed_assignment(self):
        g, pi = seed_assignment(2, 4)
        np.testing.assert_array_equal(g, [1, 1, 1, 0, 0, 0, 0])
        np.testing.assert_array_equal(pi[3:], np.eye(4))
        np.testing.assert_allclose(pi[:3], 0.25)
        with pytest.raises(ValueError):
            seed_assignment(2, 3)

    def test_block_seeding(self):
        _, pi = seed_block_assignment(3, 2)
        np.testing.assert_array_equal(np.argmax(pi[7:], axis=1), [0, 0, 0, 0, 1, 1, 1, 1])
        with pytest.raises(ValueError):
            seed_block_assignment(3, 3)


class TestInitialize:
    @pytest.fixture
    def setup(self):
        x = generate_piecewise_ar(experiment1_spec(2))
        ds = build_dataset(x, 1)
        return ds, Hyperparameters.default(75, d_max=3)

    def test_gates_are_refined_fixed_point(self, setup):
        ds, hyper = setup
        state = initialize(ds, hyper)
        again = update_gates(ds, state, hyper)
        np.testing.assert_allclose(again.eta, state.eta, atol=1e-5)
        np.testing.assert_array_equal(state.varpi.sum(axis=1), 1.0)
        assert set(np.unique(state.varpi)) <= {0.0, 1.0}

    def test_refine_warns_without_convergence(self, setup):
        ds, hyper = setup
        state = initialize(ds, hyper)
        moved = state.copy()
        moved.eta[:] = 0.0
        with pytest.warns(RuntimeWarning, match="without converging"):
            refine_gates(ds, hyper, moved, max_iter=1)

    def test_fixed_splitting_state(self, setup):
        ds, _ = setup
        hyper = Hyperparameters.default(75, d_max=4, n_models=4)
        state = initialize_fixed_splitting(ds, hyper)
        np.testing.assert_array_equal(state.eta, hyper.gate_mean)
        assert state.pi.shape == (31, 4)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            initialize_fixed_splitting(ds, hyper)
