import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsbt.numerics import (
    GaussGammaParams,
    SingularPrecisionError,
    cholesky_spd,
    digamma,
    jj_lambda,
    log_evidence,
    log_sigmoid,
    log_sum_exp,
    sigmoid,
    solve_spd,
)

from oracles import bayes_linreg, quadrature_log_evidence_scalar, sequential_log_evidence

# mpmath, 30 digits: (1/(1+e^-1) - 1/2) / 2
JJ_LAMBDA_AT_1 = 0.11552928931500244
# mpmath.digamma(10)
DIGAMMA_10 = 2.251752589066721


class TestScalars:
    def test_sigmoid_extremes(self):
        np.testing.assert_allclose(sigmoid([-800.0, 0.0, 800.0]), [0.0, 0.5, 1.0])
        assert np.isfinite(log_sigmoid(-800.0))
        np.testing.assert_allclose(log_sigmoid(-800.0), -800.0)

    def test_jj_lambda_value(self):
        np.testing.assert_allclose(jj_lambda(1.0), JJ_LAMBDA_AT_1, rtol=1e-14)
        np.testing.assert_allclose(jj_lambda(-1.0), JJ_LAMBDA_AT_1, rtol=1e-14)

    def test_jj_lambda_continuous_at_cutoff(self):
        below, above = jj_lambda(1e-4 * (1 - 1e-9)), jj_lambda(1e-4 * (1 + 1e-9))
        np.testing.assert_allclose(below, above, rtol=1e-12)
        assert jj_lambda(0.0) == 0.125

    @given(st.floats(1e-3, 50.0))
    def test_jj_lambda_definition(self, xi):
        np.testing.assert_allclose(jj_lambda(xi), (sigmoid(xi) - 0.5) / (2 * xi), rtol=1e-10)

    def test_digamma(self):
        np.testing.assert_allclose(digamma(10.0), DIGAMMA_10, rtol=1e-14)
        with pytest.raises(ValueError):
            digamma(0.0)

    def test_log_sum_exp(self):
        np.testing.assert_allclose(log_sum_exp([1000.0, 1000.0]), 1000.0 + math.log(2))
        assert log_sum_exp([-np.inf, -np.inf]) == -np.inf
        with pytest.raises(ValueError):
            log_sum_exp([])
        with pytest.raises(ValueError):
            log_sum_exp([0.0, np.nan])


class TestLinearAlgebra:
    def test_solve_spd(self, rng):
        m = rng.normal(size=(3, 3))
        a = m @ m.T + 3 * np.eye(3)
        b = rng.normal(size=3)
        x, logdet = solve_spd(a, b)
        np.testing.assert_allclose(a @ x, b, atol=1e-12)
        np.testing.assert_allclose(logdet, np.linalg.slogdet(a)[1], atol=1e-12)

    def test_singular_raises(self):
        with pytest.raises(SingularPrecisionError, match="node 4"):
            cholesky_spd(np.array([[1.0, 1.0], [1.0, 1.0]]) - 1e-3 * np.eye(2), "node 4")


class TestGaussGamma:
    def test_validation(self):
        with pytest.raises(ValueError):
            GaussGammaParams(np.zeros(2), np.eye(2), 0.0, 1.0)
        with pytest.raises(ValueError):
            GaussGammaParams(np.zeros(2), np.eye(3), 1.0, 1.0)

    def test_posterior_matches_oracle(self, rng):
        X = rng.normal(size=(12, 3))
        y = rng.normal(size=12)
        prior = GaussGammaParams(rng.normal(size=3), 2 * np.eye(3), 1.5, 0.7)
        post = prior.posterior(y, X)
        mu, lam, a, b = bayes_linreg(y, X, prior.mu, prior.lam, prior.a, prior.b)
        np.testing.assert_allclose(post.mu, mu, atol=1e-12)
        np.testing.assert_allclose(post.lam, lam, atol=1e-12)
        np.testing.assert_allclose([post.a, post.b], [a, b], atol=1e-12)


class TestLogEvidence:
    def test_empty(self):
        prior = GaussGammaParams(np.zeros(1), np.eye(1), 1.0, 1.0)
        assert log_evidence(np.zeros(0), np.zeros((0, 1)), prior) == 0.0

    def test_quadrature_single_point(self):
        prior = GaussGammaParams(np.array([0.3]), np.array([[1.5]]), 2.0, 1.3)
        y = 0.8
        expected = quadrature_log_evidence_scalar(y, 0.3, 1.5, 2.0, 1.3)
        np.testing.assert_allclose(log_evidence([y], [[1.0]], prior), expected, atol=1e-6)

    def test_sequential_predictive(self, rng):
        for _ in range(20):
            m, p = rng.integers(1, 11), rng.integers(1, 4)
            X = rng.normal(size=(m, p))
            y = rng.normal(size=m) * 2
            prior = GaussGammaParams(rng.normal(size=p), (1 + rng.uniform()) * np.eye(p), 1 + rng.uniform(), 0.5 + rng.uniform())
            expected = sequential_log_evidence(y, X, prior.mu, prior.lam, prior.a, prior.b)
            np.testing.assert_allclose(log_evidence(y, X, prior), expected, atol=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 9), st.integers(1, 8), st.integers(0, 2**31))
    def test_chain_rule(self, m, split, seed):
        # p(y) = p(y_a) p(y_b | y_a): the second factor is the evidence under the updated prior
        split = min(split, m - 1)
        r = np.random.default_rng(seed)
        X = np.column_stack([r.normal(size=m), np.ones(m)])
        y = r.normal(size=m)
        prior = GaussGammaParams(np.zeros(2), np.eye(2), 1.0, 1.0)
        first = log_evidence(y[:split], X[:split], prior)
        second = log_evidence(y[split:], X[split:], prior.posterior(y[:split], X[:split]))
        np.testing.assert_allclose(log_evidence(y, X, prior), first + second, atol=1e-9)
