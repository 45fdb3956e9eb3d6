"""Scalar special functions, log-domain helpers and small SPD linear algebra."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

LOG_2PI = math.log(2.0 * math.pi)

# below this |xi| the direct form of jj_lambda loses digits to cancellation
_JJ_SERIES_CUTOFF = 1e-4


class SingularPrecisionError(np.linalg.LinAlgError):
    """A precision matrix that should be SPD failed its Cholesky factorization."""


def sigmoid(x):
    """Logistic sigmoid, evaluated without overflow for either sign of ``x``."""
    return special.expit(x)


def log_sigmoid(x):
    """``log(sigmoid(x))`` computed as ``-log(1 + exp(-x))``."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


def jj_lambda(xi):
    """Curvature coefficient of the Jaakkola-Jordan logistic bound.

    ``(sigmoid(xi) - 1/2) / (2 xi)``, even in ``xi``.  Near zero the
    series ``1/8 - xi**2/96`` replaces the 0/0 form.
    """
    xi = np.abs(np.asarray(xi, dtype=float))
    small = xi < _JJ_SERIES_CUTOFF
    safe = np.where(small, 1.0, xi)
    direct = np.tanh(safe / 2.0) / (4.0 * safe)
    series = 0.125 - xi * xi / 96.0
    out = np.where(small, series, direct)
    return out if out.ndim else float(out)


def digamma(x):
    """Digamma function for positive arguments."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("digamma is only defined here for x > 0")
    return special.digamma(x)


def log_sum_exp(values, axis=None):
    """Stable ``log(sum(exp(values)))``; all ``-inf`` inputs give ``-inf``."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("log_sum_exp needs at least one value")
    if np.isnan(arr).any():
        raise ValueError("log_sum_exp got a NaN input")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = special.logsumexp(arr, axis=axis)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class SPDSolve:
    """Cholesky factorization of an SPD matrix with solve and log-determinant."""

    factor: tuple
    logdet: float

    def solve(self, b):
        return linalg.cho_solve(self.factor, b)

    def inverse(self):
        n = self.factor[0].shape[0]
        return self.solve(np.eye(n))


def cholesky_spd(a, label: str = "matrix") -> SPDSolve:
    """Factor an SPD matrix, raising :class:`SingularPrecisionError` on failure.

    ``label`` names the node or model the matrix belongs to so the error
    can point at it.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise SingularPrecisionError(f"non-finite entries in precision of {label}")
    try:
        c, lower = linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularPrecisionError(
            f"precision of {label} is not positive definite"
        ) from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    return SPDSolve((c, lower), logdet)


def solve_spd(a, b, label: str = "matrix"):
    """Solve ``a @ x = b`` for SPD ``a``; returns ``(x, log|a|)``."""
    chol = cholesky_spd(a, label)
    return chol.solve(np.asarray(b, dtype=float)), chol.logdet


@dataclass(frozen=True)
class GaussGammaParams:
    """Normal-gamma parameters: ``theta | tau ~ N(mu, (tau lam)^-1)``, ``tau ~ Gam(a, b)``.

    ``b`` is a rate parameter.
    """

    mu: np.ndarray
    lam: np.ndarray
    a: float
    b: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        if lam.shape != (mu.size, mu.size):
            raise ValueError("lam must be square with the size of mu")
        if not np.allclose(lam, lam.T, rtol=1e-12, atol=0.0):
            raise ValueError("lam must be symmetric")
        if not (self.a > 0 and self.b > 0):
            raise ValueError("gamma shape a and rate b must be positive")
        cholesky_spd(lam, "Gauss-gamma prior")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.mu.size

    def posterior(self, y, design) -> "GaussGammaParams":
        """Conjugate update with observations ``y`` and design rows ``design``."""
        y = np.asarray(y, dtype=float).reshape(-1)
        design = np.asarray(design, dtype=float).reshape(y.size, self.dim)
        lam_m = self.lam + design.T @ design
        rhs = self.lam @ self.mu + design.T @ y
        mu_m, _ = solve_spd(lam_m, rhs, "posterior")
        a_m = self.a + 0.5 * y.size
        b_m = self.b + 0.5 * (y @ y + self.mu @ self.lam @ self.mu - mu_m @ lam_m @ mu_m)
        return GaussGammaParams(mu_m, 0.5 * (lam_m + lam_m.T), a_m, b_m)


def log_evidence(y, design, prior: GaussGammaParams) -> float:
    """Log marginal likelihood of ``y`` under a normal-gamma linear model.

    Integrates the Gaussian likelihood ``N(y | design @ theta, 1/tau)``
    against the prior in closed form.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    m = y.size
    if m == 0:
        return 0.0
    design = np.asarray(design, dtype=float).reshape(m, prior.dim)
    prior_chol = cholesky_spd(prior.lam, "Gauss-gamma prior")
    lam_m = prior.lam + design.T @ design
    post_chol = cholesky_spd(lam_m, "evidence posterior")
    mu_m = post_chol.solve(prior.lam @ prior.mu + design.T @ y)
    a_m = prior.a + 0.5 * m
    b_m = prior.b + 0.5 * (
        y @ y + prior.mu @ prior.lam @ prior.mu - mu_m @ lam_m @ mu_m
    )
    return float(
        0.5 * prior_chol.logdet
        - 0.5 * post_chol.logdet
        + prior.a * math.log(prior.b)
        - a_m * math.log(b_m)
        + special.gammaln(a_m)
        - special.gammaln(prior.a)
        - 0.5 * m * LOG_2PI
    )
