"""Model configuration, lagged design construction and synthetic series."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import GaussGammaParams, cholesky_spd
from .tree import TreeIndex


@dataclass(frozen=True)
class Dataset:
    """A univariate series with its AR design matrix and time covariates.

    Row ``t`` (1-based) of ``X`` is ``[x[t-1], ..., x[t-D], 1]``; lags that
    reach before the first observation are zero.
    """

    x: np.ndarray
    X: np.ndarray
    t_cov: np.ndarray

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def ar_order(self) -> int:
        return self.X.shape[1] - 1


def lag_matrix(x, ar_order: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    X = np.zeros((n, ar_order + 1))
    for lag in range(1, ar_order + 1):
        X[lag:, lag - 1] = x[: n - lag]
    X[:, -1] = 1.0
    return X


def build_dataset(x, ar_order: int) -> Dataset:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size < 1:
        raise ValueError("the series must contain at least one value")
    if not np.all(np.isfinite(x)):
        raise ValueError("the series contains non-finite values")
    if ar_order < 0:
        raise ValueError("ar_order must be >= 0")
    if ar_order >= x.size:
        raise ValueError(
            f"ar_order={ar_order} needs a series longer than {x.size} points"
        )
    t = np.arange(1, x.size + 1, dtype=float)
    t_cov = np.column_stack([t, np.ones_like(t)])
    return Dataset(x.copy(), lag_matrix(x, ar_order), t_cov)


def default_midpoint_gate_priors(n: int, d_max: int) -> np.ndarray:
    """Gate prior means placing every split at the midpoint of its interval.

    Returns an ``(n_inner, 2)`` array in level order; node ``j`` (1-based)
    at depth ``d`` gets ``[1, -(2j - 1) n / 2**(d + 1)]``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    index = TreeIndex(d_max)
    eta = np.empty((index.n_inner, 2))
    for node in range(index.n_inner):
        d, j = index.position(node)
        eta[node] = [1.0, -(2 * j - 1) * n / 2.0 ** (d + 1)]
    return eta


@dataclass
class Hyperparameters:
    """Fixed prior quantities of the model.

    Per-node arrays are in level order: ``gate_mean`` and
    ``gate_precision`` cover inner nodes, ``split_prob`` covers every node.
    """

    ar_order: int
    d_max: int
    n_models: int
    gate_mean: np.ndarray
    gate_precision: np.ndarray
    split_prob: np.ndarray
    alpha: np.ndarray
    ar_prior: GaussGammaParams

    def __post_init__(self):
        index = TreeIndex(self.d_max)
        self.gate_mean = np.asarray(self.gate_mean, dtype=float)
        self.gate_precision = np.asarray(self.gate_precision, dtype=float)
        self.split_prob = np.array(self.split_prob, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.ar_order < 0 or self.n_models < 1:
            raise ValueError("ar_order must be >= 0 and n_models >= 1")
        if self.gate_mean.shape != (index.n_inner, 2):
            raise ValueError(f"gate_mean must have shape ({index.n_inner}, 2)")
        if self.gate_precision.shape != (index.n_inner, 2, 2):
            raise ValueError(f"gate_precision must have shape ({index.n_inner}, 2, 2)")
        for s, prec in enumerate(self.gate_precision):
            cholesky_spd(prec, f"gate prior of node {s}")
        if self.split_prob.shape != (index.n_nodes,):
            raise ValueError(f"split_prob must have {index.n_nodes} entries")
        if np.any((self.split_prob < 0) | (self.split_prob > 1)):
            raise ValueError("split probabilities must lie in [0, 1]")
        if np.any(self.split_prob[index.n_inner:] != 0):
            raise ValueError("split probabilities at maximum depth must be 0")
        if self.alpha.shape != (self.n_models,) or np.any(self.alpha <= 0):
            raise ValueError("alpha must hold n_models positive values")
        if self.ar_prior.dim != self.ar_order + 1:
            raise ValueError("ar_prior dimension must equal ar_order + 1")

    @property
    def tree(self) -> TreeIndex:
        return TreeIndex(self.d_max)

    @classmethod
    def default(
        cls,
        n: int,
        ar_order: int = 1,
        d_max: int = 5,
        n_models: int | None = None,
        split_prob: float = 0.5,
        alpha: float = 0.5,
        gate_precision: float = 1.0,
        a: float = 1.0,
        b: float = 1.0,
        lam: float = 1.0,
    ) -> "Hyperparameters":
        """Experiment defaults: midpoint gate means, identity precisions."""
        index = TreeIndex(d_max)
        k = 2 ** d_max if n_models is None else n_models
        g = np.full(index.n_nodes, float(split_prob))
        g[index.n_inner:] = 0.0
        return cls(
            ar_order=ar_order,
            d_max=d_max,
            n_models=k,
            gate_mean=default_midpoint_gate_priors(n, d_max),
            gate_precision=np.tile(gate_precision * np.eye(2), (index.n_inner, 1, 1)),
            split_prob=g,
            alpha=np.full(k, float(alpha)),
            ar_prior=GaussGammaParams(
                np.zeros(ar_order + 1), lam * np.eye(ar_order + 1), a, b
            ),
        )

    def to_dict(self) -> dict:
        return {
            "ar_order": self.ar_order,
            "d_max": self.d_max,
            "n_models": self.n_models,
            "gate_mean": self.gate_mean.tolist(),
            "gate_precision": self.gate_precision.tolist(),
            "split_prob": self.split_prob.tolist(),
            "alpha": self.alpha.tolist(),
            "ar_prior": {
                "mu": self.ar_prior.mu.tolist(),
                "lambda": self.ar_prior.lam.tolist(),
                "a": self.ar_prior.a,
                "b": self.ar_prior.b,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparameters":
        ar = data["ar_prior"]
        return cls(
            ar_order=int(data["ar_order"]),
            d_max=int(data["d_max"]),
            n_models=int(data["n_models"]),
            gate_mean=np.array(data["gate_mean"], dtype=float),
            gate_precision=np.array(data["gate_precision"], dtype=float),
            split_prob=np.array(data["split_prob"], dtype=float),
            alpha=np.array(data["alpha"], dtype=float),
            ar_prior=GaussGammaParams(
                np.array(ar["mu"], dtype=float),
                np.array(ar["lambda"], dtype=float),
                float(ar["a"]),
                float(ar["b"]),
            ),
        )


@dataclass(frozen=True)
class Segment:
    length: int
    coefficients: Sequence[float]
    variance: float


@dataclass(frozen=True)
class PiecewiseARSpec:
    """Piecewise AR generator; each segment's coefficients end with the intercept."""

    segments: tuple[Segment, ...]
    seed: int = 0

    def __post_init__(self):
        if not self.segments:
            raise ValueError("at least one segment is required")
        orders = {len(seg.coefficients) for seg in self.segments}
        if len(orders) != 1:
            raise ValueError("all segments must share the same AR order")
        for seg in self.segments:
            if seg.length < 1 or not seg.variance > 0:
                raise ValueError("segments need length >= 1 and variance > 0")

    @property
    def n(self) -> int:
        return sum(seg.length for seg in self.segments)

    @property
    def ar_order(self) -> int:
        return len(self.segments[0].coefficients) - 1


def experiment1_spec(seed: int = 0) -> PiecewiseARSpec:
    """Three AR(1) regimes of 25 points: intercept +2, then -2, then +2."""
    up = Segment(25, (0.8, 2.0), 1.0)
    down = Segment(25, (0.8, -2.0), 1.0)
    return PiecewiseARSpec((up, down, up), seed=seed)


def generate_piecewise_ar(spec: PiecewiseARSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    order = spec.ar_order
    x = np.zeros(spec.n)
    t = 0
    for seg in spec.segments:
        coef = np.asarray(seg.coefficients, dtype=float)
        sd = np.sqrt(seg.variance)
        for _ in range(seg.length):
            lags = [x[t - i] if t - i >= 0 else 0.0 for i in range(1, order + 1)]
            x[t] = np.dot(coef[:-1], lags) + coef[-1] + sd * rng.standard_normal()
            t += 1
    return x


def generate_sine_plus_noise(
    n: int = 100,
    amplitude: float = 2.0,
    period: float = 50.0,
    noise_std: float = 0.5,
    seed: int = 0,
) -> np.ndarray:
    if not period > 0:
        raise ValueError("period must be positive")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    t = np.arange(1, n + 1, dtype=float)
    return amplitude * np.sin(2.0 * np.pi * t / period) + noise_std * rng.standard_normal(n)
