"""Scikit-learn style front end for segmenting a single series."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .inference import FitOptions, FitResult, VariationalState, fit, surrogate_elbo
from .initialization import initialize, initialize_fixed_splitting
from .model import Dataset, Hyperparameters, build_dataset
from .report import SCHEMA_VERSION, SegmentationReport, build_report


def check_series(X) -> np.ndarray:
    """Accept a 1-D series or a single-column 2-D array; return a float vector."""
    arr = np.asarray(X)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    arr = check_array(arr, dtype=np.float64, ensure_min_samples=1)
    if arr.shape[1] != 1:
        raise ValueError(f"expected a univariate series, got {arr.shape[1]} columns")
    return arr[:, 0]


class VSBTSegmenter(BaseEstimator):
    """Variable splitting binary tree segmentation of a univariate series.

    Segments are leaves of a binary tree whose inner nodes split the time
    axis with logistic gates; each leaf uses one of ``n_models`` shared AR
    models.  Fitting runs the evidence-based initialization and then
    coordinate-ascent variational inference.

    Parameters
    ----------
    ar_order : int
        Order ``D`` of every AR model.
    d_max : int
        Maximum tree depth.
    n_models : int or None
        Number of shared AR models; ``None`` means ``2**d_max``.
    split_prob : float
        Prior split probability of every inner node.
    alpha : float
        Symmetric Dirichlet concentration over model usage.
    gate_precision : float
        Scale of the identity prior precision on each gate's coefficients.
    a, b, lam : float
        Normal-gamma prior: gamma shape and rate, and the scale of the
        identity coefficient precision.  The coefficient prior mean is zero.
    fixed_splitting : bool
        Route every time by dyadic midpoints and freeze the gates, which
        emulates the fixed-split baseline.  ``n_models`` may then be smaller
        than ``2**d_max``.
    max_sweeps, tol, gate_iterations
        Coordinate-ascent controls, see :class:`vsbt.inference.FitOptions`.

    Attributes
    ----------
    hyper_ : Hyperparameters
    state_ : VariationalState
    trace_ : list of TraceEntry
    converged_ : bool
    report_ : SegmentationReport
    labels_ : ndarray of int
        MAP model index per time.
    change_prob_ : ndarray
        Change probability between consecutive times.
    """

    def __init__(
        self,
        ar_order=1,
        d_max=5,
        n_models=None,
        split_prob=0.5,
        alpha=0.5,
        gate_precision=1.0,
        a=1.0,
        b=1.0,
        lam=1.0,
        fixed_splitting=False,
        max_sweeps=500,
        tol=1e-6,
        gate_iterations=1,
    ):
        self.ar_order = ar_order
        self.d_max = d_max
        self.n_models = n_models
        self.split_prob = split_prob
        self.alpha = alpha
        self.gate_precision = gate_precision
        self.a = a
        self.b = b
        self.lam = lam
        self.fixed_splitting = fixed_splitting
        self.max_sweeps = max_sweeps
        self.tol = tol
        self.gate_iterations = gate_iterations

    def make_hyperparameters(self, n: int) -> Hyperparameters:
        return Hyperparameters.default(
            n,
            ar_order=self.ar_order,
            d_max=self.d_max,
            n_models=self.n_models,
            split_prob=self.split_prob,
            alpha=self.alpha,
            gate_precision=self.gate_precision,
            a=self.a,
            b=self.b,
            lam=self.lam,
        )

    def _options(self) -> FitOptions:
        return FitOptions(
            max_sweeps=self.max_sweeps,
            tol=self.tol,
            fixed_splitting=self.fixed_splitting,
            gate_iterations=self.gate_iterations,
        )

    def fit(self, X, y=None, hyper: Hyperparameters | None = None):
        """Fit to a series ``X``; ``hyper`` overrides the constructor priors."""
        x = check_series(X)
        dataset = build_dataset(x, self.ar_order)
        hyper = hyper if hyper is not None else self.make_hyperparameters(dataset.n)
        if self.fixed_splitting:
            init = initialize_fixed_splitting(dataset, hyper)
        else:
            init = initialize(dataset, hyper)
        result = fit(dataset, hyper, init, self._options())
        self._store(dataset, hyper, result)
        return self

    def _store(self, dataset: Dataset, hyper: Hyperparameters, result: FitResult):
        self.dataset_ = dataset
        self.hyper_ = hyper
        self.state_ = result.state
        self.trace_ = result.trace
        self.converged_ = result.converged
        self.report_ = build_report(result.state)
        self.labels_ = self.report_.labels
        self.change_prob_ = self.report_.change_prob
        self.n_features_in_ = 1

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_

    def score(self, X=None, y=None) -> float:
        """Surrogate evidence lower bound of the fitted state."""
        check_is_fitted(self, "state_")
        dataset = self.dataset_ if X is None else build_dataset(check_series(X), self.ar_order)
        return surrogate_elbo(dataset, self.state_, self.hyper_)

    @property
    def split_times_(self) -> dict[int, float]:
        check_is_fitted(self, "report_")
        return self.report_.split_times

    def results(self, manifest: dict | None = None) -> dict:
        """JSON-ready record of hyperparameters, posterior, report and trace."""
        check_is_fitted(self, "state_")
        return results_payload(
            self.dataset_,
            self.hyper_,
            self.state_,
            self.report_,
            self.trace_,
            self.converged_,
            mode="fsbt-emulation" if self.fixed_splitting else "vsbt",
            manifest=manifest,
        )


def results_payload(
    dataset: Dataset,
    hyper: Hyperparameters,
    state: VariationalState,
    report: SegmentationReport,
    trace,
    converged: bool,
    mode: str = "vsbt",
    manifest: dict | None = None,
) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "mode": mode,
        "manifest": manifest or {},
        "data": {"x": dataset.x.tolist(), "ar_order": dataset.ar_order},
        "hyper": hyper.to_dict(),
        "posterior": {
            "gates": {
                "eta_prime": state.eta.tolist(),
                "l_prime": state.L.tolist(),
                "xi": state.xi.tolist(),
            },
            "routing_summary": {
                "varpi": state.varpi.tolist(),
                "q_path": state.q_path.tolist(),
            },
            "tree": {
                "g_prime": state.g.tolist(),
                "log_phi": state.log_phi.tolist(),
                "leaf_prob": state.leaf_prob.tolist(),
            },
            "assignment": {
                "alpha_prime": state.alpha.tolist(),
                "pi_prime": state.pi.tolist(),
            },
            "ar": {
                "mu": state.mu.tolist(),
                "lambda": state.lam.tolist(),
                "a": state.a.tolist(),
                "b": state.b.tolist(),
            },
        },
        "report": report.to_dict(),
        "trace": [
            {"sweep": e.sweep, "elbo": e.elbo, "max_param_delta": e.max_param_delta}
            for e in trace
        ],
        "converged": bool(converged),
    }


def state_from_results(data: dict) -> VariationalState:
    post = data["posterior"]

    def arr(v):
        return np.array(v, dtype=float)

    return VariationalState(
        eta=arr(post["gates"]["eta_prime"]),
        L=arr(post["gates"]["l_prime"]),
        xi=arr(post["gates"]["xi"]),
        varpi=arr(post["routing_summary"]["varpi"]),
        q_path=arr(post["routing_summary"]["q_path"]),
        g=arr(post["tree"]["g_prime"]),
        log_phi=arr(post["tree"]["log_phi"]),
        leaf_prob=arr(post["tree"]["leaf_prob"]),
        pi=arr(post["assignment"]["pi_prime"]),
        alpha=arr(post["assignment"]["alpha_prime"]),
        mu=arr(post["ar"]["mu"]),
        lam=arr(post["ar"]["lambda"]),
        a=arr(post["ar"]["a"]),
        b=arr(post["ar"]["b"]),
    )
