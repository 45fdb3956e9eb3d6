"""Coordinate-ascent variational inference for the variable splitting tree.

The posterior is factored into three blocks updated in turn:

* routing ``q(u)``: per-time branch probabilities ``varpi[s, u, t]`` at
  every inner node, computed by a bottom-up log-domain recursion;
* assignment and tree ``q(z, T)``: per-node model responsibilities ``pi``
  and the product-form tree posterior given by ``g`` (CTW-style recursion);
* globals ``q(theta, tau, pi, beta)``: Dirichlet ``alpha``, one normal-gamma
  per AR model, and one Gaussian per gate, with the local logistic bound
  parameters ``xi`` refreshed after every gate update.

All arrays are indexed by packed level-order node ids from :mod:`vsbt.tree`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln, xlogy

from .model import Dataset, Hyperparameters
from .numerics import (
    LOG_2PI,
    cholesky_spd,
    digamma,
    jj_lambda,
    log_sigmoid,
)
from .tree import TreeIndex

logger = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    """Raised when an update produces NaN or an impossible value."""


@dataclass
class VariationalState:
    """All variational parameters.

    Shapes, with ``N`` nodes, ``I`` inner nodes, ``n`` times, ``K`` models
    and ``p = D + 1`` AR coefficients:

    ``eta (I, 2)``, ``L (I, 2, 2)``, ``xi (I, n)`` gate posteriors;
    ``varpi (I, 2, n)`` branch probabilities, ``q_path (N, n)`` probability
    that time ``t`` passes through each node; ``g (N,)`` posterior split
    probabilities, ``log_phi (N,)``, ``leaf_prob (N,)``; ``pi (N, K)``
    responsibilities; ``alpha (K,)``; ``mu (K, p)``, ``lam (K, p, p)``,
    ``a (K,)``, ``b (K,)`` normal-gamma posteriors.
    """

    eta: np.ndarray
    L: np.ndarray
    xi: np.ndarray
    varpi: np.ndarray
    q_path: np.ndarray
    g: np.ndarray
    log_phi: np.ndarray
    leaf_prob: np.ndarray
    pi: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    a: np.ndarray
    b: np.ndarray

    ARRAYS = (
        "eta", "L", "xi", "varpi", "q_path", "g", "log_phi", "leaf_prob",
        "pi", "alpha", "mu", "lam", "a", "b",
    )

    @property
    def d_max(self) -> int:
        return int(np.log2(self.g.size + 1)) - 1

    @property
    def tree(self) -> TreeIndex:
        return TreeIndex(self.d_max)

    def copy(self) -> "VariationalState":
        return VariationalState(**{k: getattr(self, k).copy() for k in self.ARRAYS})


# ---------------------------------------------------------------------------
# closed-form expectations
# ---------------------------------------------------------------------------


def path_probabilities(varpi) -> np.ndarray:
    """Probability that each time's path passes through each node.

    Product of the branch probabilities along the root-to-node path.
    """
    n_inner, _, n = varpi.shape
    q = np.empty((2 * n_inner + 1, n))
    q[0] = 1.0
    for s in range(n_inner):
        q[2 * s + 1] = q[s] * varpi[s, 0]
        q[2 * s + 2] = q[s] * varpi[s, 1]
    return q


def reach_probabilities(g) -> np.ndarray:
    """Probability that each node belongs to the tree: product of ``g`` over strict ancestors."""
    g = np.asarray(g, dtype=float)
    reach = np.empty_like(g)
    reach[0] = 1.0
    for s in range(1, g.size):
        reach[s] = reach[(s - 1) // 2] * g[(s - 1) // 2]
    return reach


def leaf_probabilities(g) -> np.ndarray:
    """``q(s is a leaf of T) = (1 - g_s) * prod of g over strict ancestors``."""
    return reach_probabilities(g) * (1.0 - np.asarray(g, dtype=float))


@dataclass(frozen=True)
class NodeStatistics:
    """Path-weighted sufficient statistics ``Tr Q_s, X'Q_sX, X'Q_sx, x'Q_sx``."""

    count: np.ndarray
    xx: np.ndarray
    xy: np.ndarray
    yy: np.ndarray


def node_statistics(dataset: Dataset, q_path) -> NodeStatistics:
    X, x = dataset.X, dataset.x
    return NodeStatistics(
        count=q_path.sum(axis=1),
        xx=np.einsum("st,ti,tj->sij", q_path, X, X),
        xy=q_path @ (X * x[:, None]),
        yy=q_path @ (x * x),
    )


def _inverses(mats, label):
    return np.array(
        [cholesky_spd(m, f"{label} {i}").inverse() for i, m in enumerate(mats)]
    )


def expected_log_lik(dataset: Dataset, state: VariationalState) -> np.ndarray:
    """``E[ln N(x_t | x~_t' theta_k, 1/tau_k)]`` for every model and time, shape ``(K, n)``."""
    lam_inv = _inverses(state.lam, "AR model")
    X, x = dataset.X, dataset.x
    resid = x[None, :] - state.mu @ X.T
    spread = np.einsum("ti,kij,tj->kt", X, lam_inv, X)
    elog_tau = digamma(state.a) - np.log(state.b)
    return 0.5 * (
        (elog_tau - LOG_2PI)[:, None]
        - (state.a / state.b)[:, None] * resid**2
        - spread
    )


def expected_log_h_all(dataset: Dataset, state: VariationalState) -> np.ndarray:
    """Expected log logistic bound for every inner node, branch and time, shape ``(I, 2, n)``."""
    tt = dataset.t_cov
    cov = _inverses(state.L, "gate of node")
    mean_act = state.eta @ tt.T
    second = np.einsum("ti,sij,tj->st", tt, cov, tt) + mean_act**2
    xi = state.xi
    base = log_sigmoid(xi) - 0.5 * (mean_act + xi) - jj_lambda(xi) * (second - xi**2)
    return np.stack([base, base + mean_act], axis=1)


def expected_log_h(s, t, u, state: VariationalState, dataset: Dataset) -> float:
    """Expected log logistic bound at inner node ``s``, 1-based time ``t``, branch ``u``."""
    tt = dataset.t_cov[t - 1]
    eta = state.eta[s]
    xi = state.xi[s, t - 1]
    cov = cholesky_spd(state.L[s], f"gate of node {s}").inverse()
    act = eta @ tt
    second = tt @ (np.outer(eta, eta) + cov) @ tt
    return float(
        log_sigmoid(xi) + act * u - 0.5 * (act + xi) - jj_lambda(xi) * (second - xi**2)
    )


def expected_leaf_loglik(s, t, state: VariationalState, dataset: Dataset) -> float:
    """Expected log-likelihood of ``x_t`` credited to node ``s`` as a leaf of ``T``."""
    elnn = expected_log_lik(dataset, state)[:, t - 1]
    return float(state.leaf_prob[s] * (state.pi[s] @ elnn))


# ---------------------------------------------------------------------------
# update blocks
# ---------------------------------------------------------------------------


def update_routing(dataset: Dataset, state: VariationalState) -> VariationalState:
    index = state.tree
    n_inner = index.n_inner
    club = expected_log_h_all(dataset, state)
    diamond = state.leaf_prob[:, None] * (state.pi @ expected_log_lik(dataset, state))

    log_rho = np.empty((n_inner, 2, dataset.n))
    for depth in range(index.d_max - 1, -1, -1):
        nodes = np.arange(2**depth - 1, 2 ** (depth + 1) - 1)
        for u in (0, 1):
            child = 2 * nodes + 1 + u
            val = club[nodes, u] + diamond[child]
            if depth < index.d_max - 1:
                val = val + np.logaddexp(log_rho[child, 0], log_rho[child, 1])
            log_rho[nodes, u] = val

    bad = np.argwhere(np.isnan(log_rho))
    if bad.size:
        s, _, t = bad[0]
        raise DivergenceError(f"NaN routing score at node {s}, time {t + 1}")
    norm = np.logaddexp(log_rho[:, 0], log_rho[:, 1])
    varpi = np.exp(log_rho - norm[:, None, :])
    return replace(state, varpi=varpi, q_path=path_probabilities(varpi))


def assignment_log_scores(dataset: Dataset, state: VariationalState) -> np.ndarray:
    """``ln rho[s, k]``: expected log prior weight plus routed data fit, shape ``(N, K)``."""
    stats = node_statistics(dataset, state.q_path)
    lam_inv = _inverses(state.lam, "AR model")
    elog_pi = digamma(state.alpha) - digamma(state.alpha.sum())
    elog_tau = digamma(state.a) - np.log(state.b)
    quad = (
        stats.yy[:, None]
        - 2.0 * stats.xy @ state.mu.T
        + np.einsum("sij,ki,kj->sk", stats.xx, state.mu, state.mu)
    )
    trace = np.einsum("sij,kji->sk", stats.xx, lam_inv)
    return (
        elog_pi[None, :]
        + 0.5 * stats.count[:, None] * (elog_tau - LOG_2PI)[None, :]
        - 0.5 * (state.a / state.b)[None, :] * quad
        - 0.5 * trace
    )


def tree_recursion(log_evidence, split_prob):
    """CTW-style sum over pruned trees in log space.

    ``log_evidence[s]`` is the log score of node ``s`` acting as a leaf.
    Returns ``(log_phi, g_post)`` where ``g_post`` are the posterior split
    probabilities defining the product-form tree posterior.
    """
    log_evidence = np.asarray(log_evidence, dtype=float)
    g = np.asarray(split_prob, dtype=float)
    n_nodes = g.size
    n_inner = n_nodes // 2
    log_phi = np.empty(n_nodes)
    g_post = np.zeros(n_nodes)
    log_phi[n_inner:] = log_evidence[n_inner:]
    with np.errstate(divide="ignore"):
        log_g = np.log(g)
        log_1mg = np.log1p(-g)
    for s in range(n_inner - 1, -1, -1):
        split = log_g[s] + log_phi[2 * s + 1] + log_phi[2 * s + 2]
        stop = log_1mg[s] + log_evidence[s]
        log_phi[s] = np.logaddexp(stop, split)
        if np.isneginf(log_phi[s]):
            raise DivergenceError(f"node {s} has zero posterior mass")
        g_post[s] = np.exp(split - log_phi[s])
    return log_phi, g_post


def update_assignment_and_tree(
    dataset: Dataset, state: VariationalState, hyper: Hyperparameters
) -> VariationalState:
    log_rho = assignment_log_scores(dataset, state)
    if np.isnan(log_rho).any():
        s = int(np.argwhere(np.isnan(log_rho))[0, 0])
        raise DivergenceError(f"NaN assignment score at node {s}")
    bad = np.all(np.isneginf(log_rho), axis=1)
    if bad.any():
        raise DivergenceError(f"every model has zero weight at node {int(np.argmax(bad))}")
    top = log_rho.max(axis=1, keepdims=True)
    weights = np.exp(log_rho - top)
    total = weights.sum(axis=1, keepdims=True)
    pi = weights / total
    log_evidence = (top + np.log(total))[:, 0]
    log_phi, g = tree_recursion(log_evidence, hyper.split_prob)
    return replace(state, pi=pi, g=g, log_phi=log_phi, leaf_prob=leaf_probabilities(g))


def update_global_params(
    dataset: Dataset, state: VariationalState, hyper: Hyperparameters
) -> VariationalState:
    prior = hyper.ar_prior
    stats = node_statistics(dataset, state.q_path)
    w = state.leaf_prob[:, None] * state.pi
    alpha = hyper.alpha + w.sum(axis=0)
    lam = prior.lam[None] + np.einsum("sk,sij->kij", w, stats.xx)
    lam = 0.5 * (lam + np.transpose(lam, (0, 2, 1)))
    rhs = (prior.lam @ prior.mu)[None] + w.T @ stats.xy
    mu = np.empty_like(rhs)
    for k in range(hyper.n_models):
        mu[k] = cholesky_spd(lam[k], f"AR model {k}").solve(rhs[k])
    a = prior.a + 0.5 * (w.T @ stats.count)
    b = prior.b + 0.5 * (
        prior.mu @ prior.lam @ prior.mu
        + w.T @ stats.yy
        - np.einsum("ki,kij,kj->k", mu, lam, mu)
    )
    if np.any(~(b > 0)):
        raise DivergenceError(f"non-positive gamma rate for model {int(np.argmin(b))}")
    return replace(state, alpha=alpha, mu=mu, lam=lam, a=a, b=b)


def optimal_xi(dataset: Dataset, eta, L) -> np.ndarray:
    """``xi[s, t] = sqrt(t~' (L^-1 + eta eta') t~)``."""
    tt = dataset.t_cov
    cov = _inverses(L, "gate of node")
    second = np.einsum("ti,sij,tj->st", tt, cov, tt) + (eta @ tt.T) ** 2
    return np.sqrt(second)


def update_gates(
    dataset: Dataset, state: VariationalState, hyper: Hyperparameters
) -> VariationalState:
    """Gaussian gate posteriors, then the matching ``xi``."""
    n_inner = hyper.tree.n_inner
    tt = dataset.t_cov
    q = state.q_path[:n_inner]
    curv = q * jj_lambda(state.xi)
    L = hyper.gate_precision + 2.0 * np.einsum("st,ti,tj->sij", curv, tt, tt)
    L = 0.5 * (L + np.transpose(L, (0, 2, 1)))
    rhs = np.einsum("sij,sj->si", hyper.gate_precision, hyper.gate_mean) + (
        q * (state.varpi[:, 1] - 0.5)
    ) @ tt
    eta = np.empty((n_inner, 2))
    for s in range(n_inner):
        eta[s] = cholesky_spd(L[s], f"gate of node {s}").solve(rhs[s])
    return replace(state, eta=eta, L=L, xi=optimal_xi(dataset, eta, L))


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------


def _kl_dirichlet(post, prior):
    s_post, s_prior = post.sum(), prior.sum()
    return (
        gammaln(s_post) - gammaln(post).sum() - gammaln(s_prior) + gammaln(prior).sum()
        + ((post - prior) * (digamma(post) - digamma(s_post))).sum()
    )


def _kl_gamma(a_q, b_q, a_p, b_p):
    return (
        (a_q - a_p) * digamma(a_q) - gammaln(a_q) + gammaln(a_p)
        + a_p * (np.log(b_q) - np.log(b_p)) + a_q * (b_p - b_q) / b_q
    )


def _kl_gauss(mean_q, prec_q, mean_p, prec_p, scale=1.0):
    # prec_* are precisions; ``scale`` multiplies both (normal-gamma case)
    chol_q = cholesky_spd(prec_q, "posterior")
    chol_p = cholesky_spd(prec_p, "prior")
    diff = mean_q - mean_p
    dim = mean_q.size
    return 0.5 * (
        np.trace(prec_p @ chol_q.inverse())
        + scale * diff @ prec_p @ diff
        - dim
        + chol_q.logdet
        - chol_p.logdet
    )


def elbo_terms(dataset: Dataset, state: VariationalState, hyper: Hyperparameters) -> dict:
    """Per-block contributions to the surrogate evidence lower bound."""
    prior = hyper.ar_prior
    n_inner = hyper.tree.n_inner
    w = state.leaf_prob[:, None] * state.pi
    elnn = expected_log_lik(dataset, state)
    elog_pi = digamma(state.alpha) - digamma(state.alpha.sum())

    data = float(np.sum(w * (state.q_path @ elnn.T)))
    assign = float(np.sum(w * elog_pi[None, :]) - np.sum(state.leaf_prob[:, None] * xlogy(state.pi, state.pi)))

    reach = reach_probabilities(state.g)
    g, gp = hyper.split_prob, state.g
    with np.errstate(divide="ignore", invalid="ignore"):
        per_node = (
            xlogy(gp, g) - xlogy(gp, gp) + xlogy(1.0 - gp, 1.0 - g) - xlogy(1.0 - gp, 1.0 - gp)
        )
        tree = float(np.sum(np.where(reach > 0, reach * per_node, 0.0)))

    dirichlet = -float(_kl_dirichlet(state.alpha, hyper.alpha))

    normal_gamma = 0.0
    for k in range(hyper.n_models):
        normal_gamma -= float(_kl_gamma(state.a[k], state.b[k], prior.a, prior.b))
        normal_gamma -= float(
            _kl_gauss(state.mu[k], state.lam[k], prior.mu, prior.lam, state.a[k] / state.b[k])
        )

    gates = 0.0
    for s in range(n_inner):
        gates -= float(
            _kl_gauss(state.eta[s], state.L[s], hyper.gate_mean[s], hyper.gate_precision[s])
        )

    club = expected_log_h_all(dataset, state)
    q_edge = state.q_path[:n_inner, None, :] * state.varpi
    routing = float(np.sum(q_edge * club) - np.sum(state.q_path[:n_inner, None, :] * xlogy(state.varpi, state.varpi)))

    return {
        "data": data,
        "assignment": assign,
        "tree": tree,
        "dirichlet": dirichlet,
        "normal_gamma": normal_gamma,
        "gates": gates,
        "routing": routing,
    }


def surrogate_elbo(dataset: Dataset, state: VariationalState, hyper: Hyperparameters) -> float:
    """Lower bound on the evidence with each logistic factor replaced by its local bound."""
    return float(sum(elbo_terms(dataset, state, hyper).values()))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


@dataclass
class FitOptions:
    max_sweeps: int = 500
    tol: float = 1e-6
    fixed_splitting: bool = False
    gate_iterations: int = 1
    seed: int = 0


@dataclass
class TraceEntry:
    sweep: int
    elbo: float
    max_param_delta: float


@dataclass
class FitResult:
    state: VariationalState
    trace: list[TraceEntry] = field(default_factory=list)
    converged: bool = False

    @property
    def n_sweeps(self) -> int:
        return len(self.trace)


def parameter_change(old: VariationalState, new: VariationalState) -> float:
    """Largest absolute parameter change; precision matrices by Frobenius norm."""
    deltas = [
        np.max(np.abs(getattr(new, k) - getattr(old, k)), initial=0.0)
        for k in ("eta", "g", "pi", "alpha", "mu", "a", "b")
    ]
    for k in ("L", "lam"):
        diff = getattr(new, k) - getattr(old, k)
        deltas.append(np.max(np.sqrt(np.sum(diff**2, axis=(1, 2))), initial=0.0))
    return float(max(deltas))


def sweep(
    dataset: Dataset,
    state: VariationalState,
    hyper: Hyperparameters,
    options: FitOptions,
) -> VariationalState:
    """One pass: globals, gates (+xi), routing, assignment and tree."""
    state = update_global_params(dataset, state, hyper)
    if not options.fixed_splitting:
        for _ in range(options.gate_iterations):
            state = update_gates(dataset, state, hyper)
        state = update_routing(dataset, state)
    return update_assignment_and_tree(dataset, state, hyper)


def fit(
    dataset: Dataset,
    hyper: Hyperparameters,
    init_state: VariationalState,
    options: FitOptions | None = None,
) -> FitResult:
    """Run coordinate ascent from ``init_state`` until the parameters settle.

    Stops when the largest parameter change in a sweep drops below
    ``options.tol`` or after ``options.max_sweeps`` sweeps.  With
    ``fixed_splitting`` the routing in ``init_state`` is kept as is and the
    gates are never updated.
    """
    options = options or FitOptions()
    result = FitResult(state=init_state)
    state = init_state
    for i in range(1, options.max_sweeps + 1):
        try:
            new = sweep(dataset, state, hyper, options)
        except (DivergenceError, np.linalg.LinAlgError) as exc:
            raise DivergenceError(f"sweep {i}: {exc}") from exc
        delta = parameter_change(state, new)
        elbo = surrogate_elbo(dataset, new, hyper)
        if not np.isfinite(elbo) or not np.isfinite(delta):
            raise DivergenceError(f"sweep {i}: non-finite objective or parameters")
        result.trace.append(TraceEntry(i, elbo, delta))
        logger.debug("sweep %d elbo %.10g delta %.3g", i, elbo, delta)
        state = new
        if delta < options.tol:
            result.converged = True
            break
    result.state = state
    return result
