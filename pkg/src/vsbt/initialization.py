"""Greedy evidence-based initialization of the variational state.

The routine searches split times top-down, treats them as hard change
points, fits the gates alone against that routing, and seeds a full tree
in which the ``j``-th deepest leaf owns model ``j``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .inference import (
    VariationalState,
    leaf_probabilities,
    optimal_xi,
    path_probabilities,
    update_gates,
)
from .model import Dataset, Hyperparameters
from .numerics import log_evidence
from .tree import TreeIndex

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InitPlan:
    """Integer split times and 1-based closed intervals per node.

    ``split_time[s]`` for inner nodes: times ``<= split_time`` go left.
    ``bounds[s] = (lo, hi)`` for every node.
    """

    d_max: int
    split_time: np.ndarray
    bounds: np.ndarray


def best_split(dataset: Dataset, lo: int, hi: int, prior, min_side: int = 1):
    """Best integer split of ``[lo, hi]`` by summed log evidence.

    Candidates ``h`` keep at least ``min_side`` points on each side; ties go
    to the smallest ``h``.  Returns ``(h, score)``.
    """
    best_h, best = None, -np.inf
    x, X = dataset.x, dataset.X
    for h in range(lo + min_side - 1, hi - min_side + 1):
        score = log_evidence(x[lo - 1:h], X[lo - 1:h], prior) + log_evidence(
            x[h:hi], X[h:hi], prior
        )
        if score > best:
            best_h, best = h, score
    if best_h is None:
        raise ValueError(f"interval [{lo}, {hi}] is too short to split")
    return best_h, best


def greedy_split_search(dataset: Dataset, hyper: Hyperparameters) -> InitPlan:
    """Top-down greedy split search to full depth.

    Every interval must still hold enough points to be split down to the
    maximum depth, so a node at depth ``d`` keeps at least
    ``2**(d_max - d - 1)`` points on each side of its split.
    """
    index = hyper.tree
    n = dataset.n
    if hyper.n_models != index.n_leaves:
        raise ValueError(
            f"initialization needs n_models = 2**d_max = {index.n_leaves}, "
            f"got {hyper.n_models}"
        )
    if n < index.n_leaves:
        raise ValueError(
            f"initialization needs at least 2**d_max = {index.n_leaves} points, got {n}"
        )
    split = np.zeros(index.n_inner, dtype=int)
    bounds = np.zeros((index.n_nodes, 2), dtype=int)
    bounds[0] = (1, n)
    for s in range(index.n_inner):
        lo, hi = bounds[s]
        depth = index.depth(s)
        h, _ = best_split(
            dataset, lo, hi, hyper.ar_prior, min_side=2 ** (index.d_max - depth - 1)
        )
        split[s] = h
        bounds[2 * s + 1] = (lo, h)
        bounds[2 * s + 2] = (h + 1, hi)
    return InitPlan(index.d_max, split, bounds)


def deterministic_routing(split_time, n: int) -> np.ndarray:
    """One-hot branch probabilities ``(I, 2, n)``: right iff ``t > split_time``."""
    split_time = np.asarray(split_time, dtype=float)
    t = np.arange(1, n + 1, dtype=float)
    right = (t[None, :] > split_time[:, None]).astype(float)
    return np.stack([1.0 - right, right], axis=1)


def midpoint_split_times(n: int, d_max: int) -> np.ndarray:
    """Dyadic midpoints ``(2j - 1) n / 2**(d + 1)`` for each inner node."""
    index = TreeIndex(d_max)
    return np.array(
        [
            (2 * j - 1) * n / 2.0 ** (d + 1)
            for d, j in map(index.position, range(index.n_inner))
        ]
    )


def seed_assignment(d_max: int, n_models: int):
    """Full tree with leaf ``j`` owning model ``j``; inner nodes uniform.

    Returns ``(g, pi)``.
    """
    if n_models != 2**d_max:
        raise ValueError(f"seeding needs n_models = {2**d_max}, got {n_models}")
    return seed_block_assignment(d_max, n_models)


def seed_block_assignment(d_max: int, n_models: int):
    """Like :func:`seed_assignment` for fewer models than leaves.

    Consecutive blocks of ``2**d_max / n_models`` leaves share one model, so
    leaf ``j`` (0-based) owns model ``j * n_models // 2**d_max``.
    """
    index = TreeIndex(d_max)
    if n_models < 1 or index.n_leaves % n_models:
        raise ValueError(
            f"n_models={n_models} must divide the {index.n_leaves} leaves evenly"
        )
    g = np.zeros(index.n_nodes)
    g[: index.n_inner] = 1.0
    pi = np.full((index.n_nodes, n_models), 1.0 / n_models)
    owner = np.arange(index.n_leaves) * n_models // index.n_leaves
    pi[index.n_inner:] = np.eye(n_models)[owner]
    return g, pi


def _blank_state(
    dataset: Dataset, hyper: Hyperparameters, varpi, eta, L, blocks: bool = False
) -> VariationalState:
    index = hyper.tree
    seed = seed_block_assignment if blocks else seed_assignment
    g, pi = seed(hyper.d_max, hyper.n_models)
    prior = hyper.ar_prior
    k = hyper.n_models
    return VariationalState(
        eta=eta,
        L=L,
        xi=optimal_xi(dataset, eta, L),
        varpi=varpi,
        q_path=path_probabilities(varpi),
        g=g,
        log_phi=np.zeros(index.n_nodes),
        leaf_prob=leaf_probabilities(g),
        pi=pi,
        alpha=hyper.alpha.copy(),
        mu=np.tile(prior.mu, (k, 1)),
        lam=np.tile(prior.lam, (k, 1, 1)),
        a=np.full(k, prior.a),
        b=np.full(k, prior.b),
    )


def refine_gates(
    dataset: Dataset,
    hyper: Hyperparameters,
    state: VariationalState,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> VariationalState:
    """Iterate the gate and ``xi`` updates alone with the routing frozen."""
    for it in range(max_iter):
        new = update_gates(dataset, state, hyper)
        delta = np.max(np.abs(new.eta - state.eta))
        state = new
        if delta < tol:
            logger.debug("gate refinement converged after %d iterations", it + 1)
            return state
    warnings.warn(
        f"gate refinement stopped after {max_iter} iterations without converging",
        RuntimeWarning,
        stacklevel=2,
    )
    return state


def initialize(
    dataset: Dataset, hyper: Hyperparameters, plan: InitPlan | None = None
) -> VariationalState:
    """Full initialization: split search, hard routing, gate refinement, seeding."""
    if plan is None:
        plan = greedy_split_search(dataset, hyper)
    varpi = deterministic_routing(plan.split_time, dataset.n)
    eta = np.column_stack([np.ones(plan.split_time.size), -plan.split_time.astype(float)])
    state = _blank_state(dataset, hyper, varpi, eta, hyper.gate_precision.copy())
    return refine_gates(dataset, hyper, state)


def initialize_fixed_splitting(dataset: Dataset, hyper: Hyperparameters) -> VariationalState:
    """Midpoint routing with gates left at their prior, for the fixed-split baseline.

    ``n_models`` may be smaller than the number of leaves; see
    :func:`seed_block_assignment`.
    """
    varpi = deterministic_routing(midpoint_split_times(dataset.n, hyper.d_max), dataset.n)
    return _blank_state(
        dataset,
        hyper,
        varpi,
        hyper.gate_mean.copy(),
        hyper.gate_precision.copy(),
        blocks=True,
    )
