"""Bayesian time-series segmentation with variable splitting binary trees.

Inner nodes of a perfect binary tree carry logistic gates over the time
index; the leaves of a pruned subtree define segments, each explained by
one of a finite set of shared autoregressive models.  Posteriors are fitted
by coordinate-ascent variational inference.
"""

__version__ = "0.1.0"

from .estimator import VSBTSegmenter, check_series
from .inference import (
    DivergenceError,
    FitOptions,
    FitResult,
    VariationalState,
    fit,
    surrogate_elbo,
)
from .initialization import initialize, initialize_fixed_splitting
from .model import (
    Dataset,
    Hyperparameters,
    build_dataset,
    experiment1_spec,
    generate_piecewise_ar,
    generate_sine_plus_noise,
)
from .numerics import GaussGammaParams, log_evidence
from .report import SegmentationReport, build_report, change_probabilities, map_tree
from .tree import PrunedTree, TreeIndex, enumerate_pruned_trees

__all__ = [
    "__version__",
    "VSBTSegmenter",
    "check_series",
    "DivergenceError",
    "FitOptions",
    "FitResult",
    "VariationalState",
    "fit",
    "surrogate_elbo",
    "initialize",
    "initialize_fixed_splitting",
    "Dataset",
    "Hyperparameters",
    "build_dataset",
    "experiment1_spec",
    "generate_piecewise_ar",
    "generate_sine_plus_noise",
    "GaussGammaParams",
    "log_evidence",
    "SegmentationReport",
    "build_report",
    "change_probabilities",
    "map_tree",
    "PrunedTree",
    "TreeIndex",
    "enumerate_pruned_trees",
]
