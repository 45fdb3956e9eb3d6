"""Posterior summaries of a fitted model and their file renderings."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .inference import VariationalState
from .tree import PrunedTree

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """A results file does not match the expected schema version or layout."""


class UndefinedSplitError(ValueError):
    pass


@dataclass
class SegmentationReport:
    """MAP segmentation and change-point uncertainty of one fit.

    ``split_times`` maps internal MAP-tree nodes to the time where their
    gate crosses one half.  ``change_prob[t - 1]`` is the probability of a
    model change between times ``t`` and ``t + 1``.
    """

    map_tree: PrunedTree
    split_times: dict[int, float]
    labels: np.ndarray
    change_prob: np.ndarray
    r_vectors: np.ndarray

    def to_dict(self) -> dict:
        return {
            "map_tree": {
                "d_max": self.map_tree.d_max,
                "split": list(self.map_tree.split),
                "internal_nodes": self.map_tree.internal_nodes(),
                "leaves": self.map_tree.leaves(),
            },
            "split_times": {str(k): v for k, v in self.split_times.items()},
            "labels": self.labels.tolist(),
            "change_prob": self.change_prob.tolist(),
        }


def map_tree(g) -> PrunedTree:
    """Pruned tree maximizing the product-form posterior defined by ``g``.

    Bottom-up max-product recursion; a node splits only when splitting is
    strictly better than stopping, so ties resolve to the smaller tree.
    """
    g = np.asarray(g, dtype=float)
    n_inner = g.size // 2
    value = np.ones(g.size)
    best_split = np.zeros(n_inner, dtype=bool)
    for s in range(n_inner - 1, -1, -1):
        split = g[s] * value[2 * s + 1] * value[2 * s + 2]
        stop = 1.0 - g[s]
        best_split[s] = split > stop
        value[s] = max(split, stop)
    flags = np.zeros(n_inner, dtype=bool)
    stack = [0]
    while stack:
        s = stack.pop()
        if s < n_inner and best_split[s]:
            flags[s] = True
            stack.extend((2 * s + 1, 2 * s + 2))
    return PrunedTree(n_inner.bit_length(), tuple(bool(f) for f in flags))


def split_times(eta, tree: PrunedTree) -> dict[int, float]:
    """Time at which each internal node's mean gate ``sigmoid(eta' [t, 1])`` equals 1/2."""
    eta = np.asarray(eta, dtype=float)
    out = {}
    for s in tree.internal_nodes():
        if eta[s, 0] == 0.0:
            raise UndefinedSplitError(f"node {s} has a flat gate; its split time is undefined")
        out[s] = float(-eta[s, 1] / eta[s, 0])
    return out


def map_labels(state: VariationalState, tree: PrunedTree) -> np.ndarray:
    """Most probable model index per time along the MAP tree (0-based)."""
    n = state.varpi.shape[2]
    labels = np.empty(n, dtype=int)
    n_inner = len(tree.split)
    for t in range(n):
        s = 0
        while s < n_inner and tree.split[s]:
            go_right = state.varpi[s, 1, t] > state.varpi[s, 0, t]
            s = 2 * s + 1 + int(go_right)
        labels[t] = int(np.argmax(state.pi[s]))
    return labels


def model_probabilities(state: VariationalState) -> np.ndarray:
    """Posterior model probabilities per time, shape ``(n, K)``.

    Unrolls ``r_s = (1 - g_s) pi_s + g_s sum_u varpi_u r_child`` from the
    root: node ``s`` contributes ``pi_s`` weighted by the chance of reaching
    it along the path (``q_path``) and of stopping there (``leaf_prob``).
    """
    weights = state.q_path * state.leaf_prob[:, None]
    return weights.T @ state.pi


def change_probabilities(state: VariationalState) -> np.ndarray:
    """``1 - r_t . r_{t+1}`` for ``t = 1 .. n-1``.

    Treats the model indicators at neighbouring times as independent, which
    is only an approximation under the posterior.
    """
    r = model_probabilities(state)
    overlap = np.einsum("tk,tk->t", r[:-1], r[1:])
    return np.clip(1.0 - overlap, 0.0, 1.0)


def build_report(state: VariationalState) -> SegmentationReport:
    tree = map_tree(state.g)
    return SegmentationReport(
        map_tree=tree,
        split_times=split_times(state.eta, tree),
        labels=map_labels(state, tree),
        change_prob=change_probabilities(state),
        r_vectors=model_probabilities(state),
    )


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def write_json(path, payload: dict) -> None:
    text = json.dumps(payload, indent=1, sort_keys=True)
    Path(path).write_text(text + "\n")


def read_results(path) -> dict:
    data = json.loads(Path(path).read_text())
    version = data.get("schema_version") if isinstance(data, dict) else None
    if version != SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: schema_version {version!r} is not supported (expected {SCHEMA_VERSION})"
        )
    for key in ("hyper", "posterior", "data"):
        if key not in data:
            raise SchemaError(f"{path}: missing section {key!r}")
    return data


def write_csv(path, x, report: SegmentationReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "x", "label", "change_prob"])
        n = len(x)
        for t in range(n):
            cp = repr(float(report.change_prob[t])) if t < n - 1 else ""
            writer.writerow([t + 1, repr(float(x[t])), int(report.labels[t]), cp])


_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def render_svg(x, report: SegmentationReport, title: str = "") -> str:
    """Standalone SVG: labelled series with split lines above, change probabilities below."""
    x = np.asarray(x, dtype=float)
    n = x.size
    width, left, right = 800, 50, 20
    top_h, bottom_h, gap, top = 260, 120, 40, 30
    plot_w = width - left - right
    height = top + top_h + gap + bottom_h + 30

    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        hi, lo = hi + 1.0, lo - 1.0

    def px(t):
        return left + (t - 0.5) / n * plot_w

    def py(v):
        return top + top_h - (v - lo) / (hi - lo) * top_h

    def pc(p):
        return top + top_h + gap + bottom_h - p * bottom_h

    colors = {lab: _PALETTE[i % len(_PALETTE)] for i, lab in enumerate(sorted(set(report.labels.tolist())))}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" style="fill:#ffffff"/>',
    ]
    if title:
        parts.append(
            f'<text x="{left}" y="18" style="font-family:sans-serif;font-size:13px">{title}</text>'
        )
    parts.append(
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{top_h}" '
        'style="fill:none;stroke:#444444;stroke-width:1"/>'
    )
    for t in range(1, n):
        parts.append(
            f'<line x1="{px(t):.2f}" y1="{py(x[t - 1]):.2f}" x2="{px(t + 1):.2f}" '
            f'y2="{py(x[t]):.2f}" style="stroke:#bbbbbb;stroke-width:1"/>'
        )
    for t in range(n):
        color = colors[int(report.labels[t])]
        parts.append(
            f'<circle cx="{px(t + 1):.2f}" cy="{py(x[t]):.2f}" r="3" style="fill:{color}"/>'
        )
    for node, h in sorted(report.split_times.items()):
        xpos = px(min(max(h, 0.5), n + 0.5))
        parts.append(
            f'<line class="split" data-node="{node}" x1="{xpos:.2f}" y1="{top}" '
            f'x2="{xpos:.2f}" y2="{top + top_h}" '
            'style="stroke:#000000;stroke-width:1.5;stroke-dasharray:4,3"/>'
        )

    base = top + top_h + gap
    parts.append(
        f'<rect x="{left}" y="{base}" width="{plot_w}" height="{bottom_h}" '
        'style="fill:none;stroke:#444444;stroke-width:1"/>'
    )
    if report.change_prob.size:
        points = []
        for t, p in enumerate(report.change_prob, start=1):
            xa, xb = px(t + 0.5) - 0.5 * plot_w / n, px(t + 0.5) + 0.5 * plot_w / n
            points.append(f"{xa:.2f},{pc(p):.2f} {xb:.2f},{pc(p):.2f}")
        parts.append(
            f'<polyline class="change-prob" points="{" ".join(points)}" '
            'style="fill:none;stroke:#d62728;stroke-width:1.5"/>'
        )
    parts.append(
        f'<text x="{left - 5}" y="{base + 10}" style="font-family:sans-serif;font-size:10px;'
        'text-anchor:end">1</text>'
    )
    parts.append(
        f'<text x="{left - 5}" y="{base + bottom_h}" style="font-family:sans-serif;font-size:10px;'
        'text-anchor:end">0</text>'
    )
    parts.append(
        f'<text x="{left + plot_w / 2:.0f}" y="{height - 8}" style="font-family:sans-serif;'
        'font-size:11px;text-anchor:middle">t</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: SegmentationReport, x, out_dir, stem: str = "segmentation", title: str = "") -> dict:
    """Write ``<stem>.csv`` and ``<stem>.svg`` into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{stem}.csv", "svg": out / f"{stem}.svg"}
    write_csv(paths["csv"], x, report)
    paths["svg"].write_text(render_svg(x, report, title))
    return paths
