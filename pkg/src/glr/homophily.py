"""Label and feature homophily, per node and per graph.

Node ``u`` with degree ``d_u`` gets

    label homophily    (1/d_u) * #{v in N(u) : y_v == y_u}
    feature homophily  (1/d_u) * sum_{v in N(u)} cos(X_u, X_v)

with the cosine against a zero vector taken as 0.  Isolated nodes have no
defined value (NaN in the per-node vectors) and are left out of the graph
averages; their number is reported as ``excluded_isolated``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .graph_core import SparseGraph, row_normalize


@dataclass(frozen=True, eq=False)
class HomophilyProfile:
    per_node_label: np.ndarray
    per_node_feature: np.ndarray
    graph_label: float
    graph_feature: float
    excluded_isolated: int

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.per_node_label)


def _edge_rows(g: SparseGraph) -> np.ndarray:
    return np.repeat(np.arange(g.n), g.degrees())


def _per_node_mean(g: SparseGraph, edge_values: np.ndarray) -> np.ndarray:
    deg = g.degrees()
    sums = np.bincount(_edge_rows(g), weights=edge_values, minlength=g.n)
    out = np.full(g.n, np.nan)
    np.divide(sums, deg, out=out, where=deg > 0)
    return out


def _graph_mean(per_node: np.ndarray) -> float:
    vals = per_node[~np.isnan(per_node)]
    return float(np.mean(vals)) if len(vals) else float("nan")


def label_homophily(g: SparseGraph) -> tuple[np.ndarray, float]:
    rows = _edge_rows(g)
    same = (g.labels[rows] == g.labels[g.adjacency.col_idx]).astype(np.float64)
    per_node = _per_node_mean(g, same)
    return per_node, _graph_mean(per_node)


def edge_cosines(g: SparseGraph) -> np.ndarray:
    """Cosine similarity of the endpoint features of every stored adjacency entry."""
    xn = row_normalize(g.features, "l2").to_scipy()
    rows = _edge_rows(g)
    cols = g.adjacency.col_idx
    out = np.empty(len(rows))
    # row-wise dot products of Xn[rows] and Xn[cols], in blocks to bound memory
    block = 1 << 16
    for lo in range(0, len(rows), block):
        a = xn[rows[lo : lo + block]]
        b = xn[cols[lo : lo + block]]
        out[lo : lo + block] = np.asarray(a.multiply(b).sum(axis=1)).ravel()
    return out


def feature_homophily(g: SparseGraph) -> tuple[np.ndarray, float]:
    per_node = _per_node_mean(g, edge_cosines(g))
    return per_node, _graph_mean(per_node)


def homophily_profile(g: SparseGraph) -> HomophilyProfile:
    lab, glab = label_homophily(g)
    feat, gfeat = feature_homophily(g)
    return HomophilyProfile(lab, feat, glab, gfeat, int(np.sum(g.degrees() == 0)))


def average_rank_over_high_feature_homophily(
    ranks: Mapping[str, Mapping[str, float]],
    feature_homophily_by_dataset: Mapping[str, float],
) -> tuple[dict[str, float], list[str], float]:
    """Average model rank over datasets whose feature homophily is at least the median.

    ``ranks`` maps dataset -> model -> rank on that dataset (timed-out or
    failed models already carrying the worst rank).  Returns
    ``(average rank per model, qualifying datasets, median threshold)``.
    """
    datasets = [d for d in ranks if d in feature_homophily_by_dataset]
    if not datasets:
        raise ValueError("no dataset has both a ranking and a homophily profile")
    threshold = float(np.median([feature_homophily_by_dataset[d] for d in datasets]))
    qualifying = sorted(d for d in datasets if feature_homophily_by_dataset[d] >= threshold)
    if not qualifying:
        raise ValueError("no qualifying datasets")
    models = sorted({m for d in qualifying for m in ranks[d]})
    avg = {}
    for m in models:
        missing = [d for d in qualifying if m not in ranks[d]]
        if missing:
            raise ValueError(f"model {m} has no rank on {missing}")
        avg[m] = float(np.mean([ranks[d][m] for d in qualifying]))
    return avg, qualifying, threshold


def high_feature_homophily_ranking(records, profiles: Mapping[str, HomophilyProfile]):
    """Average rank of each model over the datasets with ``H_f(G) >= median``.

    ``records`` are benchmark run records; per-dataset ranks come from the
    benchmark summary so timed-out models keep the worst rank.
    """
    from .evaluation import summarize

    summary = summarize(records)
    hf = {d: p.graph_feature for d, p in profiles.items()}
    if len([d for d in summary.datasets if d in hf]) < 2:
        raise ValueError("need at least two datasets with records and homophily profiles")
    return average_rank_over_high_feature_homophily(summary.ranks, hf)


def distribution_rows(g: SparseGraph, profile: HomophilyProfile) -> list[tuple]:
    """``(node, label_homophily, feature_homophily, degree)`` rows for CSV export."""
    deg = g.degrees()
    return [
        (u, profile.per_node_label[u], profile.per_node_feature[u], int(deg[u]))
        for u in range(g.n)
    ]


def ranked_models(avg: Mapping[str, float]) -> Sequence[tuple[str, float]]:
    return sorted(avg.items(), key=lambda kv: (kv[1], kv[0]))
