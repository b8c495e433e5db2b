"""Link-prediction evaluation: Hits@K against fixed negative sets.

Evaluation always runs over the full graph with fanout sampling and a
fixed seed, independent of whatever data-sharing strategy trained the
model, so all variants are compared on one protocol.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import EdgeSplit, Graph
from .model import ModelParams, edge_score, node_embeddings
from .sampling import GraphView, build_computation_graph

EVAL_CHUNK_PAIRS = 512


@dataclass
class EvalReport:
    ks: list[int]
    hits: dict[int, float]
    pos_mean: float
    neg_mean: float
    epoch: int = -1
    variant: str = ""
    split_name: str = "test"

    def hits_at(self, k: int) -> float:
        return self.hits[k]


def hits_at_k(pos_scores: np.ndarray, neg_scores: np.ndarray, k: int) -> float:
    """Fraction of positives scoring strictly above the k-th best negative."""
    pos_scores = np.asarray(pos_scores, dtype=np.float64)
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(neg_scores) < k:
        raise ValueError(f"need at least {k} negative scores, got {len(neg_scores)}")
    threshold = np.sort(neg_scores)[-k]
    return float(np.mean(pos_scores > threshold))


def default_k(num_negatives: int, cap: int = 100) -> int:
    """Desk-scale K: min(cap, a third of the negative pool), at least 1."""
    return max(1, min(cap, num_negatives // 3))


def score_pairs(
    params: ModelParams,
    g: Graph,
    pairs: np.ndarray,
    fanouts,
    seed: int,
) -> np.ndarray:
    """Edge logits for node pairs using full-graph fanout sampling."""
    view = GraphView.full(g)
    scores = np.empty(len(pairs))
    for start in range(0, len(pairs), EVAL_CHUNK_PAIRS):
        chunk = pairs[start : start + EVAL_CHUNK_PAIRS]
        cg = build_computation_graph(
            np.unique(chunk), view, fanouts, seed=[seed, start]
        )
        h = node_embeddings(cg, g.features, params)
        ui = cg.seed_indices(chunk[:, 0])
        vi = cg.seed_indices(chunk[:, 1])
        scores[start : start + len(chunk)] = edge_score(params, h[ui], h[vi])
    return scores


def evaluate_model(
    params: ModelParams,
    split: EdgeSplit,
    g: Graph,
    fanouts,
    k: int | None = None,
    seed: int = 0,
    which: str = "test",
    variant: str = "",
    epoch: int = -1,
) -> EvalReport:
    """Score a split's positives and fixed negatives; report Hits@K."""
    if which == "test":
        pos, neg = split.test_pos, split.test_neg
    elif which == "val":
        pos, neg = split.val_pos, split.val_neg
    else:
        raise ValueError(f"unknown split {which!r}")
    ks = [default_k(len(neg))] if k is None else [int(k)]
    if max(ks) > len(neg):
        raise ValueError(f"k={max(ks)} exceeds the {len(neg)} available negatives")
    pos_scores = score_pairs(params, g, pos, fanouts, seed)
    neg_scores = score_pairs(params, g, neg, fanouts, seed + 1)
    hits = {kk: hits_at_k(pos_scores, neg_scores, kk) for kk in ks}
    return EvalReport(
        ks=ks,
        hits=hits,
        pos_mean=float(pos_scores.mean()),
        neg_mean=float(neg_scores.mean()),
        epoch=epoch,
        variant=variant,
        split_name=which,
    )


__all__ = [
    "EvalReport",
    "hits_at_k",
    "default_k",
    "score_pairs",
    "evaluate_model",
]
