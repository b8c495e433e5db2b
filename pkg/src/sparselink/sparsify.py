"""Effective-resistance importance sampling of partition subgraphs.

The production path scores each edge (u, v) with the degree proxy
1/d_u + 1/d_v, samples edges with replacement proportionally, and
accumulates weights 1/(L * p_e) per draw. The exact pseudo-inverse
resistance and the normalized-Laplacian eigenvalue bound live here too,
as verification oracles only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .graph import (
    DisconnectedGraphError,
    Graph,
    dense_laplacian,
    normalized_laplacian_gamma,
)

if TYPE_CHECKING:
    from .partition import WorkerSubgraph


@dataclass
class SparsifiedSubgraph:
    """Weighted edge subset of one partition subgraph; node set unchanged."""

    part_id: int
    nodes: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    source_edge_count: int
    samples_drawn: int
    _adjacency: dict[int, tuple[np.ndarray, np.ndarray]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        nbrs: dict[int, list[tuple[int, float]]] = {}
        for (u, v), w in zip(self.edges, self.weights):
            nbrs.setdefault(int(u), []).append((int(v), float(w)))
            nbrs.setdefault(int(v), []).append((int(u), float(w)))
        self._adjacency = {
            u: (
                np.array([x for x, _ in lst], dtype=np.int64),
                np.array([w for _, w in lst]),
            )
            for u, lst in nbrs.items()
        }

    @property
    def num_retained(self) -> int:
        return len(self.edges)

    @property
    def retention_ratio(self) -> float:
        return self.num_retained / self.source_edge_count

    def neighbors(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        empty = (np.array([], dtype=np.int64), np.array([]))
        return self._adjacency.get(int(u), empty)


def approx_resistance(d_u: int, d_v: int) -> float:
    """Degree-only importance score 1/d_u + 1/d_v."""
    if d_u < 1 or d_v < 1:
        raise ValueError(f"degrees must be positive, got ({d_u}, {d_v})")
    return 1.0 / d_u + 1.0 / d_v


def edge_sampling_probabilities(edges: np.ndarray, degree_of: np.ndarray) -> np.ndarray:
    """Normalized degree-proxy probabilities over an undirected edge set."""
    scores = 1.0 / degree_of[edges[:, 0]] + 1.0 / degree_of[edges[:, 1]]
    return scores / scores.sum()


def sample_with_replacement(
    probs: np.ndarray, num_draws: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-edge draw counts from num_draws categorical samples."""
    draws = rng.choice(len(probs), size=num_draws, p=probs)
    return np.bincount(draws, minlength=len(probs))


def sparsify_subgraph(
    sub: WorkerSubgraph,
    alpha: float,
    seed,
    degree_scope: str = "local",
) -> SparsifiedSubgraph:
    """Sample L = max(1, round(alpha * |E|)) edges with replacement.

    Each draw of edge e adds 1/(L * p_e) to its weight, so repeated draws
    accumulate. Degrees default to subgraph-local ones; degree_scope
    "global" uses full-graph degrees instead.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if degree_scope not in ("local", "global"):
        raise ValueError(f"unknown degree_scope {degree_scope!r}")
    edges = sub.undirected_edges_global()
    m = len(edges)
    if m == 0:
        raise ValueError(f"partition {sub.part_id} has no edges to sparsify")

    n_local = len(sub.local_nodes)
    degree_of = np.zeros(int(sub.local_nodes.max()) + 1, dtype=np.float64)
    if degree_scope == "local":
        degree_of[sub.local_nodes] = np.diff(sub.local_offsets)
    else:
        degree_of[sub.local_nodes] = sub.full_degrees
    probs = edge_sampling_probabilities(edges, degree_of)

    num_draws = max(1, int(round(alpha * m)))
    rng = np.random.default_rng(seed)
    counts = sample_with_replacement(probs, num_draws, rng)
    kept = counts > 0
    weights = counts[kept] / (num_draws * probs[kept])
    return SparsifiedSubgraph(
        part_id=sub.part_id,
        nodes=sub.local_nodes.copy(),
        edges=edges[kept],
        weights=weights,
        source_edge_count=m,
        samples_drawn=num_draws,
    )


def save_sparsified(sp: SparsifiedSubgraph, path: str) -> None:
    with open(path, "w") as f:
        f.write("u,v,weight\n")
        for (u, v), w in zip(sp.edges, sp.weights):
            f.write(f"{u},{v},{float(w)!r}\n")


def summary_line(sp: SparsifiedSubgraph) -> str:
    return (
        f"part {sp.part_id}: edges={sp.source_edge_count} draws={sp.samples_drawn} "
        f"retained={sp.num_retained} retention={sp.retention_ratio:.4f}"
    )


# ---------------------------------------------------------------------------
# Exact-resistance and spectral oracles (verification only)
# ---------------------------------------------------------------------------

def laplacian_pseudoinverse(g: Graph) -> np.ndarray:
    if g.num_nodes > 500:
        raise ValueError("dense pseudo-inverse limited to 500 nodes")
    if not g.is_connected():
        raise DisconnectedGraphError("effective resistance requires a connected graph")
    return np.linalg.pinv(dense_laplacian(g))


def exact_effective_resistance(g: Graph, u: int, v: int, pinv: np.ndarray | None = None) -> float:
    """(e_u - e_v)^T L^+ (e_u - e_v) via the dense pseudo-inverse."""
    if pinv is None:
        pinv = laplacian_pseudoinverse(g)
    return float(pinv[u, u] + pinv[v, v] - 2.0 * pinv[u, v])


def exact_resistance_probabilities(g: Graph) -> np.ndarray:
    """Sampling distribution proportional to exact effective resistances."""
    pinv = laplacian_pseudoinverse(g)
    edges = g.undirected_edges()
    r = pinv[edges[:, 0], edges[:, 0]] + pinv[edges[:, 1], edges[:, 1]] - 2.0 * pinv[edges[:, 0], edges[:, 1]]
    return r / r.sum()


def resistance_bounds_hold(g: Graph, tol: float = 1e-9) -> bool:
    """Check 0.5*(1/d_u+1/d_v) <= r_uv <= (1/gamma)*(1/d_u+1/d_v) on every edge."""
    gamma = normalized_laplacian_gamma(g)
    pinv = laplacian_pseudoinverse(g)
    deg = g.degrees
    for u, v in g.undirected_edges():
        proxy = approx_resistance(int(deg[u]), int(deg[v]))
        r = exact_effective_resistance(g, int(u), int(v), pinv)
        if r < 0.5 * proxy - tol or r > proxy / gamma + tol:
            return False
    return True


def exact_resistance_sparsify(
    g: Graph, num_draws: int, seed
) -> tuple[np.ndarray, np.ndarray]:
    """Sparsify with exact-resistance probabilities; oracle path.

    Returns (edges, weights) of the sampled spectral approximation.
    """
    probs = exact_resistance_probabilities(g)
    rng = np.random.default_rng(seed)
    counts = sample_with_replacement(probs, num_draws, rng)
    kept = counts > 0
    edges = g.undirected_edges()[kept]
    weights = counts[kept] / (num_draws * probs[kept])
    return edges, weights


def quadratic_form_edges(edges: np.ndarray, weights: np.ndarray, x: np.ndarray) -> float:
    """x^T L x for a weighted undirected edge list."""
    diff = x[edges[:, 0]] - x[edges[:, 1]]
    return float(np.sum(weights * diff * diff))


def dense_laplacian_edges(edges: np.ndarray, weights: np.ndarray, index_of: dict[int, int], n: int) -> np.ndarray:
    lap = np.zeros((n, n))
    for (u, v), w in zip(edges, weights):
        i, j = index_of[int(u)], index_of[int(v)]
        lap[i, i] += w
        lap[j, j] += w
        lap[i, j] -= w
        lap[j, i] -= w
    return lap


def expected_laplacian_error(sub: WorkerSubgraph, alpha: float, trials: int, seed: int) -> float:
    """Relative Frobenius gap between the trial-averaged sparsified
    Laplacian and the subgraph Laplacian.

    E[w_e over draws] reproduces L exactly, so this estimates pure Monte
    Carlo error and should shrink with trials.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials for a meaningful average")
    n_local = len(sub.local_nodes)
    if n_local > 200:
        raise ValueError("dense trial averaging limited to 200 nodes")
    index_of = {int(u): i for i, u in enumerate(sub.local_nodes)}
    edges = sub.undirected_edges_global()
    base = dense_laplacian_edges(edges, np.ones(len(edges)), index_of, n_local)
    acc = np.zeros_like(base)
    for t in range(trials):
        sp = sparsify_subgraph(sub, alpha, seed=[seed, t])
        acc += dense_laplacian_edges(sp.edges, sp.weights, index_of, n_local)
    acc /= trials
    return float(np.linalg.norm(acc - base) / np.linalg.norm(base))


__all__ = [
    "SparsifiedSubgraph",
    "approx_resistance",
    "edge_sampling_probabilities",
    "sample_with_replacement",
    "sparsify_subgraph",
    "save_sparsified",
    "summary_line",
    "laplacian_pseudoinverse",
    "exact_effective_resistance",
    "exact_resistance_probabilities",
    "resistance_bounds_hold",
    "exact_resistance_sparsify",
    "quadratic_form_edges",
    "dense_laplacian_edges",
    "expected_laplacian_error",
]
