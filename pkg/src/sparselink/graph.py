"""Undirected feature-attributed graphs in symmetric CSR form.

The CSR arrays store both directions of every undirected edge with sorted
neighbor lists, which keeps edge membership tests O(log d) and makes
symmetry checkable by construction. Laplacian utilities at the bottom are
the oracles used to verify the sparsifier.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

# Features travel over the simulated wire as 4-byte floats; the ledger
# bills with the same constant.
FEATURE_BYTE_WIDTH = 4


class GraphFormatError(ValueError):
    """Edge/feature files that cannot be assembled into a valid graph."""


class DisconnectedGraphError(ValueError):
    """Operation defined only on connected graphs."""


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with dense node features.

    csr_offsets has length num_nodes+1; the neighbors of u are
    csr_targets[csr_offsets[u]:csr_offsets[u+1]], sorted ascending.
    edge_weights is aligned with csr_targets (1.0 for unweighted input).
    """

    num_nodes: int
    csr_offsets: np.ndarray
    csr_targets: np.ndarray
    edge_weights: np.ndarray
    features: np.ndarray

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.csr_targets) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    def neighbors(self, u: int) -> np.ndarray:
        return self.csr_targets[self.csr_offsets[u] : self.csr_offsets[u + 1]]

    def neighbor_weights(self, u: int) -> np.ndarray:
        return self.edge_weights[self.csr_offsets[u] : self.csr_offsets[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < len(row) and row[i] == v)

    def undirected_edges(self) -> np.ndarray:
        """All undirected edges as an (m, 2) array with u < v."""
        src = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)
        mask = src < self.csr_targets
        return np.column_stack([src[mask], self.csr_targets[mask]])

    def undirected_edge_weights(self) -> np.ndarray:
        src = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)
        return self.edge_weights[src < self.csr_targets]

    def is_connected(self) -> bool:
        if self.num_nodes == 0:
            return False
        return len(_component_of(self, 0)) == self.num_nodes


def from_edge_array(edges: np.ndarray, features: np.ndarray, weights: np.ndarray | None = None) -> Graph:
    """Build a Graph from an (k, 2) edge array, symmetrizing and cleaning.

    Self-loops are dropped and duplicate edges merged (first weight wins).
    """
    features = np.ascontiguousarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise GraphFormatError("feature matrix must be 2-dimensional")
    num_nodes = features.shape[0]
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) == 0:
        raise GraphFormatError("graph has no edges")
    if edges.min() < 0 or edges.max() >= num_nodes:
        raise GraphFormatError(
            f"edge endpoint out of range: ids must lie in [0, {num_nodes}) "
            f"but found [{edges.min()}, {edges.max()}]"
        )
    if weights is None:
        weights = np.ones(len(edges))
    weights = np.asarray(weights, dtype=np.float64)

    keep = edges[:, 0] != edges[:, 1]
    edges, weights = edges[keep], weights[keep]
    if len(edges) == 0:
        raise GraphFormatError("graph has no edges after dropping self-loops")
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    canon = np.column_stack([lo, hi])
    canon, first = np.unique(canon, axis=0, return_index=True)
    weights = weights[first]

    src = np.concatenate([canon[:, 0], canon[:, 1]])
    dst = np.concatenate([canon[:, 1], canon[:, 0]])
    w = np.concatenate([weights, weights])
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    offsets = np.cumsum(offsets)
    return Graph(num_nodes, offsets, dst, w, features)


def _component_of(g: Graph, start: int) -> np.ndarray:
    seen = np.zeros(g.num_nodes, dtype=bool)
    seen[start] = True
    frontier = np.array([start], dtype=np.int64)
    while len(frontier):
        nxt = np.unique(np.concatenate([g.neighbors(int(u)) for u in frontier]))
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    return np.flatnonzero(seen)


# ---------------------------------------------------------------------------
# File I/O: edge list is "u v" per line, features are one CSV row per node.
# ---------------------------------------------------------------------------

def load_graph(edge_file_path: str, feature_file_path: str) -> Graph:
    """Load a graph from an edge-list file and a feature CSV.

    Node count is taken from the feature file; every edge endpoint must
    reference one of its rows.
    """
    features = np.loadtxt(feature_file_path, delimiter=",", dtype=np.float32, ndmin=2)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            edges = np.loadtxt(edge_file_path, dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise GraphFormatError(f"cannot parse edge file {edge_file_path}: {exc}") from exc
    if edges.size == 0:
        raise GraphFormatError(f"edge file {edge_file_path} is empty")
    if edges.shape[1] != 2:
        raise GraphFormatError("edge file must have two columns per line")
    if edges.max() >= features.shape[0]:
        raise GraphFormatError(
            f"edge file references node {edges.max()} but feature file has "
            f"only {features.shape[0]} rows"
        )
    return from_edge_array(edges, features)


def write_graph(g: Graph, edge_file_path: str, feature_file_path: str) -> None:
    """Inverse of load_graph; the round trip reproduces the graph exactly."""
    np.savetxt(edge_file_path, g.undirected_edges(), fmt="%d")
    # %.9g preserves float32 values exactly through the text round trip.
    np.savetxt(feature_file_path, g.features, fmt="%.9g", delimiter=",")


# ---------------------------------------------------------------------------
# Synthetic generators (test fixtures). All return the largest connected
# component with features i.i.d. uniform in [-1, 1].
# ---------------------------------------------------------------------------

def generate_synthetic(kind: str, params: dict, feature_dim: int, seed: int) -> Graph:
    rng = np.random.default_rng(seed)
    if kind == "erdos_renyi":
        edges = _er_edges(int(params["n"]), float(params["p"]), rng)
        n = int(params["n"])
    elif kind == "barabasi_albert":
        edges = _ba_edges(int(params["n"]), int(params["m"]), rng)
        n = int(params["n"])
    elif kind == "sbm":
        sizes = [int(s) for s in params["block_sizes"]]
        edges = _sbm_edges(sizes, float(params["p_in"]), float(params["p_out"]), rng)
        n = sum(sizes)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")

    if len(edges) == 0:
        raise ValueError(f"degenerate parameters for {kind}: no edges generated")
    keep = _largest_component(n, edges)
    if len(keep) < 2:
        raise ValueError(f"degenerate parameters for {kind}: largest component has <2 nodes")
    relabel = np.full(n, -1, dtype=np.int64)
    relabel[keep] = np.arange(len(keep))
    mask = (relabel[edges[:, 0]] >= 0) & (relabel[edges[:, 1]] >= 0)
    edges = relabel[edges[mask]]
    features = rng.uniform(-1.0, 1.0, size=(len(keep), feature_dim)).astype(np.float32)
    return from_edge_array(edges, features)


def _er_edges(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    if n < 2 or not 0 < p <= 1:
        raise ValueError("erdos_renyi needs n >= 2 and p in (0, 1]")
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(len(iu)) < p
    return np.column_stack([iu[mask], ju[mask]]).astype(np.int64)


def _ba_edges(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    if n < m + 1 or m < 1:
        raise ValueError("barabasi_albert needs n >= m+1 and m >= 1")
    edges = []
    # Seed clique on m+1 nodes, then preferential attachment via the
    # repeated-endpoints list.
    targets_pool = []
    for i in range(m + 1):
        for j in range(i + 1, m + 1):
            edges.append((i, j))
            targets_pool.extend([i, j])
    for v in range(m + 1, n):
        chosen: set[int] = set()
        while len(chosen) < m:
            chosen.add(int(targets_pool[rng.integers(len(targets_pool))]))
        for u in chosen:
            edges.append((u, v))
            targets_pool.extend([u, v])
    return np.array(edges, dtype=np.int64)


def _sbm_edges(sizes: list[int], p_in: float, p_out: float, rng: np.random.Generator) -> np.ndarray:
    if any(s < 1 for s in sizes) or len(sizes) < 1:
        raise ValueError("sbm needs nonempty blocks")
    starts = np.concatenate([[0], np.cumsum(sizes)])
    n = int(starts[-1])
    block = np.zeros(n, dtype=np.int64)
    for b, (s, e) in enumerate(zip(starts[:-1], starts[1:])):
        block[s:e] = b
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(block[iu] == block[ju], p_in, p_out)
    mask = rng.random(len(iu)) < prob
    return np.column_stack([iu[mask], ju[mask]]).astype(np.int64)


def _largest_component(n: int, edges: np.ndarray) -> np.ndarray:
    parent = np.arange(n, dtype=np.int64)

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for u, v in edges:
        ru, rv = find(int(u)), find(int(v))
        if ru != rv:
            parent[rv] = ru
    roots = np.array([find(int(x)) for x in range(n)])
    counts = np.bincount(roots, minlength=n)
    return np.flatnonzero(roots == counts.argmax())


# ---------------------------------------------------------------------------
# Train/val/test edge splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeSplit:
    """Disjoint positive edge splits plus fixed negative pair sets.

    Negative sets are sampled once at split time; val/test negatives are
    three positives' worth each by default.
    """

    train_pos: np.ndarray
    val_pos: np.ndarray
    test_pos: np.ndarray
    val_neg: np.ndarray
    test_neg: np.ndarray


def split_edges(
    g: Graph,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    neg_multiplier: int = 3,
    seed: int = 0,
) -> EdgeSplit:
    """Randomly split undirected edges into train/val/test positives.

    Val/test sizes are floor(ratio * num_edges); the remainder goes to
    train. Deterministic under seed.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three nonnegative values summing to 1, got {ratios}")
    m = g.num_edges
    if m < 10:
        raise ValueError(f"graph has {m} edges; need at least 10 to split")
    n_val = int(np.floor(ratios[1] * m))
    n_test = int(np.floor(ratios[2] * m))
    n_train = m - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"split sizes ({n_train}, {n_val}, {n_test}) leave an empty split")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(m)
    edges = g.undirected_edges()[perm]
    val_pos = edges[:n_val]
    test_pos = edges[n_val : n_val + n_test]
    train_pos = edges[n_val + n_test :]

    from .sampling import negative_global_uniform

    val_neg = negative_global_uniform(g, neg_multiplier * n_val, int(rng.integers(2**63)))
    test_neg = negative_global_uniform(g, neg_multiplier * n_test, int(rng.integers(2**63)))
    return EdgeSplit(train_pos, val_pos, test_pos, val_neg, test_neg)


# ---------------------------------------------------------------------------
# Laplacian utilities (sparsifier oracles)
# ---------------------------------------------------------------------------

def laplacian_quadratic_form(g: Graph, x: np.ndarray) -> float:
    """x^T L x computed edge-wise as sum_{(u,v)} w_uv (x_u - x_v)^2.

    Never materializes the dense Laplacian.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.num_nodes,):
        raise ValueError(f"vector has shape {x.shape}, expected ({g.num_nodes},)")
    src = np.repeat(np.arange(g.num_nodes, dtype=np.int64), g.degrees)
    diff = x[src] - x[g.csr_targets]
    # Each undirected edge contributes twice in the directed arrays.
    return float(0.5 * np.sum(g.edge_weights * diff * diff))


def dense_laplacian(g: Graph) -> np.ndarray:
    """Dense L = D - A; test oracle only."""
    adj = np.zeros((g.num_nodes, g.num_nodes))
    src = np.repeat(np.arange(g.num_nodes, dtype=np.int64), g.degrees)
    adj[src, g.csr_targets] = g.edge_weights
    return np.diag(adj.sum(axis=1)) - adj


def normalized_laplacian_gamma(g: Graph) -> float:
    """Second smallest eigenvalue of D^{-1/2} L D^{-1/2}.

    Dense eigensolve; intended for graphs of at most a couple thousand
    nodes as a verification oracle.
    """
    if g.num_nodes > 2000:
        raise ValueError("dense eigensolve limited to 2000 nodes")
    if not g.is_connected():
        raise DisconnectedGraphError("gamma is 0 for disconnected graphs; refusing to mask that")
    lap = dense_laplacian(g)
    d = np.diag(lap).copy()
    inv_sqrt = 1.0 / np.sqrt(d)
    lap_sym = lap * inv_sqrt[:, None] * inv_sqrt[None, :]
    eigenvalues = np.linalg.eigvalsh(lap_sym)
    return float(eigenvalues[1])


def relabeled(g: Graph, perm: np.ndarray) -> Graph:
    """Graph with node u renamed to perm[u]; test helper for equivariance."""
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    edges = perm[g.undirected_edges()]
    feats = g.features[inv]
    return from_edge_array(edges, feats, g.undirected_edge_weights())


__all__ = [
    "FEATURE_BYTE_WIDTH",
    "Graph",
    "EdgeSplit",
    "GraphFormatError",
    "DisconnectedGraphError",
    "from_edge_array",
    "load_graph",
    "write_graph",
    "generate_synthetic",
    "split_edges",
    "laplacian_quadratic_form",
    "dense_laplacian",
    "normalized_laplacian_gamma",
    "relabeled",
]
