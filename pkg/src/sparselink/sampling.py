"""Batch generation and fanout-limited computational graphs.

A GraphView resolves any node's neighborhood through the hybrid picture a
worker sees during training: owned nodes through the full local subgraph,
nodes owned elsewhere through the owner's sparsified subgraph (or the full
graph under complete sharing, or nothing under no sharing). Negative
destinations are always validated against the full graph's adjacency, so
the negative sample space stays global.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import sparse

if TYPE_CHECKING:
    from .graph import EdgeSplit, Graph
    from .partition import WorkerSubgraph
    from .sparsify import SparsifiedSubgraph

_EMPTY_NODES = np.array([], dtype=np.int64)
_EMPTY_WEIGHTS = np.array([])


class NoOwnedTrainEdges(RuntimeError):
    """Worker owns no training positives; caller should skip it."""


@dataclass
class Batch:
    pairs: np.ndarray
    labels: np.ndarray
    worker_id: int
    batch_index: int


class GraphView:
    """Per-worker resolver from node id to (neighbors, weights, remote?).

    sharing: "none" keeps the worker inside its own subgraph, "complete"
    serves remote nodes from the full graph, "sparsified" serves them from
    the owning partition's sparsified subgraph. With full_neighbor_halo
    off, even owned nodes lose their cross-partition edges.
    """

    def __init__(
        self,
        graph: Graph,
        worker: WorkerSubgraph | None,
        assignment: np.ndarray | None = None,
        sparsed_store: dict[int, SparsifiedSubgraph] | None = None,
        sharing: str = "none",
        full_neighbor_halo: bool = True,
    ):
        if sharing not in ("none", "complete", "sparsified"):
            raise ValueError(f"unknown sharing mode {sharing!r}")
        if sharing == "sparsified" and worker is not None and sparsed_store is None:
            raise ValueError("sparsified sharing needs a sparsed subgraph store")
        self.graph = graph
        self.worker = worker
        self.assignment = assignment
        self.sparsed_store = sparsed_store or {}
        self.sharing = sharing
        self.full_neighbor_halo = full_neighbor_halo
        self.feature_local_mask = np.ones(graph.num_nodes, dtype=bool)
        if worker is not None:
            self.feature_local_mask[:] = False
            self.feature_local_mask[worker.owned_nodes] = True
            if full_neighbor_halo:
                self.feature_local_mask[worker.halo_nodes] = True

    @classmethod
    def full(cls, graph: Graph) -> GraphView:
        """Centralized view: every node resolves through the full graph."""
        return cls(graph, worker=None)

    def feature_local(self, u: int) -> bool:
        return bool(self.feature_local_mask[u])

    def owned_nodes(self) -> np.ndarray:
        if self.worker is None:
            return np.arange(self.graph.num_nodes, dtype=np.int64)
        return self.worker.owned_nodes

    def resolve(self, u: int) -> tuple[np.ndarray, np.ndarray, bool]:
        u = int(u)
        if self.worker is None:
            nbrs = self.graph.neighbors(u)
            return nbrs, np.ones(len(nbrs)), False
        if self.worker.owns(u):
            nbrs = self.graph.neighbors(u)
            if not self.full_neighbor_halo:
                nbrs = nbrs[self.assignment[nbrs] == self.worker.part_id]
            return nbrs, np.ones(len(nbrs)), False
        if self.sharing == "complete":
            nbrs = self.graph.neighbors(u)
            return nbrs, np.ones(len(nbrs)), True
        if self.sharing == "sparsified":
            owner = int(self.assignment[u])
            nbrs, wts = self.sparsed_store[owner].neighbors(u)
            return nbrs, wts, True
        # No sharing: halo rows (edges back into this part) are the only
        # structure available for nodes owned elsewhere.
        if self.full_neighbor_halo and self.worker.is_halo(u):
            return self.worker.neighbors_global(u), np.ones(self.worker.local_degree(u)), False
        return _EMPTY_NODES, _EMPTY_WEIGHTS, False


# ---------------------------------------------------------------------------
# Positive and negative pair sampling
# ---------------------------------------------------------------------------

def worker_train_edges(
    worker: WorkerSubgraph, split: EdgeSplit, require_both: bool = False
) -> np.ndarray:
    """Training edges this worker is responsible for.

    Ownership follows the lower-id endpoint so cross-partition edges,
    present in both workers, are trained exactly once per epoch. With
    require_both (no-halo variants) only fully internal edges qualify.
    """
    tp = split.train_pos
    in_part_u = np.isin(tp[:, 0], worker.owned_nodes)
    if require_both:
        mask = in_part_u & np.isin(tp[:, 1], worker.owned_nodes)
    else:
        # train_pos rows are canonical (u < v), so column 0 is the lower id
        mask = in_part_u
    return tp[mask]


def positive_batch(
    worker: WorkerSubgraph,
    split: EdgeSplit,
    batch_size: int,
    seed: int,
    batch_index: int,
    epoch: int = 0,
    require_both: bool = False,
) -> np.ndarray:
    """One batch worth of positives from this epoch's seeded permutation.

    Half the batch is positives; every owned edge appears exactly once per
    epoch across batch indices.
    """
    owned = worker_train_edges(worker, split, require_both)
    if len(owned) == 0:
        raise NoOwnedTrainEdges(f"worker {worker.part_id} owns no training edges")
    half = batch_size // 2
    rng = np.random.default_rng([seed, epoch, worker.part_id])
    perm = rng.permutation(len(owned))
    sl = perm[batch_index * half : (batch_index + 1) * half]
    return owned[sl]


def negative_per_source(
    sources: np.ndarray,
    view: GraphView,
    g: Graph,
    seed,
    local_only: bool = False,
) -> np.ndarray:
    """One uniform non-neighbor destination per source node.

    Destinations are rejected against the full graph's adjacency, so a
    sampled pair is never a true edge. With local_only the candidate pool
    shrinks to the worker's owned nodes (the degraded baselines).
    """
    rng = np.random.default_rng(seed)
    pool = view.owned_nodes() if local_only else None
    n = g.num_nodes
    out = np.empty((len(sources), 2), dtype=np.int64)
    for i, src in enumerate(sources):
        src = int(src)
        dest = -1
        for _ in range(64):
            cand = int(pool[rng.integers(len(pool))]) if pool is not None else int(rng.integers(n))
            if cand != src and not g.has_edge(src, cand):
                dest = cand
                break
        if dest < 0:
            space = pool if pool is not None else np.arange(n, dtype=np.int64)
            bad = np.isin(space, g.neighbors(src)) | (space == src)
            candidates = space[~bad]
            if len(candidates) == 0:
                raise ValueError(f"node {src} has no candidate negative destination")
            dest = int(candidates[rng.integers(len(candidates))])
        out[i] = (src, dest)
    return out


def negative_global_uniform(g: Graph, count: int, seed) -> np.ndarray:
    """count distinct uniform non-edges (u != v), as used for val/test sets."""
    n = g.num_nodes
    total_pairs = n * (n - 1) // 2
    available = total_pairs - g.num_edges
    if count > available:
        raise ValueError(f"requested {count} negative pairs but only {available} non-edges exist")
    rng = np.random.default_rng(seed)
    if count > available // 2:
        # Dense regime: enumerate every non-edge and sample exactly.
        iu, ju = np.triu_indices(n, k=1)
        mask = np.array([not g.has_edge(int(u), int(v)) for u, v in zip(iu, ju)])
        non_edges = np.column_stack([iu[mask], ju[mask]])
        idx = rng.choice(len(non_edges), size=count, replace=False)
        return non_edges[idx].astype(np.int64)
    seen: set[tuple[int, int]] = set()
    out = np.empty((count, 2), dtype=np.int64)
    filled = 0
    while filled < count:
        u = int(rng.integers(n))
        v = int(rng.integers(n))
        if u == v:
            continue
        pair = (u, v) if u < v else (v, u)
        if pair in seen or g.has_edge(*pair):
            continue
        seen.add(pair)
        out[filled] = pair
        filled += 1
    return out


# ---------------------------------------------------------------------------
# Layered fanout expansion
# ---------------------------------------------------------------------------

@dataclass
class ComputationGraph:
    """Union subgraph from layered fanout sampling.

    layers[k] holds the distinct nodes sampled at hop k (layer 0 is the
    seed set). Each node is expanded at most once, at its first discovery;
    edge_parent/edge_child/edge_weight index into nodes. remote_nodes are
    the nodes whose features are not cached at the worker, the quantity
    the ledger bills per batch.
    """

    nodes: np.ndarray
    node_index: dict[int, int]
    layers: list[np.ndarray]
    edge_parent: np.ndarray
    edge_child: np.ndarray
    edge_weight: np.ndarray
    edge_hop: np.ndarray
    remote_nodes: np.ndarray
    remote_edge_count: int
    fanouts: tuple[int, ...]

    def __post_init__(self) -> None:
        self._operator_cache: dict = {}

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def seed_indices(self, seeds: np.ndarray) -> np.ndarray:
        return np.array([self.node_index[int(s)] for s in seeds], dtype=np.int64)

    def scatter_operators(self, per_edge_values: np.ndarray, key):
        """Sparse parent<-child aggregation matrix and its transpose.

        The values depend only on the graph's sampled weights, so callers
        cache by key across repeated forward/backward passes.
        """
        if key not in self._operator_cache:
            mat = sparse.csr_matrix(
                (per_edge_values, (self.edge_parent, self.edge_child)),
                shape=(self.num_nodes, self.num_nodes),
            )
            self._operator_cache[key] = (mat, mat.T.tocsr())
        return self._operator_cache[key]


def build_computation_graph(
    seeds: np.ndarray,
    view: GraphView,
    fanouts: tuple[int, ...] | list[int],
    seed,
) -> ComputationGraph:
    """Expand seeds hop by hop, sampling at most fanout_k neighbors per node.

    Nodes rediscovered at a later hop are not re-expanded; the forward pass
    runs over the resulting union adjacency, so each node carries one
    sampled neighbor list.
    """
    rng = np.random.default_rng(seed)
    layer0 = np.unique(np.asarray(seeds, dtype=np.int64))
    n_global = view.graph.num_nodes
    index_map = np.full(n_global, -1, dtype=np.int64)
    index_map[layer0] = np.arange(len(layer0))
    node_chunks: list[np.ndarray] = [layer0]
    next_index = len(layer0)
    layers = [layer0]
    expanded = np.zeros(n_global, dtype=bool)
    parents: list[np.ndarray] = []
    children: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    hop_tags: list[np.ndarray] = []
    remote_edge_count = 0

    frontier = layer0
    for hop, fanout in enumerate(fanouts, start=1):
        hop_children: list[np.ndarray] = []
        for u in frontier:
            u = int(u)
            if expanded[u]:
                continue
            expanded[u] = True
            nbrs, wts, remote = view.resolve(u)
            if len(nbrs) > fanout:
                pick = rng.choice(len(nbrs), size=fanout, replace=False)
                nbrs, wts = nbrs[pick], wts[pick]
            if len(nbrs) == 0:
                continue
            if remote:
                remote_edge_count += len(nbrs)
            loc = index_map[nbrs]
            fresh = loc < 0
            if fresh.any():
                new_ids = nbrs[fresh]
                index_map[new_ids] = np.arange(next_index, next_index + len(new_ids))
                node_chunks.append(new_ids)
                next_index += len(new_ids)
                loc = index_map[nbrs]
            parents.append(np.full(len(nbrs), index_map[u], dtype=np.int64))
            children.append(loc)
            weights.append(np.asarray(wts, dtype=np.float64))
            hop_tags.append(np.full(len(nbrs), hop, dtype=np.int64))
            hop_children.append(nbrs)
        frontier = (
            np.unique(np.concatenate(hop_children))
            if hop_children
            else np.array([], dtype=np.int64)
        )
        layers.append(frontier)

    nodes_arr = np.concatenate(node_chunks)
    node_index = {int(u): i for i, u in enumerate(nodes_arr)}
    remote = nodes_arr[~view.feature_local_mask[nodes_arr]]
    return ComputationGraph(
        nodes=nodes_arr,
        node_index=node_index,
        layers=layers,
        edge_parent=(
            np.concatenate(parents) if parents else np.array([], dtype=np.int64)
        ),
        edge_child=(
            np.concatenate(children) if children else np.array([], dtype=np.int64)
        ),
        edge_weight=np.concatenate(weights) if weights else np.array([]),
        edge_hop=(
            np.concatenate(hop_tags) if hop_tags else np.array([], dtype=np.int64)
        ),
        remote_nodes=remote,
        remote_edge_count=remote_edge_count,
        fanouts=tuple(fanouts),
    )


def dump_batch(batch: Batch, path: str) -> None:
    with open(path, "w") as f:
        f.write("u,v,label,worker,batch\n")
        for (u, v), y in zip(batch.pairs, batch.labels):
            f.write(f"{u},{v},{int(y)},{batch.worker_id},{batch.batch_index}\n")


__all__ = [
    "Batch",
    "GraphView",
    "ComputationGraph",
    "NoOwnedTrainEdges",
    "worker_train_edges",
    "positive_batch",
    "negative_per_source",
    "negative_global_uniform",
    "build_computation_graph",
    "dump_batch",
]
