"""Node partitioning strategies and per-worker subgraph construction.

Three assignment strategies: a streaming greedy cut minimizer, fully
random assignment, and random assignment of greedily-built mini-clusters.
Worker subgraphs keep the complete neighbor list of every owned node and
cache the features of 1-hop halo nodes locally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import Graph

BALANCE_SLACK = 0.05


@dataclass(frozen=True)
class PartitionPlan:
    num_parts: int
    assignment: np.ndarray
    strategy: str

    def part_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_parts)

    def nodes_of(self, part: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == part)


def balance_capacity(num_nodes: int, num_parts: int, slack: float = BALANCE_SLACK) -> int:
    """Per-part node cap: the slack bound, but never below a feasible even split."""
    return max(math.ceil(num_nodes / num_parts), int((1 + slack) * num_nodes / num_parts))


def trivial_plan(g: Graph, strategy: str = "single") -> PartitionPlan:
    return PartitionPlan(1, np.zeros(g.num_nodes, dtype=np.int64), strategy)


def partition_greedy(g: Graph, p: int, seed: int) -> PartitionPlan:
    """Streaming linear-deterministic-greedy assignment.

    Nodes arrive in a seeded random order; each goes to the eligible part
    maximizing (assigned neighbors there) * (1 - size/capacity). Ties fall
    to the least-loaded part, then the smallest part id, so that nodes with
    no placed neighbors spread out instead of piling into part 0.
    """
    n = g.num_nodes
    if p < 2:
        raise ValueError("greedy partitioning needs p >= 2")
    if p > n:
        raise ValueError(f"cannot split {n} nodes into {p} parts")
    cap = balance_capacity(n, p)
    rng = np.random.default_rng(seed)
    assignment = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(p, dtype=np.int64)
    part_ids = np.arange(p)
    for u in rng.permutation(n):
        nbr_parts = assignment[g.neighbors(int(u))]
        counts = np.bincount(nbr_parts[nbr_parts >= 0], minlength=p)
        score = counts * (1.0 - sizes / cap)
        eligible = sizes < cap
        score[~eligible] = -np.inf
        best = max(
            part_ids[eligible],
            key=lambda j: (score[j], -sizes[j], -j),
        )
        assignment[u] = best
        sizes[best] += 1
    return PartitionPlan(p, assignment, "greedy_cut")


def _rebalance_units(
    assignment: np.ndarray,
    unit_nodes: list[np.ndarray],
    unit_part: np.ndarray,
    p: int,
    cap: int,
) -> np.ndarray:
    """Move whole units out of over-capacity parts until balance holds.

    Units are moved smallest-first (ties: largest unit id, so singleton
    units move in descending node order) to the currently least-loaded
    part. Minimal for singleton units; best-effort for larger ones.
    """
    unit_sizes = np.array([len(nodes) for nodes in unit_nodes], dtype=np.int64)
    sizes = np.zeros(p, dtype=np.int64)
    for uid, part in enumerate(unit_part):
        sizes[part] += unit_sizes[uid]
    for _ in range(10 * len(unit_nodes) + 10):
        over = np.flatnonzero(sizes > cap)
        if len(over) == 0:
            break
        src = int(over[0])
        members = [uid for uid in range(len(unit_nodes)) if unit_part[uid] == src]
        mover = min(members, key=lambda uid: (unit_sizes[uid], -uid))
        dest = int(np.argmin(sizes))
        if dest == src:
            break
        unit_part[mover] = dest
        sizes[src] -= unit_sizes[mover]
        sizes[dest] += unit_sizes[mover]
    out = assignment.copy()
    for uid, nodes in enumerate(unit_nodes):
        out[nodes] = unit_part[uid]
    return out


def partition_random_tma(g: Graph, p: int, seed: int) -> PartitionPlan:
    """Assign each node independently and uniformly, then rebalance."""
    n = g.num_nodes
    if p < 1:
        raise ValueError("need p >= 1")
    if p > n:
        raise ValueError(f"cannot split {n} nodes into {p} parts")
    rng = np.random.default_rng(seed)
    assignment = rng.integers(0, p, size=n).astype(np.int64)
    cap = balance_capacity(n, p)
    units = [np.array([u], dtype=np.int64) for u in range(n)]
    assignment = _rebalance_units(assignment, units, assignment.copy(), p, cap)
    return PartitionPlan(p, assignment, "random_tma")


def partition_super_tma(g: Graph, p: int, num_miniclusters: int, seed: int) -> PartitionPlan:
    """Greedy mini-clustering followed by random cluster-to-part assignment."""
    n = g.num_nodes
    if num_miniclusters < p:
        raise ValueError("need num_miniclusters >= p")
    if num_miniclusters > n:
        raise ValueError(f"cannot build {num_miniclusters} mini-clusters from {n} nodes")
    rng = np.random.default_rng(seed)
    if num_miniclusters == n:
        cluster_of = np.arange(n, dtype=np.int64)
    else:
        cluster_of = partition_greedy(g, num_miniclusters, int(rng.integers(2**63))).assignment
    cluster_part = rng.integers(0, p, size=num_miniclusters).astype(np.int64)
    assignment = cluster_part[cluster_of]
    units = [np.flatnonzero(cluster_of == c) for c in range(num_miniclusters)]
    cap = balance_capacity(n, p)
    assignment = _rebalance_units(assignment, units, cluster_part, p, cap)
    return PartitionPlan(p, assignment, "super_tma")


def edge_cut(g: Graph, plan: PartitionPlan) -> int:
    edges = g.undirected_edges()
    return int(np.sum(plan.assignment[edges[:, 0]] != plan.assignment[edges[:, 1]]))


def save_plan(plan: PartitionPlan, path: str) -> None:
    with open(path, "w") as f:
        f.write("node_id,part_id\n")
        for u, part in enumerate(plan.assignment):
            f.write(f"{u},{part}\n")


def load_plan(path: str) -> PartitionPlan:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    assignment = np.full(len(rows), -1, dtype=np.int64)
    assignment[rows[:, 0]] = rows[:, 1]
    return PartitionPlan(int(assignment.max()) + 1, assignment, "loaded")


# ---------------------------------------------------------------------------
# Worker subgraphs
# ---------------------------------------------------------------------------

@dataclass
class WorkerSubgraph:
    """One worker's owned nodes plus their 1-hop halo.

    Every owned node keeps its complete neighbor list from the full graph,
    so cross-partition edges appear in both incident workers. Halo rows
    hold only the edges back into this part, which keeps the local CSR
    symmetric. Features are cached for owned and halo nodes.
    """

    part_id: int
    owned_nodes: np.ndarray
    halo_nodes: np.ndarray
    local_nodes: np.ndarray
    local_offsets: np.ndarray
    local_targets: np.ndarray
    local_features: np.ndarray
    full_degrees: np.ndarray

    def __post_init__(self) -> None:
        self._local_index = {int(u): i for i, u in enumerate(self.local_nodes)}
        self._owned_set = frozenset(int(u) for u in self.owned_nodes)

    @property
    def global_to_local(self) -> dict[int, int]:
        return self._local_index

    def owns(self, u: int) -> bool:
        return int(u) in self._owned_set

    def is_halo(self, u: int) -> bool:
        return int(u) in self._local_index and int(u) not in self._owned_set

    def local_degree(self, u: int) -> int:
        i = self._local_index[int(u)]
        return int(self.local_offsets[i + 1] - self.local_offsets[i])

    def neighbors_global(self, u: int) -> np.ndarray:
        i = self._local_index[int(u)]
        row = self.local_targets[self.local_offsets[i] : self.local_offsets[i + 1]]
        return self.local_nodes[row]

    def undirected_edges_global(self) -> np.ndarray:
        """Local undirected edges (global id pairs, u < v)."""
        counts = np.diff(self.local_offsets)
        src = np.repeat(np.arange(len(self.local_nodes)), counts)
        gu = self.local_nodes[src]
        gv = self.local_nodes[self.local_targets]
        mask = gu < gv
        return np.column_stack([gu[mask], gv[mask]])

    def local_degrees_of(self, nodes: np.ndarray) -> np.ndarray:
        idx = np.array([self._local_index[int(u)] for u in nodes], dtype=np.int64)
        return (self.local_offsets[idx + 1] - self.local_offsets[idx]).astype(np.int64)

    def full_degrees_of(self, nodes: np.ndarray) -> np.ndarray:
        idx = np.array([self._local_index[int(u)] for u in nodes], dtype=np.int64)
        return self.full_degrees[idx]


def build_worker_subgraphs(g: Graph, plan: PartitionPlan) -> list[WorkerSubgraph]:
    if len(plan.assignment) != g.num_nodes or (plan.assignment < 0).any():
        raise ValueError("plan does not cover all nodes")
    assignment = plan.assignment
    workers = []
    for part in range(plan.num_parts):
        owned = np.flatnonzero(assignment == part)
        halo_chunks = [
            nbrs[assignment[nbrs] != part]
            for nbrs in (g.neighbors(int(u)) for u in owned)
        ]
        halo = (
            np.unique(np.concatenate(halo_chunks))
            if halo_chunks
            else np.array([], dtype=np.int64)
        )
        local_nodes = np.concatenate([owned, halo])
        index = np.full(g.num_nodes, -1, dtype=np.int64)
        index[local_nodes] = np.arange(len(local_nodes))

        rows: list[np.ndarray] = []
        for u in owned:
            rows.append(index[g.neighbors(int(u))])
        for h in halo:
            nbrs = g.neighbors(int(h))
            rows.append(index[nbrs[assignment[nbrs] == part]])
        counts = np.array([len(r) for r in rows], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        targets = (
            np.concatenate(rows) if len(rows) else np.array([], dtype=np.int64)
        )
        workers.append(
            WorkerSubgraph(
                part_id=part,
                owned_nodes=owned,
                halo_nodes=halo,
                local_nodes=local_nodes,
                local_offsets=offsets,
                local_targets=targets,
                local_features=g.features[local_nodes].copy(),
                full_degrees=g.degrees[local_nodes].astype(np.int64),
            )
        )
    return workers


__all__ = [
    "BALANCE_SLACK",
    "PartitionPlan",
    "WorkerSubgraph",
    "balance_capacity",
    "trivial_plan",
    "partition_greedy",
    "partition_random_tma",
    "partition_super_tma",
    "build_worker_subgraphs",
    "edge_cut",
    "save_plan",
    "load_plan",
]
