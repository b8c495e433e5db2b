"""Barrier-synchronized simulation of distributed link-prediction training.

Workers are simulated sequentially between synchronization barriers; all
shared state (graph, views, sparsified store) is read-only during an
epoch, so the schedule is equivalent to any parallel interleaving. The
communication ledger bills every remote feature row and sampled remote
edge, deduplicated per worker-batch.
"""
from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .graph import FEATURE_BYTE_WIDTH, EdgeSplit, Graph
from .metrics import default_k, evaluate_model
from .model import (
    ModelParams,
    adam_step,
    init_adam,
    init_model,
    paired_loss_and_gradients,
    save_params,
    zero_gradients,
)
from .partition import (
    PartitionPlan,
    build_worker_subgraphs,
    partition_greedy,
    partition_random_tma,
    partition_super_tma,
    trivial_plan,
)
from .sampling import (
    ComputationGraph,
    GraphView,
    build_computation_graph,
    negative_per_source,
    positive_batch,
    worker_train_edges,
)
from .sparsify import SparsifiedSubgraph, sparsify_subgraph

STRUCTURE_BYTES_PER_EDGE = 8  # two 4-byte node ids per transferred edge
SPARSED_EDGE_SETUP_BYTES = 12  # two ids plus one 4-byte weight

VARIANTS = (
    "centralized",
    "psgd_pa",
    "random_tma",
    "super_tma",
    "splpg_minus_minus",
    "splpg_minus",
    "splpg",
    "splpg_plus",
)


@dataclass
class TrainConfig:
    num_parts: int = 4
    alpha: float = 0.15
    fanouts: tuple[int, ...] = (25, 10, 5)
    batch_size: int = 256
    lr: float = 0.001
    epochs: int = 1
    sync_mode: str = "model_avg"
    sharing_mode: str = "sparsified"
    architecture: str = "sage"
    predictor: str = "mlp"
    hidden_dim: int = 256
    partition_strategy: str = "greedy_cut"
    num_miniclusters: int | None = None
    degree_scope: str = "local"
    use_edge_weights: bool = True
    full_neighbor_halo: bool = True
    local_only_negatives: bool = False
    eval_k: int | None = None
    eval_every: int = 1
    sync_period: int = 1
    checkpoint_every: int | None = None
    checkpoint_dir: str | None = None
    seed_partition: int = 1
    seed_sparsify: int = 2
    seed_sample: int = 3
    seed_init: int = 4

    def __post_init__(self) -> None:
        if self.num_parts < 1:
            raise ValueError("num_parts must be >= 1")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if any(f < 1 for f in self.fanouts):
            raise ValueError("fanouts must be positive")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError("batch_size must be even and >= 2")
        if self.sync_mode not in ("model_avg", "gradient_avg"):
            raise ValueError(f"unknown sync_mode {self.sync_mode!r}")
        if self.sharing_mode not in ("none", "complete", "sparsified"):
            raise ValueError(f"unknown sharing_mode {self.sharing_mode!r}")
        if self.partition_strategy not in ("greedy_cut", "random_tma", "super_tma"):
            raise ValueError(f"unknown partition_strategy {self.partition_strategy!r}")

    def with_seed(self, seed: int) -> TrainConfig:
        return dataclasses.replace(
            self,
            seed_partition=seed * 4 + 1,
            seed_sparsify=seed * 4 + 2,
            seed_sample=seed * 4 + 3,
            seed_init=seed * 4 + 4,
        )


@dataclass
class CommLedger:
    """Per-epoch, per-worker byte counters for remote data transfer.

    Feature bytes are 4 * feature_dim per unique remote node of one
    worker-batch ("dedup scope" is the batch); structure bytes are a fixed
    8 per sampled remote edge. Setup counters record the one-time halo
    feature cache and sparsified-store distribution.
    """

    num_workers: int
    feature_dim: int
    dedup_scope: str = "batch"
    setup_feature_bytes: np.ndarray = field(default=None)
    setup_structure_bytes: np.ndarray = field(default=None)
    epoch_feature_bytes: list[np.ndarray] = field(default_factory=list)
    epoch_structure_bytes: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.setup_feature_bytes is None:
            self.setup_feature_bytes = np.zeros(self.num_workers, dtype=np.int64)
        if self.setup_structure_bytes is None:
            self.setup_structure_bytes = np.zeros(self.num_workers, dtype=np.int64)

    def new_epoch(self) -> None:
        self.epoch_feature_bytes.append(np.zeros(self.num_workers, dtype=np.int64))
        self.epoch_structure_bytes.append(np.zeros(self.num_workers, dtype=np.int64))

    def bill(self, worker: int, feature_bytes: int, structure_bytes: int) -> None:
        self.epoch_feature_bytes[-1][worker] += feature_bytes
        self.epoch_structure_bytes[-1][worker] += structure_bytes

    def bill_setup(self, worker: int, feature_bytes: int, structure_bytes: int) -> None:
        self.setup_feature_bytes[worker] += feature_bytes
        self.setup_structure_bytes[worker] += structure_bytes

    @property
    def num_epochs(self) -> int:
        return len(self.epoch_feature_bytes)

    def epoch_totals(self, epoch: int) -> tuple[int, int]:
        return (
            int(self.epoch_feature_bytes[epoch].sum()),
            int(self.epoch_structure_bytes[epoch].sum()),
        )

    def cumulative_through(self, epoch: int) -> tuple[int, int]:
        f = sum(int(a.sum()) for a in self.epoch_feature_bytes[: epoch + 1])
        s = sum(int(a.sum()) for a in self.epoch_structure_bytes[: epoch + 1])
        return f, s

    def to_rows(self) -> list[dict]:
        rows = []
        for w in range(self.num_workers):
            rows.append(
                {
                    "scope": "setup",
                    "epoch": -1,
                    "worker": w,
                    "feature_bytes": int(self.setup_feature_bytes[w]),
                    "structure_bytes": int(self.setup_structure_bytes[w]),
                }
            )
        for e in range(self.num_epochs):
            for w in range(self.num_workers):
                rows.append(
                    {
                        "scope": "epoch",
                        "epoch": e,
                        "worker": w,
                        "feature_bytes": int(self.epoch_feature_bytes[e][w]),
                        "structure_bytes": int(self.epoch_structure_bytes[e][w]),
                    }
                )
        return rows


def account_transfer(
    cg: ComputationGraph,
    worker: int,
    batch_index: int,
    ledger: CommLedger,
    config: TrainConfig,
) -> CommLedger:
    """Bill one batch's computation graph: each remote node's features once
    per (worker, batch), plus a fixed cost per sampled remote edge."""
    if config.sharing_mode == "none" and len(cg.remote_nodes):
        raise RuntimeError("no-sharing view produced remote nodes; view wiring is broken")
    feature_bytes = FEATURE_BYTE_WIDTH * ledger.feature_dim * len(cg.remote_nodes)
    structure_bytes = STRUCTURE_BYTES_PER_EDGE * cg.remote_edge_count
    ledger.bill(worker, feature_bytes, structure_bytes)
    return ledger


def sync_gradients(worker_grads: list[ModelParams]) -> ModelParams:
    """Elementwise mean of per-worker gradient sets."""
    ref = worker_grads[0]
    arrays = [g.arrays() for g in worker_grads]
    for a in arrays[1:]:
        if any(x.shape != y.shape for x, y in zip(a, arrays[0])):
            raise ValueError("gradient shapes differ across workers")
    mean = [np.mean([a[i] for a in arrays], axis=0) for i in range(len(arrays[0]))]
    return ref.replace_arrays(mean)


def sync_models(worker_params: list[ModelParams]) -> ModelParams:
    """Elementwise mean of per-worker parameter sets."""
    return sync_gradients(worker_params)


@dataclass
class TrainResult:
    params: ModelParams
    best_params: ModelParams
    best_epoch: int
    ledger: CommLedger
    history: list[dict]
    plan: PartitionPlan


def make_plan(g: Graph, config: TrainConfig) -> PartitionPlan:
    p = config.num_parts
    if p == 1:
        return trivial_plan(g, config.partition_strategy)
    if config.partition_strategy == "greedy_cut":
        return partition_greedy(g, p, config.seed_partition)
    if config.partition_strategy == "random_tma":
        return partition_random_tma(g, p, config.seed_partition)
    k = config.num_miniclusters or min(g.num_nodes, 8 * p)
    return partition_super_tma(g, p, k, config.seed_partition)


def run_training(
    g: Graph, split: EdgeSplit, config: TrainConfig, variant_tag: str = "splpg"
) -> TrainResult:
    """Algorithm: partition, sparsify, then barrier-synchronized epochs.

    Every worker consumes each of its owned train positives exactly once
    per epoch; the epoch ends when the busiest worker finishes, with idle
    workers contributing nothing that batch.
    """
    plan = make_plan(g, config)
    workers = build_worker_subgraphs(g, plan)
    p = config.num_parts

    sparsed_store: dict[int, SparsifiedSubgraph] = {}
    if config.sharing_mode == "sparsified":
        for w in workers:
            sparsed_store[w.part_id] = sparsify_subgraph(
                w, config.alpha, seed=[config.seed_sparsify, w.part_id], degree_scope=config.degree_scope
            )

    ledger = CommLedger(num_workers=p, feature_dim=g.feature_dim)
    for w in workers:
        halo_features = (
            FEATURE_BYTE_WIDTH * g.feature_dim * len(w.halo_nodes)
            if config.full_neighbor_halo
            else 0
        )
        store_bytes = sum(
            SPARSED_EDGE_SETUP_BYTES * sp.num_retained
            for part, sp in sparsed_store.items()
            if part != w.part_id
        )
        ledger.bill_setup(w.part_id, halo_features, store_bytes)

    # Positive samples expand strictly within the worker's own subgraph;
    # only negative destinations go through the strategy-determined view.
    local_views = [
        GraphView(
            g,
            w,
            assignment=plan.assignment,
            sharing="none",
            full_neighbor_halo=config.full_neighbor_halo,
        )
        for w in workers
    ]
    if config.sharing_mode == "none":
        shared_views = local_views
    else:
        shared_views = [
            GraphView(
                g,
                w,
                assignment=plan.assignment,
                sparsed_store=sparsed_store,
                sharing=config.sharing_mode,
                full_neighbor_halo=config.full_neighbor_halo,
            )
            for w in workers
        ]

    params0 = init_model(
        g.feature_dim,
        config.hidden_dim,
        len(config.fanouts),
        config.architecture,
        config.predictor,
        seed=config.seed_init,
    )
    worker_params = [params0.copy() for _ in range(p)]
    adam_states = [init_adam(params0, lr=config.lr) for _ in range(p)]

    half = config.batch_size // 2
    owned_counts = [
        len(worker_train_edges(w, split, require_both=not config.full_neighbor_halo))
        for w in workers
    ]
    batches_per_worker = [math.ceil(c / half) if c else 0 for c in owned_counts]
    total_batches = max(batches_per_worker) if batches_per_worker else 0
    if total_batches == 0:
        raise ValueError("no worker owns any training edges")

    eval_k = config.eval_k if config.eval_k is not None else default_k(len(split.val_neg))
    history: list[dict] = []
    best_val = -1.0
    best_epoch = -1
    best_params = worker_params[0].copy()

    for epoch in range(config.epochs):
        ledger.new_epoch()
        epoch_losses: list[float] = []
        for b in range(total_batches):
            grads: list[ModelParams | None] = [None] * p
            for i, w in enumerate(workers):
                if b >= batches_per_worker[i]:
                    continue
                pos = positive_batch(
                    w,
                    split,
                    config.batch_size,
                    config.seed_sample,
                    b,
                    epoch=epoch,
                    require_both=not config.full_neighbor_halo,
                )
                side_rng = np.random.default_rng([config.seed_sample, 77, epoch, b, i])
                side = side_rng.integers(0, 2, size=len(pos))
                sources = pos[np.arange(len(pos)), side]
                neg = negative_per_source(
                    sources,
                    shared_views[i],
                    g,
                    seed=[config.seed_sample, 101, epoch, b, i],
                    local_only=config.local_only_negatives,
                )
                cg_local = build_computation_graph(
                    np.unique(pos),
                    local_views[i],
                    config.fanouts,
                    seed=[config.seed_sample, 202, epoch, b, i],
                )
                cg_shared = build_computation_graph(
                    np.unique(neg[:, 1]),
                    shared_views[i],
                    config.fanouts,
                    seed=[config.seed_sample, 303, epoch, b, i],
                )
                account_transfer(cg_local, i, b, ledger, config)
                account_transfer(cg_shared, i, b, ledger, config)
                loss, _, g_i = paired_loss_and_gradients(
                    cg_local,
                    cg_shared,
                    g.features,
                    worker_params[i],
                    pos,
                    neg,
                    use_edge_weights=config.use_edge_weights,
                )
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch} batch {b} worker {i}"
                    )
                epoch_losses.append(loss)
                grads[i] = g_i

            if config.sync_mode == "gradient_avg":
                filled = [
                    gr if gr is not None else zero_gradients(worker_params[i])
                    for i, gr in enumerate(grads)
                ]
                mean_grad = sync_gradients(filled)
                for i in range(p):
                    worker_params[i] = adam_step(worker_params[i], mean_grad, adam_states[i])
            else:
                for i in range(p):
                    if grads[i] is not None:
                        worker_params[i] = adam_step(
                            worker_params[i], grads[i], adam_states[i]
                        )
                if (b + 1) % config.sync_period == 0 or b == total_batches - 1:
                    averaged = sync_models(worker_params)
                    worker_params = [averaged.copy() for _ in range(p)]

        train_loss = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        val_hits = float("nan")
        if epoch % config.eval_every == 0 or epoch == config.epochs - 1:
            report = evaluate_model(
                worker_params[0],
                split,
                g,
                config.fanouts,
                k=eval_k,
                seed=config.seed_sample + 9000,
                which="val",
                variant=variant_tag,
                epoch=epoch,
            )
            val_hits = report.hits[eval_k]
            if val_hits > best_val:
                best_val = val_hits
                best_epoch = epoch
                best_params = worker_params[0].copy()
        if (
            config.checkpoint_every
            and config.checkpoint_dir
            and (epoch + 1) % config.checkpoint_every == 0
        ):
            save_params(
                worker_params[0],
                os.path.join(config.checkpoint_dir, f"{variant_tag}_epoch{epoch:04d}.npz"),
            )
        cum_f, cum_s = ledger.cumulative_through(epoch)
        history.append(
            {
                "epoch": epoch,
                "variant": variant_tag,
                "train_loss": train_loss,
                "val_hits": val_hits,
                "k": eval_k,
                "cum_feature_bytes": cum_f,
                "cum_structure_bytes": cum_s,
            }
        )

    return TrainResult(
        params=worker_params[0],
        best_params=best_params,
        best_epoch=best_epoch,
        ledger=ledger,
        history=history,
        plan=plan,
    )


def variant_config(variant: str, config: TrainConfig) -> TrainConfig:
    """Flag bundle for each named training strategy."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == "centralized":
        return dataclasses.replace(
            config,
            num_parts=1,
            sharing_mode="none",
            full_neighbor_halo=True,
            local_only_negatives=False,
        )
    if variant in ("psgd_pa", "splpg_minus_minus"):
        return dataclasses.replace(
            config,
            partition_strategy="greedy_cut",
            sharing_mode="none",
            full_neighbor_halo=False,
            local_only_negatives=True,
        )
    if variant == "random_tma":
        return dataclasses.replace(
            config,
            partition_strategy="random_tma",
            sharing_mode="none",
            full_neighbor_halo=False,
            local_only_negatives=True,
        )
    if variant == "super_tma":
        return dataclasses.replace(
            config,
            partition_strategy="super_tma",
            sharing_mode="none",
            full_neighbor_halo=False,
            local_only_negatives=True,
        )
    if variant == "splpg_minus":
        return dataclasses.replace(
            config,
            partition_strategy="greedy_cut",
            sharing_mode="none",
            full_neighbor_halo=True,
            local_only_negatives=True,
        )
    if variant == "splpg":
        return dataclasses.replace(
            config,
            sharing_mode="sparsified",
            full_neighbor_halo=True,
            local_only_negatives=False,
        )
    # splpg_plus: complete data sharing, no sparsification
    return dataclasses.replace(
        config,
        sharing_mode="complete",
        full_neighbor_halo=True,
        local_only_negatives=False,
    )


def run_baseline(g: Graph, split: EdgeSplit, variant: str, config: TrainConfig) -> TrainResult:
    return run_training(g, split, variant_config(variant, config), variant_tag=variant)


__all__ = [
    "STRUCTURE_BYTES_PER_EDGE",
    "VARIANTS",
    "TrainConfig",
    "CommLedger",
    "TrainResult",
    "account_transfer",
    "sync_gradients",
    "sync_models",
    "make_plan",
    "run_training",
    "variant_config",
    "run_baseline",
]
