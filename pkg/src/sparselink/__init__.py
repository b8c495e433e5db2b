"""Desk-scale simulator of distributed GNN training for link prediction
with effective-resistance sparsified remote data sharing."""

from .graph import (
    EdgeSplit,
    Graph,
    from_edge_array,
    generate_synthetic,
    laplacian_quadratic_form,
    load_graph,
    normalized_laplacian_gamma,
    split_edges,
    write_graph,
)
from .metrics import EvalReport, evaluate_model, hits_at_k
from .model import (
    AdamState,
    ModelParams,
    adam_step,
    backward,
    bce_loss,
    edge_score,
    forward_embeddings,
    init_adam,
    init_model,
)
from .partition import (
    PartitionPlan,
    WorkerSubgraph,
    build_worker_subgraphs,
    partition_greedy,
    partition_random_tma,
    partition_super_tma,
)
from .sampling import (
    Batch,
    ComputationGraph,
    GraphView,
    build_computation_graph,
    negative_global_uniform,
    negative_per_source,
    positive_batch,
)
from .sparsify import (
    SparsifiedSubgraph,
    approx_resistance,
    exact_effective_resistance,
    expected_laplacian_error,
    resistance_bounds_hold,
    sparsify_subgraph,
)
from .training import (
    CommLedger,
    TrainConfig,
    TrainResult,
    account_transfer,
    run_baseline,
    run_training,
    sync_gradients,
    sync_models,
)

__version__ = "0.1.0"
