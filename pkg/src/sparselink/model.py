"""GCN/GraphSAGE layers, edge predictors, loss, and exact gradients.

Everything is plain numpy in 64-bit, written as explicit forward/backward
passes for the one fixed architecture: K message-passing layers feeding a
dot-product or 3-layer-MLP edge scorer trained with binary cross-entropy.
Sparsifier edge weights enter the aggregation as multipliers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .sampling import ComputationGraph

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class NumericalError(RuntimeError):
    """Non-finite value encountered; message names the failing stage."""


@dataclass
class ModelParams:
    architecture: str
    predictor: str
    feature_dim: int
    hidden_dim: int
    layers: list[tuple[np.ndarray, np.ndarray]]
    mlp: list[tuple[np.ndarray, np.ndarray]]

    def arrays(self) -> list[np.ndarray]:
        """Flat parameter list in a fixed order (shared with gradients)."""
        out = []
        for w, b in self.layers:
            out.extend([w, b])
        for w, b in self.mlp:
            out.extend([w, b])
        return out

    def copy(self) -> ModelParams:
        return ModelParams(
            self.architecture,
            self.predictor,
            self.feature_dim,
            self.hidden_dim,
            [(w.copy(), b.copy()) for w, b in self.layers],
            [(w.copy(), b.copy()) for w, b in self.mlp],
        )

    def replace_arrays(self, arrays: list[np.ndarray]) -> ModelParams:
        it = iter(arrays)
        layers = [(next(it), next(it)) for _ in self.layers]
        mlp = [(next(it), next(it)) for _ in self.mlp]
        return ModelParams(
            self.architecture, self.predictor, self.feature_dim, self.hidden_dim, layers, mlp
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(
    feature_dim: int,
    hidden_dim: int,
    num_layers: int,
    architecture: str = "sage",
    predictor: str = "mlp",
    seed=0,
) -> ModelParams:
    if architecture not in ("gcn", "sage"):
        raise ValueError(f"unknown architecture {architecture!r}")
    if predictor not in ("mlp", "dot"):
        raise ValueError(f"unknown predictor {predictor!r}")
    rng = np.random.default_rng(seed)
    layers = []
    in_dim = feature_dim
    for _ in range(num_layers):
        w_in = in_dim if architecture == "gcn" else 2 * in_dim
        layers.append((_glorot(rng, w_in, hidden_dim), np.zeros(hidden_dim)))
        in_dim = hidden_dim
    mlp = []
    if predictor == "mlp":
        mlp = [
            (_glorot(rng, hidden_dim, hidden_dim), np.zeros(hidden_dim)),
            (_glorot(rng, hidden_dim, hidden_dim), np.zeros(hidden_dim)),
            (_glorot(rng, hidden_dim, 1), np.zeros(1)),
        ]
    return ModelParams(architecture, predictor, feature_dim, hidden_dim, layers, mlp)


# ---------------------------------------------------------------------------
# Forward pass over a computation graph
# ---------------------------------------------------------------------------

def _gcn_operators(cg: ComputationGraph, use_edge_weights: bool):
    """Self coefficients plus the symmetric-normalized aggregation matrix.

    Normalization runs over the sampled neighborhood with a unit
    self-loop, so isolated nodes degrade to a plain linear layer.
    """
    key = ("gcn", use_edge_weights)
    if key in cg._operator_cache:
        return cg._operator_cache[key]
    edge_weight = cg.edge_weight if use_edge_weights else np.ones_like(cg.edge_weight)
    deg = np.ones(cg.num_nodes)
    np.add.at(deg, cg.edge_parent, edge_weight)
    self_coef = 1.0 / deg
    edge_coef = edge_weight / np.sqrt(deg[cg.edge_parent] * deg[cg.edge_child])
    mat, mat_t = cg.scatter_operators(edge_coef, ("gcn-mat", use_edge_weights))
    cg._operator_cache[key] = (self_coef, mat, mat_t)
    return cg._operator_cache[key]


def _sage_operators(cg: ComputationGraph, use_edge_weights: bool):
    """Aggregation matrix producing the weighted neighbor mean per parent."""
    key = ("sage", use_edge_weights)
    if key in cg._operator_cache:
        return cg._operator_cache[key]
    edge_weight = cg.edge_weight if use_edge_weights else np.ones_like(cg.edge_weight)
    total = np.zeros(cg.num_nodes)
    np.add.at(total, cg.edge_parent, edge_weight)
    scale = np.zeros(len(edge_weight))
    nz = total[cg.edge_parent] > 0
    scale[nz] = edge_weight[nz] / total[cg.edge_parent[nz]]
    cg._operator_cache[key] = cg.scatter_operators(scale, ("sage-mat", use_edge_weights))
    return cg._operator_cache[key]


def _forward_layers(
    cg: ComputationGraph, x: np.ndarray, params: ModelParams, use_edge_weights: bool = True
) -> dict:
    """All intermediate activations; reused by the backward pass."""
    if not np.isfinite(x).all():
        raise NumericalError("non-finite node features")
    cache: dict = {"h": [x]}
    if params.architecture == "gcn":
        cache["self_coef"], cache["agg_mat"], cache["agg_mat_t"] = _gcn_operators(
            cg, use_edge_weights
        )
    else:
        cache["agg_mat"], cache["agg_mat_t"] = _sage_operators(cg, use_edge_weights)
    h = x
    num_layers = len(params.layers)
    cache["agg"] = []
    cache["z"] = []
    for k, (w, b) in enumerate(params.layers):
        if params.architecture == "gcn":
            m = cache["self_coef"][:, None] * h + cache["agg_mat"] @ h
            z = m @ w + b
        else:
            m = cache["agg_mat"] @ h
            z = np.concatenate([h, m], axis=1) @ w + b
        if not np.isfinite(z).all():
            raise NumericalError(f"non-finite activation at layer {k}")
        cache["agg"].append(m)
        cache["z"].append(z)
        h = np.maximum(z, 0.0) if k < num_layers - 1 else z
        cache["h"].append(h)
    return cache


def forward_embeddings(
    cg: ComputationGraph, features: np.ndarray, params: ModelParams, use_edge_weights: bool = True
) -> np.ndarray:
    """Final-layer embeddings for the layer-0 seed nodes, in cg.layers[0] order."""
    x = np.asarray(features, dtype=np.float64)[cg.nodes]
    cache = _forward_layers(cg, x, params, use_edge_weights)
    return cache["h"][-1][cg.seed_indices(cg.layers[0])]


def node_embeddings(
    cg: ComputationGraph, features: np.ndarray, params: ModelParams, use_edge_weights: bool = True
) -> np.ndarray:
    """Final-layer embeddings for every node in the computation graph."""
    x = np.asarray(features, dtype=np.float64)[cg.nodes]
    return _forward_layers(cg, x, params, use_edge_weights)["h"][-1]


# ---------------------------------------------------------------------------
# Edge scoring and loss
# ---------------------------------------------------------------------------

def _mlp_forward(params: ModelParams, e: np.ndarray) -> dict:
    cache = {"a": [e]}
    a = e
    for i, (w, b) in enumerate(params.mlp):
        z = a @ w + b
        a = np.maximum(z, 0.0) if i < len(params.mlp) - 1 else z
        cache.setdefault("z", []).append(z)
        cache["a"].append(a)
    return cache


def edge_score(params: ModelParams, h_u: np.ndarray, h_v: np.ndarray) -> np.ndarray:
    """Symmetric edge logit: dot product, or an MLP on h_u * h_v."""
    h_u = np.atleast_2d(h_u)
    h_v = np.atleast_2d(h_v)
    if h_u.shape != h_v.shape or h_u.shape[1] != params.hidden_dim:
        raise ValueError(f"embedding shapes {h_u.shape} / {h_v.shape} do not match predictor")
    if params.predictor == "dot":
        return np.sum(h_u * h_v, axis=1)
    return _mlp_forward(params, h_u * h_v)["a"][-1][:, 0]


def bce_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy on logits, in overflow-safe form."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    if len(scores) == 0:
        raise ValueError("empty batch")
    per = np.maximum(scores, 0.0) - scores * labels + np.log1p(np.exp(-np.abs(scores)))
    return float(per.mean())


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Reverse-mode gradients
# ---------------------------------------------------------------------------

def zero_gradients(params: ModelParams) -> ModelParams:
    return ModelParams(
        params.architecture,
        params.predictor,
        params.feature_dim,
        params.hidden_dim,
        [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers],
        [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.mlp],
    )


def _predictor_backward(
    params: ModelParams,
    grads: ModelParams,
    h_u: np.ndarray,
    h_v: np.ndarray,
    mlp_cache: dict | None,
    d_scores: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate predictor gradients; return (d_h_u, d_h_v) row gradients."""
    if params.predictor == "dot":
        return d_scores[:, None] * h_v, d_scores[:, None] * h_u
    d_a = d_scores[:, None]
    for i in range(len(params.mlp) - 1, -1, -1):
        w, _ = params.mlp[i]
        a_in = mlp_cache["a"][i]
        if i < len(params.mlp) - 1:
            d_a = d_a * (mlp_cache["z"][i] > 0)
        g_w, g_b = grads.mlp[i]
        g_w += a_in.T @ d_a
        g_b += d_a.sum(axis=0)
        d_a = d_a @ w.T
    return d_a * h_v, d_a * h_u


def _backward_layers(
    cg: ComputationGraph,
    cache: dict,
    params: ModelParams,
    d_h: np.ndarray,
    grads: ModelParams,
) -> None:
    """Accumulate layer gradients of one computation graph into grads."""
    num_layers = len(params.layers)
    for k in range(num_layers - 1, -1, -1):
        w, _ = params.layers[k]
        h_in = cache["h"][k]
        d_z = d_h if k == num_layers - 1 else d_h * (cache["z"][k] > 0)
        if not np.isfinite(d_z).all():
            raise NumericalError(f"non-finite gradient at layer {k}")
        g_w, g_b = grads.layers[k]
        if params.architecture == "gcn":
            m = cache["agg"][k]
            g_w += m.T @ d_z
            g_b += d_z.sum(axis=0)
            d_m = d_z @ w.T
            d_h = cache["self_coef"][:, None] * d_m + cache["agg_mat_t"] @ d_m
        else:
            m = cache["agg"][k]
            stacked = np.concatenate([h_in, m], axis=1)
            g_w += stacked.T @ d_z
            g_b += d_z.sum(axis=0)
            d_stacked = d_z @ w.T
            dim = h_in.shape[1]
            d_h = d_stacked[:, :dim] + cache["agg_mat_t"] @ d_stacked[:, dim:]


def batch_loss_and_gradients(
    cg: ComputationGraph,
    features: np.ndarray,
    params: ModelParams,
    pairs: np.ndarray,
    labels: np.ndarray,
    use_edge_weights: bool = True,
) -> tuple[float, np.ndarray, ModelParams]:
    """Loss, scores, and exact gradients for one labeled batch."""
    x = np.asarray(features, dtype=np.float64)[cg.nodes]
    cache = _forward_layers(cg, x, params, use_edge_weights)
    h_final = cache["h"][-1]
    ui = cg.seed_indices(pairs[:, 0])
    vi = cg.seed_indices(pairs[:, 1])
    h_u, h_v = h_final[ui], h_final[vi]

    grads = zero_gradients(params)
    mlp_cache = None
    if params.predictor == "dot":
        scores = np.sum(h_u * h_v, axis=1)
    else:
        mlp_cache = _mlp_forward(params, h_u * h_v)
        scores = mlp_cache["a"][-1][:, 0]
    loss = bce_loss(scores, labels)

    d_scores = (_sigmoid(scores) - labels) / len(scores)
    d_h_u, d_h_v = _predictor_backward(params, grads, h_u, h_v, mlp_cache, d_scores)
    d_h = np.zeros_like(h_final)
    np.add.at(d_h, ui, d_h_u)
    np.add.at(d_h, vi, d_h_v)
    _backward_layers(cg, cache, params, d_h, grads)
    return loss, scores, grads


def paired_loss_and_gradients(
    cg_local: ComputationGraph,
    cg_shared: ComputationGraph,
    features: np.ndarray,
    params: ModelParams,
    pos_pairs: np.ndarray,
    neg_pairs: np.ndarray,
    use_edge_weights: bool = True,
) -> tuple[float, np.ndarray, ModelParams]:
    """Training-step loss/gradients with split contexts.

    Positive pairs and negative sources embed through cg_local (the
    worker's own subgraph); negative destinations embed through cg_shared
    (the strategy-determined view of the rest of the graph). Scores are
    returned positives first.
    """
    feats = np.asarray(features, dtype=np.float64)
    cache_l = _forward_layers(cg_local, feats[cg_local.nodes], params, use_edge_weights)
    cache_s = _forward_layers(cg_shared, feats[cg_shared.nodes], params, use_edge_weights)
    h_l = cache_l["h"][-1]
    h_s = cache_s["h"][-1]

    pu = cg_local.seed_indices(pos_pairs[:, 0])
    pv = cg_local.seed_indices(pos_pairs[:, 1])
    nu = cg_local.seed_indices(neg_pairs[:, 0])
    nv = cg_shared.seed_indices(neg_pairs[:, 1])
    h_u = np.concatenate([h_l[pu], h_l[nu]])
    h_v = np.concatenate([h_l[pv], h_s[nv]])
    labels = np.concatenate([np.ones(len(pos_pairs)), np.zeros(len(neg_pairs))])

    grads = zero_gradients(params)
    mlp_cache = None
    if params.predictor == "dot":
        scores = np.sum(h_u * h_v, axis=1)
    else:
        mlp_cache = _mlp_forward(params, h_u * h_v)
        scores = mlp_cache["a"][-1][:, 0]
    loss = bce_loss(scores, labels)

    d_scores = (_sigmoid(scores) - labels) / len(scores)
    d_h_u, d_h_v = _predictor_backward(params, grads, h_u, h_v, mlp_cache, d_scores)
    np_pos = len(pos_pairs)
    d_h_local = np.zeros_like(h_l)
    d_h_shared = np.zeros_like(h_s)
    np.add.at(d_h_local, pu, d_h_u[:np_pos])
    np.add.at(d_h_local, nu, d_h_u[np_pos:])
    np.add.at(d_h_local, pv, d_h_v[:np_pos])
    np.add.at(d_h_shared, nv, d_h_v[np_pos:])
    _backward_layers(cg_local, cache_l, params, d_h_local, grads)
    _backward_layers(cg_shared, cache_s, params, d_h_shared, grads)
    return loss, scores, grads


def backward(
    cg: ComputationGraph,
    features: np.ndarray,
    params: ModelParams,
    pairs: np.ndarray,
    labels: np.ndarray,
    use_edge_weights: bool = True,
) -> ModelParams:
    """Gradients of the batch loss with respect to every parameter."""
    return batch_loss_and_gradients(cg, features, params, pairs, labels, use_edge_weights)[2]


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def init_adam(params: ModelParams, lr: float = 0.001) -> AdamState:
    arrays = params.arrays()
    return AdamState(
        lr=lr,
        m=[np.zeros_like(a) for a in arrays],
        v=[np.zeros_like(a) for a in arrays],
    )


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState) -> ModelParams:
    """Bias-corrected Adam update; mutates state, returns new parameters."""
    p_arrays = params.arrays()
    g_arrays = grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(
        p.shape != g.shape for p, g in zip(p_arrays, g_arrays)
    ):
        raise ValueError("gradient shapes do not match parameters")
    state.step += 1
    t = state.step
    out = []
    for i, (p, g) in enumerate(zip(p_arrays, g_arrays)):
        state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
        m_hat = state.m[i] / (1 - state.beta1**t)
        v_hat = state.v[i] / (1 - state.beta2**t)
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return params.replace_arrays(out)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_params(params: ModelParams, path: str) -> None:
    meta = {
        "format_version": 1,
        "architecture": params.architecture,
        "predictor": params.predictor,
        "feature_dim": params.feature_dim,
        "hidden_dim": params.hidden_dim,
        "num_layers": len(params.layers),
    }
    arrays = {f"arr_{i}": a for i, a in enumerate(params.arrays())}
    np.savez(path, meta=json.dumps(meta), **arrays)


def load_params(path: str) -> ModelParams:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    if meta.get("format_version") != 1:
        raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
    arrays = [data[f"arr_{i}"] for i in range(len(data.files) - 1)]
    skeleton = init_model(
        meta["feature_dim"],
        meta["hidden_dim"],
        meta["num_layers"],
        meta["architecture"],
        meta["predictor"],
        seed=0,
    )
    return skeleton.replace_arrays(arrays)


__all__ = [
    "ModelParams",
    "AdamState",
    "NumericalError",
    "init_model",
    "forward_embeddings",
    "node_embeddings",
    "edge_score",
    "bce_loss",
    "batch_loss_and_gradients",
    "paired_loss_and_gradients",
    "backward",
    "zero_gradients",
    "init_adam",
    "adam_step",
    "save_params",
    "load_params",
]
