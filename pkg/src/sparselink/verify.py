"""Built-in oracle suite: the mathematical properties the sparsifier and
gradient machinery rely on, runnable from the CLI without any dataset."""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import sparsify
from .graph import generate_synthetic, laplacian_quadratic_form, write_graph
from .model import batch_loss_and_gradients, init_model
from .partition import trivial_plan, build_worker_subgraphs
from .sampling import GraphView, build_computation_graph, negative_global_uniform
from .sparsify import (
    exact_resistance_sparsify,
    quadratic_form_edges,
    resistance_bounds_hold,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_connected_graph(seed: int, n_lo: int = 12, n_hi: int = 60):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_lo, n_hi))
    kind = ["erdos_renyi", "barabasi_albert", "sbm"][seed % 3]
    if kind == "erdos_renyi":
        params = {"n": n, "p": min(1.0, 4.0 / n + 0.05)}
    elif kind == "barabasi_albert":
        params = {"n": n, "m": 2}
    else:
        params = {"block_sizes": [n // 2, n - n // 2], "p_in": 0.4, "p_out": 0.05}
    return generate_synthetic(kind, params, feature_dim=4, seed=seed)


def _serialize_violation(g, tag: str) -> str:
    path = os.path.join(tempfile.gettempdir(), f"sparselink_violation_{tag}")
    write_graph(g, path + ".edges", path + ".features")
    return path + ".edges"


def check_resistance_bounds(num_graphs: int = 15, seed0: int = 100) -> CheckResult:
    """Degree bound sandwich on the exact effective resistance, every edge."""
    for s in range(seed0, seed0 + num_graphs):
        g = _random_connected_graph(s)
        if not resistance_bounds_hold(g):
            path = _serialize_violation(g, f"bounds_{s}")
            return CheckResult(
                "resistance_bounds", False, f"violated on seed {s}; graph dumped to {path}"
            )
    return CheckResult("resistance_bounds", True, f"{num_graphs} random connected graphs")


def check_spectral_closeness(
    num_graphs: int = 5, seed0: int = 200, epsilon: float = 0.3, min_fraction: float = 0.95
) -> CheckResult:
    """Sampling with exact-resistance probabilities approximates x^T L x."""
    for s in range(seed0, seed0 + num_graphs):
        g = generate_synthetic("erdos_renyi", {"n": 50, "p": 0.12}, 4, seed=s)
        n = g.num_nodes
        draws = int(16 * n * np.log(n))
        edges, weights = exact_resistance_sparsify(g, draws, seed=s)
        rng = np.random.default_rng(s + 1)
        ok = 0
        trials = 100
        for _ in range(trials):
            x = rng.normal(size=n)
            x /= np.linalg.norm(x)
            base = laplacian_quadratic_form(g, x)
            approx = quadratic_form_edges(edges, weights, x)
            if abs(approx - base) <= epsilon * base:
                ok += 1
        if ok < min_fraction * trials:
            path = _serialize_violation(g, f"spectral_{s}")
            return CheckResult(
                "spectral_closeness",
                False,
                f"only {ok}/{trials} vectors within {epsilon} on seed {s}; graph at {path}",
            )
    return CheckResult(
        "spectral_closeness", True, f"{num_graphs} graphs, >= {min_fraction:.0%} of vectors"
    )


def check_laplacian_unbiasedness(trials: int = 800, tol: float = 0.06) -> CheckResult:
    """Trial-averaged sparsified Laplacian converges to the subgraph Laplacian."""
    g = generate_synthetic("erdos_renyi", {"n": 10, "p": 1.0}, 4, seed=1)
    sub = build_worker_subgraphs(g, trivial_plan(g))[0]
    err = sparsify.expected_laplacian_error(sub, alpha=0.5, trials=trials, seed=42)
    passed = err < tol
    return CheckResult(
        "laplacian_unbiasedness",
        passed,
        f"relative Frobenius error {err:.4f} (tolerance {tol}) over {trials} trials",
    )


def check_weight_identity(seed: int = 7) -> CheckResult:
    """w * L * p_e recovers an integer draw count for every kept edge."""
    g = generate_synthetic("erdos_renyi", {"n": 40, "p": 0.2}, 4, seed=seed)
    sub = build_worker_subgraphs(g, trivial_plan(g))[0]
    sp = sparsify.sparsify_subgraph(sub, alpha=0.3, seed=seed)
    edges = sub.undirected_edges_global()
    deg = np.zeros(g.num_nodes)
    deg[sub.local_nodes] = np.diff(sub.local_offsets)
    probs = sparsify.edge_sampling_probabilities(edges, deg)
    lookup = {(int(u), int(v)): p for (u, v), p in zip(edges, probs)}
    for (u, v), w in zip(sp.edges, sp.weights):
        count = w * sp.samples_drawn * lookup[(int(u), int(v))]
        if abs(count - round(count)) > 1e-9 or round(count) < 1:
            return CheckResult(
                "weight_identity", False, f"edge ({u},{v}) implies non-integer count {count}"
            )
    if abs(probs.sum() - 1.0) > 1e-12:
        return CheckResult("weight_identity", False, f"probabilities sum to {probs.sum()}")
    return CheckResult("weight_identity", True, f"{sp.num_retained} kept edges verified")


def gradient_check_fixture():
    """Small deterministic instance whose pre-activations all sit far from
    the relu kink, so central differences with h=1e-4 are valid."""
    g = generate_synthetic("erdos_renyi", {"n": 20, "p": 0.3}, 5, seed=27)
    view = GraphView.full(g)
    cg = build_computation_graph(np.arange(8), view, (4, 3), seed=5)
    pairs = np.array([[0, 3], [1, 5], [2, 7], [4, 6]])
    labels = np.array([1.0, 0.0, 1.0, 0.0])
    return g, cg, pairs, labels


def gradient_fixture_params(architecture: str, predictor: str):
    return init_model(5, 6, 2, architecture, predictor, seed=23)


def check_gradients(probes_per_config: int = 30, tol: float = 1e-4) -> CheckResult:
    """Central finite differences against the analytic backward pass."""
    g, cg, pairs, labels = gradient_check_fixture()
    rng = np.random.default_rng(0)
    worst = 0.0
    for arch in ("gcn", "sage"):
        for pred in ("mlp", "dot"):
            params = gradient_fixture_params(arch, pred)
            _, _, grads = batch_loss_and_gradients(cg, g.features, params, pairs, labels)
            p_arrays = params.arrays()
            g_arrays = grads.arrays()
            for _ in range(probes_per_config):
                ai = int(rng.integers(len(p_arrays)))
                flat = p_arrays[ai].reshape(-1)
                ei = int(rng.integers(flat.size))
                rel = _fd_relative_error(
                    cg, g.features, params, pairs, labels, ai, ei, g_arrays
                )
                worst = max(worst, rel)
                if rel > tol:
                    return CheckResult(
                        "gradient_check",
                        False,
                        f"{arch}/{pred} array {ai} entry {ei}: relative error {rel:.2e}",
                    )
    return CheckResult("gradient_check", True, f"max relative error {worst:.2e}")


def _fd_relative_error(cg, features, params, pairs, labels, ai, ei, g_arrays, h=1e-4):
    analytic = float(g_arrays[ai].reshape(-1)[ei])

    def loss_with(delta: float) -> float:
        shifted = params.copy()
        shifted.arrays()[ai].reshape(-1)[ei] += delta
        loss, _, _ = batch_loss_and_gradients(cg, features, shifted, pairs, labels)
        return loss

    numeric = (loss_with(h) - loss_with(-h)) / (2 * h)
    denom = max(abs(analytic), abs(numeric))
    if denom < 1e-7:
        return 0.0 if abs(analytic - numeric) < 1e-7 else 1.0
    return abs(analytic - numeric) / denom


def check_negative_definition(seed: int = 9) -> CheckResult:
    """Sampled negative pairs are never edges of the graph."""
    g = generate_synthetic("erdos_renyi", {"n": 60, "p": 0.15}, 4, seed=seed)
    neg = negative_global_uniform(g, 200, seed=seed)
    for u, v in neg:
        if g.has_edge(int(u), int(v)) or u == v:
            return CheckResult("negative_definition", False, f"pair ({u},{v}) is invalid")
    return CheckResult("negative_definition", True, "200 sampled non-edges verified")


def run_verification(trials: int = 800) -> list[CheckResult]:
    return [
        check_resistance_bounds(),
        check_spectral_closeness(),
        check_laplacian_unbiasedness(trials=trials),
        check_weight_identity(),
        check_gradients(),
        check_negative_definition(),
    ]


__all__ = ["CheckResult", "run_verification"]
