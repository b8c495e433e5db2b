import numpy as np
import pytest

from sparselink.graph import generate_synthetic, split_edges
from sparselink.metrics import default_k, evaluate_model, hits_at_k
from sparselink.model import init_model


def test_hits_worked_example():
    pos = np.array([0.9, 0.4])
    neg = np.array([0.8, 0.5, 0.3, 0.2])
    assert hits_at_k(pos, neg, 2) == pytest.approx(0.5)


def test_hits_all_above():
    pos = np.array([3.0, 2.5, 2.1])
    neg = np.array([1.0, 0.5, 0.2])
    for k in (1, 2, 3):
        assert hits_at_k(pos, neg, k) == 1.0


def test_hits_tie_is_a_miss():
    pos = np.array([0.5, 0.5])
    neg = np.array([0.9, 0.5, 0.1])
    assert hits_at_k(pos, neg, 2) == 0.0


def test_hits_monotone_in_k():
    rng = np.random.default_rng(0)
    pos = rng.normal(size=50)
    neg = rng.normal(size=200)
    values = [hits_at_k(pos, neg, k) for k in range(1, 201)]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_hits_errors():
    with pytest.raises(ValueError):
        hits_at_k(np.array([1.0]), np.array([0.5]), 2)
    with pytest.raises(ValueError):
        hits_at_k(np.array([1.0]), np.array([0.5]), 0)


def test_default_k():
    assert default_k(3000) == 100
    assert default_k(90) == 30
    assert default_k(2) == 1


def test_evaluate_zeroed_predictor_hits_zero():
    g = generate_synthetic("erdos_renyi", {"n": 60, "p": 0.15}, 4, seed=1)
    split = split_edges(g, seed=0)
    params = init_model(4, 8, 2, "sage", "mlp", seed=2)
    w3, b3 = params.mlp[-1]
    params.mlp[-1] = (np.zeros_like(w3), np.zeros_like(b3))
    report = evaluate_model(params, split, g, (5, 3), k=5, seed=3, which="test")
    assert report.hits[5] == 0.0


def test_evaluate_deterministic():
    g = generate_synthetic("erdos_renyi", {"n": 60, "p": 0.15}, 4, seed=1)
    split = split_edges(g, seed=0)
    params = init_model(4, 8, 2, "sage", "mlp", seed=2)
    r1 = evaluate_model(params, split, g, (5, 3), k=10, seed=7, which="val")
    r2 = evaluate_model(params, split, g, (5, 3), k=10, seed=7, which="val")
    assert r1.hits == r2.hits
    assert r1.pos_mean == r2.pos_mean


def test_evaluate_k_exceeding_negatives_errors():
    g = generate_synthetic("erdos_renyi", {"n": 60, "p": 0.15}, 4, seed=1)
    split = split_edges(g, seed=0)
    params = init_model(4, 8, 2, "sage", "mlp", seed=2)
    with pytest.raises(ValueError):
        evaluate_model(params, split, g, (5, 3), k=10**6, seed=3)
