import numpy as np
import pytest

from sparselink.graph import from_edge_array, generate_synthetic, split_edges
from sparselink.partition import build_worker_subgraphs, partition_greedy, trivial_plan
from sparselink.sampling import (
    GraphView,
    NoOwnedTrainEdges,
    build_computation_graph,
    negative_global_uniform,
    negative_per_source,
    positive_batch,
    worker_train_edges,
)
from sparselink.sparsify import sparsify_subgraph


def graph_of(edges, n, fdim=2):
    return from_edge_array(np.array(edges), np.zeros((n, fdim), dtype=np.float32))


def build_setup(seed=0, n=80, p=0.12, parts=2):
    g = generate_synthetic("erdos_renyi", {"n": n, "p": p}, 3, seed=seed)
    split = split_edges(g, seed=seed)
    plan = partition_greedy(g, parts, seed=seed)
    workers = build_worker_subgraphs(g, plan)
    store = {w.part_id: sparsify_subgraph(w, 0.3, seed=w.part_id) for w in workers}
    views = [
        GraphView(g, w, assignment=plan.assignment, sparsed_store=store, sharing="sparsified")
        for w in workers
    ]
    return g, split, plan, workers, views


# ---------------------------------------------------------------------------
# positive batches
# ---------------------------------------------------------------------------

def test_positive_batch_covers_each_edge_once_per_epoch():
    g, split, plan, workers, _ = build_setup()
    w = workers[0]
    owned = worker_train_edges(w, split)
    batch_size = 10
    half = batch_size // 2
    num_batches = int(np.ceil(len(owned) / half))
    seen = []
    for b in range(num_batches):
        seen.append(positive_batch(w, split, batch_size, seed=3, batch_index=b, epoch=0))
    seen = np.concatenate(seen)
    assert len(seen) == len(owned)
    assert np.array_equal(np.sort(seen.view("i8,i8"), axis=0), np.sort(owned.view("i8,i8"), axis=0))


def test_positive_batch_small_worker_gets_all_edges():
    g = graph_of([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (4, 5), (4, 6), (5, 6), (0, 4)], 7)
    split = split_edges(g, ratios=(0.8, 0.1, 0.1), seed=1)
    plan = trivial_plan(g)
    w = build_worker_subgraphs(g, plan)[0]
    owned = worker_train_edges(w, split)
    batch = positive_batch(w, split, batch_size=2 * len(owned) + 2, seed=0, batch_index=0)
    assert len(batch) == len(owned)


def test_positive_batch_epochs_reshuffle():
    g, split, plan, workers, _ = build_setup()
    w = workers[0]
    b0 = positive_batch(w, split, 20, seed=5, batch_index=0, epoch=0)
    b1 = positive_batch(w, split, 20, seed=5, batch_index=0, epoch=1)
    assert not np.array_equal(b0, b1)
    again = positive_batch(w, split, 20, seed=5, batch_index=0, epoch=0)
    assert np.array_equal(b0, again)


def test_positive_batch_ownership_rules():
    g = graph_of(
        [(0, 1), (1, 2), (2, 3), (3, 4), (5, 6)] + [(i, i + 5) for i in range(5)], 10
    )
    split = split_edges(g, ratios=(0.8, 0.1, 0.1), seed=0)
    plan_cls = type(trivial_plan(g))
    plan = plan_cls(2, np.array([0, 0, 0, 1, 1, 0, 0, 1, 1, 1]), "manual")
    workers = build_worker_subgraphs(g, plan)
    all_edges = {tuple(e) for e in split.train_pos}
    owned0 = {tuple(e) for e in worker_train_edges(workers[0], split)}
    owned1 = {tuple(e) for e in worker_train_edges(workers[1], split)}
    assert owned0 | owned1 == all_edges
    assert owned0 & owned1 == set()
    for u, v in owned0:
        assert plan.assignment[min(u, v)] == 0
    both0 = worker_train_edges(workers[0], split, require_both=True)
    for u, v in both0:
        assert plan.assignment[u] == 0 and plan.assignment[v] == 0


def test_positive_batch_empty_worker_raises():
    g, split, plan, workers, _ = build_setup()
    empty_split = type(split)(
        train_pos=split.train_pos[:0],
        val_pos=split.val_pos,
        test_pos=split.test_pos,
        val_neg=split.val_neg,
        test_neg=split.test_neg,
    )
    with pytest.raises(NoOwnedTrainEdges):
        positive_batch(workers[0], empty_split, 10, seed=0, batch_index=0)


# ---------------------------------------------------------------------------
# negatives
# ---------------------------------------------------------------------------

def test_negative_per_source_forced_destination():
    # 0 adjacent to everything except 4
    g = graph_of([(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (3, 4), (1, 2)], 5)
    view = GraphView.full(g)
    pairs = negative_per_source(np.array([0]), view, g, seed=1)
    assert pairs.tolist() == [[0, 4]]


def test_negative_per_source_never_an_edge():
    g = generate_synthetic("erdos_renyi", {"n": 60, "p": 0.2}, 2, seed=2)
    view = GraphView.full(g)
    sources = np.arange(g.num_nodes)
    pairs = negative_per_source(sources, view, g, seed=3)
    for u, v in pairs:
        assert u != v
        assert not g.has_edge(int(u), int(v))


def test_negative_per_source_uniform_on_cycle():
    # 5-cycle: each node has exactly two non-neighbors
    g = graph_of([(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)], 5)
    view = GraphView.full(g)
    pairs = negative_per_source(np.zeros(10000, dtype=np.int64), view, g, seed=4)
    counts = np.bincount(pairs[:, 1], minlength=5)
    assert counts[0] == counts[1] == counts[4] == 0
    freq = counts[2] / 10000
    assert abs(freq - 0.5) < 0.03


def test_negative_per_source_local_only_pool():
    g, split, plan, workers, views = build_setup(parts=2)
    sources = workers[0].owned_nodes[:20]
    pairs = negative_per_source(sources, views[0], g, seed=5, local_only=True)
    owned = set(workers[0].owned_nodes.tolist())
    for u, v in pairs:
        assert int(v) in owned
        assert not g.has_edge(int(u), int(v))


def test_negative_per_source_full_space_coverage():
    # destinations must reach every partition of a 4-part, 200-node graph
    g = generate_synthetic("erdos_renyi", {"n": 200, "p": 0.05}, 2, seed=6)
    plan = partition_greedy(g, 4, seed=0)
    workers = build_worker_subgraphs(g, plan)
    view = GraphView(g, workers[0], assignment=plan.assignment, sharing="complete")
    sources = np.resize(workers[0].owned_nodes, 10000)
    pairs = negative_per_source(sources, view, g, seed=7)
    dest_parts = set(plan.assignment[pairs[:, 1]].tolist())
    assert dest_parts == {0, 1, 2, 3}


def test_negative_global_uniform_examples():
    k4 = graph_of([(a, b) for a in range(4) for b in range(a + 1, 4)], 4)
    with pytest.raises(ValueError):
        negative_global_uniform(k4, 1, seed=0)
    p3 = graph_of([(0, 1), (1, 2)], 3)
    pairs = negative_global_uniform(p3, 1, seed=0)
    assert pairs.tolist() == [[0, 2]]
    g = generate_synthetic("erdos_renyi", {"n": 100, "p": 0.1}, 2, seed=1)
    pairs = negative_global_uniform(g, 1000, seed=2)
    assert len(np.unique(pairs, axis=0)) == 1000
    for u, v in pairs:
        assert u != v and not g.has_edge(int(u), int(v))


# ---------------------------------------------------------------------------
# graph views
# ---------------------------------------------------------------------------

def test_view_owned_nodes_resolve_full_lists():
    g, split, plan, workers, views = build_setup()
    w, view = workers[0], views[0]
    for u in w.owned_nodes[:15]:
        nbrs, wts, remote = view.resolve(int(u))
        assert not remote
        assert np.array_equal(np.sort(nbrs), g.neighbors(int(u)))
        assert (wts == 1.0).all()


def test_view_remote_resolution_subset_of_full():
    g, split, plan, workers, views = build_setup()
    w, view = workers[0], views[0]
    other = np.flatnonzero(plan.assignment != w.part_id)
    for u in other[:25]:
        nbrs, wts, remote = view.resolve(int(u))
        assert remote
        full = set(g.neighbors(int(u)).tolist())
        assert set(nbrs.tolist()) <= full


def test_view_sharing_none_halo_rows():
    g, split, plan, workers, _ = build_setup()
    w = workers[0]
    view = GraphView(g, w, assignment=plan.assignment, sharing="none")
    for u in w.halo_nodes[:10]:
        nbrs, _, remote = view.resolve(int(u))
        assert not remote
        assert set(nbrs.tolist()) <= set(g.neighbors(int(u)).tolist())
        assert (plan.assignment[nbrs] == w.part_id).all()
    outsider = [
        u for u in range(g.num_nodes)
        if plan.assignment[u] != w.part_id and int(u) not in set(w.halo_nodes.tolist())
    ][0]
    nbrs, _, remote = view.resolve(outsider)
    assert len(nbrs) == 0 and not remote


def test_view_no_halo_filters_owned_rows():
    g, split, plan, workers, _ = build_setup()
    w = workers[0]
    view = GraphView(g, w, assignment=plan.assignment, sharing="none", full_neighbor_halo=False)
    for u in w.owned_nodes[:15]:
        nbrs, _, _ = view.resolve(int(u))
        assert (plan.assignment[nbrs] == w.part_id).all()
    assert not view.feature_local(int(w.halo_nodes[0])) if len(w.halo_nodes) else True


# ---------------------------------------------------------------------------
# computation graphs
# ---------------------------------------------------------------------------

def test_cg_fanout_exceeding_degree_takes_all():
    g = graph_of([(0, 1), (0, 2), (0, 3)], 4)
    view = GraphView.full(g)
    cg = build_computation_graph(np.array([0]), view, (25,), seed=0)
    assert len(cg.layers[1]) == 3
    assert cg.remote_edge_count == 0
    assert len(cg.remote_nodes) == 0


def test_cg_layer_size_caps():
    g = generate_synthetic("erdos_renyi", {"n": 300, "p": 0.4}, 2, seed=3)
    view = GraphView.full(g)
    cg = build_computation_graph(np.array([0]), view, (25, 10, 5), seed=1)
    caps = [1, 25, 250, 1250]
    for layer, cap in zip(cg.layers, caps):
        assert len(layer) <= cap
    counts = np.bincount(cg.edge_parent, minlength=cg.num_nodes)
    assert counts.max() <= 25


def test_cg_per_layer_fanout_bound():
    g = generate_synthetic("erdos_renyi", {"n": 120, "p": 0.3}, 2, seed=4)
    view = GraphView.full(g)
    fanouts = (7, 3)
    cg = build_computation_graph(np.arange(5), view, fanouts, seed=2)
    for hop, fanout in enumerate(fanouts, start=1):
        mask = cg.edge_hop == hop
        if mask.any():
            per_parent = np.bincount(cg.edge_parent[mask])
            assert per_parent.max() <= fanout


def test_cg_layer_membership_invariant():
    g = generate_synthetic("erdos_renyi", {"n": 80, "p": 0.15}, 2, seed=5)
    view = GraphView.full(g)
    cg = build_computation_graph(np.arange(4), view, (4, 3), seed=3)
    for hop in (1, 2):
        mask = cg.edge_hop == hop
        parents = set(cg.edge_parent[mask].tolist())
        prev_layer = {cg.node_index[int(u)] for u in cg.layers[hop - 1]}
        assert parents <= prev_layer
        children = {int(cg.nodes[i]) for i in set(cg.edge_child[mask].tolist())}
        assert children <= set(cg.layers[hop].tolist())


def test_cg_remote_sparse_seed_contribution():
    g, split, plan, workers, views = build_setup(parts=2)
    view = views[0]
    remote_nodes = np.flatnonzero(plan.assignment != 0)
    store = view.sparsed_store[1]
    target = None
    for u in remote_nodes:
        nbrs, _ = store.neighbors(int(u))
        full_deg = len(g.neighbors(int(u)))
        if 1 <= len(nbrs) < full_deg:
            target = int(u)
            break
    assert target is not None
    cg = build_computation_graph(np.array([target]), view, (25,), seed=4)
    sparsed_deg = len(store.neighbors(target)[0])
    assert len(cg.layers[1]) <= sparsed_deg
    full_view = GraphView.full(g)
    cg_full = build_computation_graph(np.array([target]), full_view, (25,), seed=4)
    assert len(cg_full.layers[1]) == min(25, len(g.neighbors(target)))
    assert len(cg.layers[1]) < len(cg_full.layers[1])


def test_cg_determinism():
    g, split, plan, workers, views = build_setup()
    seeds = workers[0].owned_nodes[:6]
    a = build_computation_graph(seeds, views[0], (5, 3), seed=9)
    b = build_computation_graph(seeds, views[0], (5, 3), seed=9)
    assert np.array_equal(a.nodes, b.nodes)
    assert np.array_equal(a.edge_parent, b.edge_parent)
    assert np.array_equal(a.edge_child, b.edge_child)
    assert np.array_equal(a.edge_weight, b.edge_weight)


def test_cg_remote_bookkeeping():
    g, split, plan, workers, views = build_setup(parts=2)
    w, view = workers[0], views[0]
    seeds = np.concatenate([w.owned_nodes[:3], np.flatnonzero(plan.assignment != 0)[:3]])
    cg = build_computation_graph(seeds, view, (6, 4), seed=5)
    local_set = set(w.owned_nodes.tolist()) | set(w.halo_nodes.tolist())
    expected_remote = sorted(int(u) for u in cg.nodes if int(u) not in local_set)
    assert sorted(cg.remote_nodes.tolist()) == expected_remote
    # remotely-resolved expansions are exactly those whose parent is unowned
    owned = set(w.owned_nodes.tolist())
    expected_edges = sum(
        1 for p in cg.edge_parent if int(cg.nodes[p]) not in owned
    )
    assert cg.remote_edge_count == expected_edges


def test_batch_dump(tmp_path):
    from sparselink.sampling import Batch, dump_batch

    batch = Batch(
        pairs=np.array([[0, 1], [2, 5]]),
        labels=np.array([1.0, 0.0]),
        worker_id=3,
        batch_index=7,
    )
    path = tmp_path / "batch.csv"
    dump_batch(batch, str(path))
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "u,v,label,worker,batch"
    assert rows[1] == "0,1,1,3,7"
    assert rows[2] == "2,5,0,3,7"
