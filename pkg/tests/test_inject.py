import numpy as np
import pytest

from adgcl.errors import ParameterError
from adgcl.graph_core import build_graph
from adgcl.inject import inject_anomalies, inject_feature, inject_structural
from oracles import random_graph


def test_single_pair_clique(rng):
    g = build_graph([], np.zeros((4, 1)))
    g2, nodes = inject_structural(g, 2, 1, rng)
    assert g2.num_edges == 1 and len(nodes) == 2


def test_two_triangles(rng):
    g = build_graph([], np.zeros((10, 1)))
    g2, nodes = inject_structural(g, 3, 2, rng)
    assert len(set(nodes.tolist())) == 6 and g2.num_edges == 6
    for clique in (nodes[:3], nodes[3:]):
        for a in clique:
            assert set(clique.tolist()) - {a} <= set(g2.neighbors(a).tolist())


@pytest.mark.parametrize("p,q", [(1, 1), (4, 3)])
def test_structural_errors(p, q, rng):
    with pytest.raises(ParameterError):
        inject_structural(build_graph([], np.zeros((10, 1))), p, q, rng)


def test_structural_keeps_edges(rng):
    g = random_graph(rng, 40, 0.1)
    g2, nodes = inject_structural(g, 5, 3, rng)
    old = {tuple(e) for e in g.edge_array().tolist()}
    new = {tuple(e) for e in g2.edge_array().tolist()}
    assert old <= new
    assert np.all(g2.degrees >= g.degrees)
    added = new - old
    member = set(nodes.tolist())
    assert all(a in member and b in member for a, b in added)


def test_feature_single_candidate(rng):
    x = np.arange(6.0).reshape(3, 2)
    g = build_graph([], x)
    g2, targets = inject_feature(g, 1, 2, rng)
    v = targets[0]
    others = [i for i in range(3) if i != v]
    far = max(others, key=lambda j: np.linalg.norm(x[j] - x[v]))
    assert np.array_equal(g2.features[v], x[far])


def test_feature_farthest_of_all():
    x = np.array([[0.0], [1.0], [5.0], [9.0]])
    g = build_graph([], x)
    for seed in range(30):
        g2, targets = inject_feature(g, 1, 3, seed)
        if targets[0] == 0:
            assert g2.features[0, 0] == 9.0
            break
    else:
        pytest.fail("node 0 never chosen")


def test_feature_identical_rows(rng):
    g = build_graph([(0, 1)], np.ones((5, 2)))
    g2, targets = inject_feature(g, 2, 3, rng)
    assert len(targets) == 2 and np.array_equal(g2.features, g.features)


def test_feature_too_many(rng):
    g = build_graph([], np.zeros((5, 1)))
    with pytest.raises(ParameterError):
        inject_feature(g, 4, 2, rng, exclude=[0, 1])


def test_feature_uses_original_rows(rng):
    g = random_graph(rng, 30)
    g2, targets = inject_feature(g, 15, 10, rng)
    orig = {tuple(r) for r in g.features.tolist()}
    assert all(tuple(g2.features[t]) in orig for t in targets)
    changed = np.flatnonzero(np.any(g2.features != g.features, axis=1))
    assert set(changed.tolist()) <= set(targets.tolist())
    assert np.array_equal(g2.row_offsets, g.row_offsets)


def test_inject_anomalies_labels(rng):
    g = random_graph(rng, 200, 0.02)
    g2, labels, kinds = inject_anomalies(g, 5, 3, k_candidates=20, rng=rng)
    assert (kinds == "structural").sum() == 15 and (kinds == "feature").sum() == 15
    assert labels.sum() == 30 and np.array_equal(labels == 1, kinds != "none")


def test_inject_deterministic():
    g = random_graph(np.random.default_rng(0), 100, 0.05)
    a = inject_anomalies(g, 4, 2, k_candidates=10, rng=5)
    b = inject_anomalies(g, 4, 2, k_candidates=10, rng=5)
    assert a[0].same_as(b[0]) and np.array_equal(a[1], b[1])


def test_cora_rate():
    # 2 * 15 * 5 planted anomalies on 2708 nodes
    g = build_graph([], np.random.default_rng(0).random((2708, 3)))
    _, labels, _ = inject_anomalies(g, 15, 5, rng=0)
    assert labels.sum() == 150 and round(100 * labels.mean(), 1) == 5.5
