import numpy as np
import pytest
from scipy.special import expit

from adgcl.errors import ContractError
from adgcl.graph_core import build_graph, normalized_adjacency
from adgcl.model import (ModelParams, discriminate, encode, forward_view, init_params, readout)
from oracles import random_graph


def test_zero_weights_zero_embeddings(triangle):
    p = ModelParams([np.zeros((3, 4))], np.eye(4))
    h, _ = encode(triangle, p)
    assert not h.any()


def test_isolated_node_encoding():
    x = np.array([[1.0, -2.0]])
    w = np.array([[1.0, 2.0], [0.5, -1.0]])
    h, _ = encode(build_graph([], x), ModelParams([w], np.eye(2)))
    assert np.array_equal(h, np.maximum(x @ w, 0))


def test_two_node_encoding():
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    w = np.array([[0.5, -1.0, 2.0], [1.0, 0.25, -0.5]])
    g = build_graph([(0, 1)], x)
    h, pre = encode(g, ModelParams([w], np.eye(3)))
    a = np.full((2, 2), 0.5)
    assert np.allclose(pre[0], a @ x @ w, atol=1e-12)
    assert np.allclose(h, np.maximum(a @ x @ w, 0), atol=1e-12)


def test_dimension_mismatch(triangle):
    with pytest.raises(ContractError):
        encode(triangle, init_params(5, 2, 0))


def test_readout_examples():
    h = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(readout(h, [{1}]), [[0.0, 1.0]])
    assert np.array_equal(readout(h, [[0, 2]]), [[1.0, 0.0]])
    assert np.array_equal(readout(h, [[0, 1]]), [[0.5, 0.5]])
    with pytest.raises(ContractError):
        readout(h, [set()])


def test_discriminate_examples(rng):
    a, b = rng.normal(size=3), rng.normal(size=3)
    assert discriminate(a, b, np.zeros((3, 3))) == 0.5
    e = np.array([1.0, 0.0])
    assert discriminate(e, e, np.eye(2)) == pytest.approx(0.7310585786, abs=1e-10)
    w = np.array([[1.0, -0.5], [0.25, 0.1]])
    hand = 1 * (1 * 3 + -0.5 * 4) + 2 * (0.25 * 3 + 0.1 * 4)
    assert discriminate([1, 2], [3, 4], w) == pytest.approx(expit(hand), abs=1e-12)
    w = rng.normal(size=(3, 3))
    assert discriminate(a, b, w) == pytest.approx(discriminate(b, a, w.T), abs=1e-15)


def test_forward_view_contract(rng):
    g = random_graph(rng, 20, 0.2)
    p = init_params(g.f, 6, 1)
    t = forward_view(g, p, 3)
    assert np.all((t.pos_scores > 0) & (t.pos_scores < 1))
    assert np.all(t.sample.neg_nodes != np.arange(20))
    sets, neg = t.pair_assignment
    assert np.allclose(t.neighbor_reprs, readout(t.embeddings, sets))
    for i in range(20):
        s_p = discriminate(t.neighbor_reprs[i], t.embeddings[i], p)
        s_n = discriminate(t.neighbor_reprs[neg[i]], t.embeddings[i], p)
        assert t.pos_scores[i] == pytest.approx(s_p, abs=1e-12)
        assert t.neg_scores[i] == pytest.approx(s_n, abs=1e-12)
    again = forward_view(g, p, 3)
    assert np.array_equal(again.pos_scores, t.pos_scores)
    assert np.array_equal(again.neg_scores, t.neg_scores)


def test_two_node_negatives():
    g = build_graph([(0, 1)], np.eye(2))
    t = forward_view(g, init_params(2, 2, 0), 0)
    assert t.sample.neg_nodes.tolist() == [1, 0]


def test_mask_anchor_removes_own_features(rng):
    g = random_graph(rng, 12, 0.4)
    p = init_params(g.f, 4, 2)
    t = forward_view(g, p, 5, type("C", (), {"mask_anchor": True})())
    a = normalized_adjacency(g).toarray()
    x = g.features
    for i in range(12):
        members = t.sample.members[i, :t.sample.counts[i]]
        xm = x.copy()
        xm[i] = 0
        h_masked = np.maximum(a @ xm @ p.w_gcn, 0)
        assert np.allclose(t.neighbor_reprs[i], h_masked[members].mean(axis=0), atol=1e-12)


def test_permutation_equivariance(rng):
    g = random_graph(rng, 10, 0.3)
    perm = rng.permutation(10)
    inv = np.argsort(perm)
    edges = inv[g.edge_array()]
    g2 = build_graph(edges, g.features[perm])
    p = init_params(g.f, 5, 0)
    h, _ = encode(g, p)
    h2, _ = encode(g2, p)
    assert np.allclose(h2, h[perm], atol=1e-12)


def test_init_params():
    p = init_params(7, 5, 0)
    assert np.all(np.abs(p.w_gcn) <= np.sqrt(6 / 12))
    assert p.equals(init_params(7, 5, 0))
    big = init_params(1000, 1000, 1).w_gcn
    sigma = np.sqrt(6 / 2000) / np.sqrt(3)
    assert abs(big.mean()) < 3 * sigma / np.sqrt(big.size)
    assert not any(m.any() for m in p.m + p.v) and p.step == 0
