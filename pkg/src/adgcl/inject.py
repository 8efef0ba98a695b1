"""Benchmark anomaly injection: dense cliques and feature swaps."""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .graph_core import AttributedGraph, build_graph

DEFAULT_CLIQUE_SIZE = 15
DEFAULT_K_CANDIDATES = 50


def inject_structural(g: AttributedGraph, p: int, q: int, rng=None, exclude=()):
    """Plant ``q`` disjoint cliques of ``p`` randomly chosen nodes.

    Existing edges are kept, missing clique edges are added. Nodes listed in
    ``exclude`` (already anomalous) are never chosen.

    Returns
    -------
    graph : AttributedGraph
    nodes : ndarray
        The ``p * q`` clique members, clique by clique.
    """
    if p < 2:
        raise ParameterError(f"clique size must be >= 2, got {p}")
    if q < 0:
        raise ParameterError(f"clique count must be >= 0, got {q}")
    rng = np.random.default_rng(rng)
    excluded = np.zeros(g.n, dtype=bool)
    excluded[np.asarray(list(exclude), dtype=np.int64)] = True
    if p * q > g.n - excluded.sum():
        raise ParameterError(f"cannot place {q} cliques of size {p} in {g.n} nodes")
    new_edges = []
    chosen = []
    for _ in range(q):
        pool = np.flatnonzero(~excluded)
        members = rng.choice(pool, size=p, replace=False)
        excluded[members] = True
        chosen.append(members)
        iu, ju = np.triu_indices(p, k=1)
        new_edges.append(np.column_stack([members[iu], members[ju]]))
    nodes = np.concatenate(chosen) if chosen else np.zeros(0, dtype=np.int64)
    if not new_edges:
        return g, nodes
    edges = np.vstack([g.edge_array()] + new_edges)
    return build_graph(edges, g.features), nodes


def inject_feature(g: AttributedGraph, count: int, k_candidates: int = DEFAULT_K_CANDIDATES,
                   rng=None, exclude=()):
    """Overwrite the attributes of ``count`` nodes with distant ones.

    For each target, ``k_candidates`` other nodes are sampled without
    replacement and the target takes the pre-injection feature row of the
    candidate farthest from it in Euclidean distance.
    """
    if count < 0:
        raise ParameterError("feature anomaly count must be >= 0")
    if k_candidates < 1:
        raise ParameterError("k_candidates must be >= 1")
    if k_candidates > g.n - 1:
        raise ParameterError(f"k_candidates={k_candidates} exceeds the {g.n - 1} other nodes")
    rng = np.random.default_rng(rng)
    excluded = np.zeros(g.n, dtype=bool)
    excluded[np.asarray(list(exclude), dtype=np.int64)] = True
    clean = np.flatnonzero(~excluded)
    if count > len(clean):
        raise ParameterError(f"only {len(clean)} clean nodes for {count} feature anomalies")
    original = g.features
    x = original.copy()
    targets = rng.choice(clean, size=count, replace=False)
    for v in targets:
        others = rng.choice(g.n - 1, size=k_candidates, replace=False)
        others = others + (others >= v)
        dist = np.linalg.norm(original[others] - original[v], axis=1)
        x[v] = original[others[np.argmax(dist)]]
    return g.with_features(x), targets


def inject_anomalies(g: AttributedGraph, clique_size=DEFAULT_CLIQUE_SIZE, clique_count=5,
                     feature_count=None, k_candidates=DEFAULT_K_CANDIDATES, rng=None):
    """Structural cliques first, then feature anomalies on untouched nodes.

    ``feature_count`` defaults to ``clique_size * clique_count`` so both kinds
    are equally represented.

    Returns ``(graph, labels, kinds)`` with ``kinds`` drawn from
    {"none", "structural", "feature"}.
    """
    rng = np.random.default_rng(rng)
    if feature_count is None:
        feature_count = clique_size * clique_count
    g1, structural = inject_structural(g, clique_size, clique_count, rng)
    g2, feature = inject_feature(g1, feature_count, k_candidates, rng, exclude=structural)
    labels = np.zeros(g.n, dtype=np.int64)
    kinds = np.full(g.n, "none", dtype=object)
    labels[structural] = 1
    kinds[structural] = "structural"
    labels[feature] = 1
    kinds[feature] = "feature"
    return g2, labels, kinds
