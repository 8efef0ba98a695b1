"""Cora-shaped synthetic citation graphs for offline experiments.

Degrees follow a heavy-tailed (Pareto) propensity, edges are mostly
intra-class, and features are binary bag-of-words rows drawn from
class-specific topic vocabularies. The defaults match Cora's size: 2708
nodes, 1433 attributes, 7 classes and about 5.3k undirected edges.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .graph_core import build_graph


def cora_like(n=2708, f=1433, classes=7, edges=5278, homophily=0.81, words_per_node=18,
              topic_words=60, topic_share=0.8, pareto_shape=1.6, rng=None):
    """Generate a homophilous power-law attributed graph.

    Parameters
    ----------
    n, f, classes, edges : int
        Node, attribute, class and target undirected-edge counts.
    homophily : float
        Probability that an edge's second endpoint shares the first one's class.
    words_per_node : int
        Mean number of active attributes per node.
    topic_words : int
        Size of each class's preferred vocabulary.
    topic_share : float
        Fraction of a node's words taken from its class vocabulary.
    pareto_shape : float
        Tail index of the degree propensity; smaller means heavier tails.

    Returns
    -------
    graph : AttributedGraph
    classes : ndarray of int
    """
    if n < 2 or f < 1 or classes < 1 or edges < 1:
        raise ParameterError("n >= 2, f >= 1, classes >= 1 and edges >= 1 required")
    if not 0 <= homophily <= 1 or not 0 <= topic_share <= 1:
        raise ParameterError("homophily and topic_share must lie in [0, 1]")
    rng = np.random.default_rng(rng)
    y = rng.integers(classes, size=n)
    theta = rng.pareto(pareto_shape, size=n) + 1.0
    by_class = [np.flatnonzero(y == c) for c in range(classes)]
    p_all = theta / theta.sum()
    p_cls = [theta[idx] / theta[idx].sum() for idx in by_class]

    pairs = set()
    budget = 20 * edges
    while len(pairs) < edges and budget > 0:
        budget -= 1
        u = int(rng.choice(n, p=p_all))
        members = by_class[y[u]]
        if rng.random() < homophily and len(members) > 1:
            v = int(members[rng.choice(len(members), p=p_cls[y[u]])])
        else:
            v = int(rng.choice(n, p=p_all))
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    # no isolated nodes: attach each to a same-class partner
    deg = np.zeros(n, dtype=np.int64)
    for u, v in pairs:
        deg[u] += 1
        deg[v] += 1
    for u in np.flatnonzero(deg == 0):
        members = by_class[y[u]]
        pool = members[members != u] if len(members) > 1 else np.delete(np.arange(n), u)
        v = int(rng.choice(pool))
        pairs.add((min(u, v), max(u, v)))

    topic = [rng.choice(f, size=min(topic_words, f), replace=False) for _ in range(classes)]
    x = np.zeros((n, f))
    for i in range(n):
        k = max(1, rng.poisson(words_per_node))
        k_topic = rng.binomial(k, topic_share)
        words = np.r_[rng.choice(topic[y[i]], size=min(k_topic, len(topic[y[i]])), replace=False),
                      rng.choice(f, size=k - k_topic, replace=False)]
        x[i, words] = 1.0
    edge_arr = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return build_graph(edge_arr, x, n), y
