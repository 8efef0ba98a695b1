"""Structure-imbalance augmentations: neighbor pruning and neighbor completion.

Head nodes (degree > K) are pruned to K feature-similar neighbors, which turns
them into forged tail nodes. Tail nodes get their neighborhood enlarged by
mixing their ego network with that of an auxiliary node chosen by joint
feature and anomaly-score similarity.

All sampling without replacement uses exponential keys (Efraimidis-Spirakis):
item ``i`` gets key ``log(U_i) / w_i`` and items are taken in decreasing key
order, which reproduces sequential draws proportional to ``w``. Zero-weight
items receive key ``-inf`` and are ordered uniformly at random behind every
positive-weight item.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ContractError
from .graph_core import AttributedGraph, DegreePartition, build_graph

# dense n x n similarity caches above this node count are computed in chunks
DENSE_SIMILARITY_LIMIT = 6000
CHUNK_ROWS = 1024


def successive_order(weights, rng) -> np.ndarray:
    """Order in which items would be drawn without replacement, p ∝ weights."""
    w = np.asarray(weights, dtype=np.float64)
    u = rng.random(len(w))
    tie = rng.random(len(w))
    with np.errstate(divide="ignore"):
        key = np.where(w > 0, np.log(u) / np.where(w > 0, w, 1.0), -np.inf)
    return np.lexsort((tie, -key))


class ScoreWindow:
    """Per-node discriminator scores of the last ``w`` epochs.

    Row ``v`` reads ``[s_p^(t-w+1), s_n^(t-w+1), ..., s_p^t, s_n^t]``; a push
    shifts everything two columns left, so unfilled epochs stay zero at the
    front of the row.
    """

    def __init__(self, n: int, w: int, window=None, filled_epochs: int = 0):
        if w < 1:
            raise ContractError("window length must be >= 1")
        self.n = n
        self.w = w
        self.window = np.zeros((n, 2 * w)) if window is None else np.array(window, dtype=float)
        if self.window.shape != (n, 2 * w):
            raise ContractError(f"window must have shape {(n, 2 * w)}")
        self.filled_epochs = int(filled_epochs)

    def __repr__(self):
        return f"ScoreWindow(n={self.n}, w={self.w}, filled_epochs={self.filled_epochs})"

    def copy(self) -> "ScoreWindow":
        return ScoreWindow(self.n, self.w, self.window.copy(), self.filled_epochs)

    def require_filled(self):
        if self.filled_epochs < 1:
            raise ContractError("score window is empty; push at least one epoch first")


def update_score_window(sw: ScoreWindow, epoch_pos, epoch_neg) -> ScoreWindow:
    pos = np.asarray(epoch_pos, dtype=np.float64).reshape(-1)
    neg = np.asarray(epoch_neg, dtype=np.float64).reshape(-1)
    if len(pos) != sw.n or len(neg) != sw.n:
        raise ContractError(f"expected score vectors of length {sw.n}")
    if not (np.isfinite(pos).all() and np.isfinite(neg).all()):
        raise ContractError("score vectors must be finite")
    out = sw.copy()
    out.window[:, :-2] = sw.window[:, 2:]
    out.window[:, -2] = pos
    out.window[:, -1] = neg
    out.filled_epochs = min(sw.filled_epochs + 1, sw.w)
    return out


def anomaly_similarity(sw: ScoreWindow, u: int, v: int) -> float:
    sw.require_filled()
    return float(sw.window[u] @ sw.window[v])


@dataclass
class MixupNeighborhood:
    """Result of completing one tail node.

    ``support`` and ``distribution`` describe the blended neighbor
    distribution; ``draw_order`` lists the support nodes in the order they
    were drawn (draws that hit an original neighbor count as draws but add
    nothing new); ``sampled_neighbors`` is the final neighbor set, always a
    superset of the original one.
    """

    anchor: int
    auxiliary: int
    phi: float
    support: np.ndarray
    distribution: np.ndarray
    draw_order: np.ndarray
    sampled_neighbors: np.ndarray
    target_degree: int


class Augmenter:
    """Caches shared by the pruning and completion samplers of one graph.

    Parameters
    ----------
    g : AttributedGraph
        The original (unaugmented) graph.
    partition : DegreePartition
    normalized_features : ndarray, shape (n, f)
        Row-normalized attributes; cosine similarity is then a dot product.
    """

    def __init__(self, g: AttributedGraph, partition: DegreePartition, normalized_features):
        self.g = g
        self.partition = partition
        self.k = partition.k_threshold
        xn = np.asarray(normalized_features, dtype=np.float64)
        if xn.shape[0] != g.n:
            raise ContractError("normalized_features must have one row per node")
        # bag-of-words style inputs are mostly zeros; sparse products are far cheaper
        self._xn = sp.csr_matrix(xn) if np.count_nonzero(xn) < 0.1 * xn.size else xn
        self._dense_sim = None
        if g.n <= DENSE_SIMILARITY_LIMIT:
            self._dense_sim = self._compute_sim_rows(np.arange(g.n))
        self.is_tail = partition.is_tail(g.n)
        rows = np.repeat(np.arange(g.n), g.degrees)
        self._entry_rows = rows
        self.edge_sim = self._edge_similarity(rows, g.col_indices)

    def _compute_sim_rows(self, rows):
        block = self._xn[rows] @ self._xn.T
        block = block.toarray() if sp.issparse(block) else np.asarray(block)
        block = np.maximum(block, 0.0)
        block[np.arange(len(rows)), rows] = 0.0
        return block

    def sim_rows(self, rows) -> np.ndarray:
        """Floored cosine similarity of ``rows`` against every node."""
        rows = np.asarray(rows, dtype=np.int64)
        if self._dense_sim is not None:
            return self._dense_sim[rows]
        return self._compute_sim_rows(rows)

    def _edge_similarity(self, rows, cols):
        if self._dense_sim is not None:
            return self._dense_sim[rows, cols]
        out = np.empty(len(rows))
        for start in range(0, len(rows), 4 * CHUNK_ROWS):
            r = rows[start:start + 4 * CHUNK_ROWS]
            c = cols[start:start + 4 * CHUNK_ROWS]
            a, b = self._xn[r], self._xn[c]
            prod = a.multiply(b).sum(axis=1) if sp.issparse(a) else (a * b).sum(axis=1)
            out[start:start + len(r)] = np.asarray(prod).reshape(-1)
        return np.maximum(out, 0.0)

    # -- neighbor pruning ---------------------------------------------------

    def prune_weights(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbors of ``u`` and their (unnormalized) pruning weights."""
        lo, hi = self.g.row_offsets[u], self.g.row_offsets[u + 1]
        nbrs = self.g.col_indices[lo:hi]
        return nbrs, self.edge_sim[lo:hi] / max(len(nbrs), 1)

    def _retained_entries(self, heads, rng):
        """Boolean mask over CSR entries: True where a head row keeps the entry."""
        g = self.g
        heads = np.asarray(heads, dtype=np.int64)
        is_src = np.zeros(g.n, dtype=bool)
        is_src[heads] = True
        sel = np.flatnonzero(is_src[self._entry_rows])
        rows = self._entry_rows[sel]
        w = self.edge_sim[sel]
        u = rng.random(len(sel))
        tie = rng.random(len(sel))
        with np.errstate(divide="ignore"):
            key = np.where(w > 0, np.log(u) / np.where(w > 0, w, 1.0), -np.inf)
        order = np.lexsort((tie, -key, rows))
        sorted_rows = rows[order]
        starts = np.searchsorted(sorted_rows, sorted_rows, side="left")
        rank = np.arange(len(order)) - starts
        keep = np.zeros(len(g.col_indices), dtype=bool)
        keep[sel[order[rank < self.k]]] = True
        return keep

    def prune_node(self, u: int, rng) -> np.ndarray:
        if self.g.degrees[u] <= self.k:
            raise ContractError(f"node {u} has degree {self.g.degrees[u]} <= K={self.k}; not a head node")
        keep = self._retained_entries([u], rng)
        lo, hi = self.g.row_offsets[u], self.g.row_offsets[u + 1]
        return np.sort(self.g.col_indices[lo:hi][keep[lo:hi]])

    def pruned_view(self, rng) -> AttributedGraph:
        """Every head node keeps K sampled neighbors; tail-tail edges stay.

        An edge touching a head node survives when at least one head endpoint
        sampled it.
        """
        g = self.g
        rng = np.random.default_rng(rng)
        if len(self.partition.head_nodes) == 0:
            return g
        keep = self._retained_entries(self.partition.head_nodes, rng)
        rows, cols = self._entry_rows, g.col_indices
        keep |= self.is_tail[rows] & self.is_tail[cols]
        return build_graph(np.column_stack([rows[keep], cols[keep]]), g.features)

    # -- neighbor completion ------------------------------------------------

    def completion_weights(self, sw: ScoreWindow, rows) -> np.ndarray:
        """p_nc(.|v) for each v in ``rows``: floored cosine times score overlap."""
        rows = np.asarray(rows, dtype=np.int64)
        ano = sw.window[rows] @ sw.window.T
        return self.sim_rows(rows) * ano

    def _auxiliary_from_weights(self, weights, v, rng):
        total = weights.sum()
        n = len(weights)
        if total > 0:
            cdf = np.cumsum(weights)
            a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            a = min(a, n - 1)
            while weights[a] <= 0:  # guard against landing on a flat cdf step
                a -= 1
            return a
        a = int(rng.integers(n - 1))
        return a + (a >= v)

    def sample_auxiliary(self, sw: ScoreWindow, v: int, rng) -> int:
        sw.require_filled()
        weights = self.completion_weights(sw, [v])[0]
        return self._auxiliary_from_weights(weights, v, rng)

    def _term(self, sw, center, exclude):
        """Renormalized p(.|c) * p_nc(.|c) over the neighbors of ``c``."""
        nbrs = self.g.neighbors(center)
        nbrs = nbrs[nbrs != exclude]
        if len(nbrs) == 0:
            return nbrs, np.zeros(0)
        w = self.sim_rows([center])[0][nbrs] * (sw.window[nbrs] @ sw.window[center])
        total = w.sum()
        if total > 0:
            return nbrs, w / total
        return nbrs, np.full(len(nbrs), 1.0 / len(nbrs))

    def complete_node(self, v: int, sw: ScoreWindow, rng, degree_sampler=None,
                      weights=None) -> MixupNeighborhood:
        sw.require_filled()
        g = self.g
        if weights is None:
            weights = self.completion_weights(sw, [v])[0]
        a = self._auxiliary_from_weights(weights, v, rng)
        peak = weights.max()
        phi = 0.5 * weights[a] / peak if peak > 0 else 0.25
        phi = float(min(max(phi, np.finfo(float).tiny), 0.5))

        own, p_own = self._term(sw, v, exclude=-1)
        aux, p_aux = self._term(sw, a, exclude=v)
        if len(aux) == 0:
            # an isolated auxiliary contributes its own ego center
            aux, p_aux = np.array([a]), np.ones(1)
        if len(own) == 0:
            support, dist = aux, p_aux
        else:
            support = np.union1d(own, aux)
            dist = np.zeros(len(support))
            dist[np.searchsorted(support, own)] += (1.0 - phi) * p_own
            dist[np.searchsorted(support, aux)] += phi * p_aux
        order_all = successive_order(dist, rng)
        order_all = order_all[dist[order_all] > 0]

        drawn_degree = int(degree_sampler(rng)) if degree_sampler else int(
            g.degrees[rng.integers(g.n)])
        reachable = len(np.union1d(own, support[order_all]))
        target = min(max(drawn_degree, len(own)), reachable)
        chosen = set(int(x) for x in own)
        drawn = []
        for idx in order_all:
            if len(chosen) >= target:
                break
            drawn.append(support[idx])
            chosen.add(int(support[idx]))
        draw_order = np.array(drawn, dtype=np.int64)
        return MixupNeighborhood(v, a, phi, support, dist, draw_order,
                                 np.array(sorted(chosen), dtype=np.int64), target)

    def completed_view(self, sw: ScoreWindow, rng, degree_sampler=None,
                       record=None) -> AttributedGraph:
        """Replace every tail node's neighborhood with its completed one."""
        sw.require_filled()
        g = self.g
        rng = np.random.default_rng(rng)
        tails = self.partition.tail_nodes
        if len(tails) == 0:
            return g
        new_pairs = []
        for start in range(0, len(tails), CHUNK_ROWS):
            chunk = tails[start:start + CHUNK_ROWS]
            block = self.completion_weights(sw, chunk)
            for i, v in enumerate(chunk):
                mix = self.complete_node(int(v), sw, rng, degree_sampler, weights=block[i])
                if record is not None:
                    record.append(mix)
                if len(mix.sampled_neighbors):
                    new_pairs.append(np.column_stack(
                        [np.full(len(mix.sampled_neighbors), v), mix.sampled_neighbors]))
        edges = np.vstack([g.edge_array()] + new_pairs) if new_pairs else g.edge_array()
        return build_graph(edges, g.features)


# -- functional entry points -------------------------------------------------

def _augmenter(g, normalized_features, k=None, partition=None):
    from .graph_core import partition_by_degree
    if partition is None:
        partition = partition_by_degree(g, k)
    return Augmenter(g, partition, normalized_features)


def prune_head_node(g: AttributedGraph, u: int, k: int, normalized_features, rng) -> np.ndarray:
    return _augmenter(g, normalized_features, k).prune_node(u, np.random.default_rng(rng))


def build_pruned_view(g, partition: DegreePartition, normalized_features, rng) -> AttributedGraph:
    return _augmenter(g, normalized_features, partition=partition).pruned_view(rng)


def sample_auxiliary(sw: ScoreWindow, normalized_features, v: int, rng) -> int:
    xn = np.asarray(normalized_features, dtype=np.float64)
    sw.require_filled()
    sim = np.maximum(xn @ xn[v], 0.0)
    sim[v] = 0.0
    weights = sim * (sw.window @ sw.window[v])
    rng = np.random.default_rng(rng)
    total = weights.sum()
    if total > 0:
        return int(rng.choice(len(weights), p=weights / total))
    a = int(rng.integers(len(weights) - 1))
    return a + (a >= v)


def complete_tail_node(g, sw, normalized_features, v, degree_sampler=None, rng=None,
                       k=None) -> MixupNeighborhood:
    aug = _augmenter(g, normalized_features, k or max(1, int(g.degrees.max())))
    return aug.complete_node(v, sw, np.random.default_rng(rng), degree_sampler)


def build_completed_view(g, sw, partition, normalized_features, rng) -> AttributedGraph:
    return _augmenter(g, normalized_features, partition=partition).completed_view(sw, rng)
