"""Sparse attributed graphs, degree partitions and neighborhood sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InputError, ParameterError

logger = logging.getLogger(__name__)

DEFAULT_RESTART_PROB = 0.5
DEFAULT_RWR_SIZE = 4
# walk-length budget per requested node; anchors in tiny components stop here
RWR_STEPS_PER_NODE = 100


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected graph in CSR form with a dense node-attribute matrix.

    Every undirected edge is stored twice (once per direction); rows are
    sorted and contain neither self-loops nor duplicates. Instances are
    immutable: the arrays are flagged read-only on construction.
    """

    row_offsets: np.ndarray
    col_indices: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", _frozen(self.row_offsets, np.int64))
        object.__setattr__(self, "col_indices", _frozen(self.col_indices, np.int64))
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1)
        object.__setattr__(self, "features", _frozen(feats, np.float64))

    @property
    def n(self) -> int:
        return len(self.row_offsets) - 1

    @property
    def f(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.col_indices) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def neighbors(self, v: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[v]:self.row_offsets[v + 1]]

    def edge_array(self) -> np.ndarray:
        """Return each undirected edge once as an (m, 2) array with u < v."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        mask = rows < self.col_indices
        return np.column_stack([rows[mask], self.col_indices[mask]])

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self.col_indices))
        return sp.csr_matrix((data, self.col_indices, self.row_offsets),
                             shape=(self.n, self.n))

    def with_features(self, features) -> "AttributedGraph":
        return AttributedGraph(self.row_offsets, self.col_indices, features)

    def with_edges(self, edges) -> "AttributedGraph":
        return build_graph(edges, self.features)

    def same_as(self, other: "AttributedGraph") -> bool:
        return (np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)
                and np.array_equal(self.features, other.features))


def _csr_from_pairs(src, dst, n):
    """Symmetrize, drop self-loops and duplicates, return sorted CSR arrays."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    keep = src != dst
    if not keep.all():
        logger.debug("dropping %d self-loops", int((~keep).sum()))
    src, dst = src[keep], dst[keep]
    both_src = np.concatenate([src, dst])
    both_dst = np.concatenate([dst, src])
    keys = np.unique(both_src * n + both_dst)
    dup = 2 * len(src) - len(keys)
    if dup:
        logger.debug("dropping %d duplicate directed entries", dup)
    rows, cols = np.divmod(keys, n) if n else (keys, keys)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
    return offsets, cols


def build_graph(edges, features, n: int | None = None) -> AttributedGraph:
    """Build an :class:`AttributedGraph` from an edge list and attributes.

    Parameters
    ----------
    edges : iterable of (int, int) or (m, 2) array
        Undirected edges; direction, duplicates and self-loops are ignored.
    features : array_like, shape (n, f)
        Node attribute matrix. Its row count fixes ``n`` unless ``n`` is given.
    n : int, optional
        Expected node count; must agree with the feature rows.

    Raises
    ------
    InputError
        On out-of-range node ids or a feature row-count mismatch.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    if features.ndim != 2:
        raise InputError("features must be a 2-D matrix")
    rows = features.shape[0]
    if n is None:
        n = rows
    elif n != rows:
        raise InputError(f"feature matrix has {rows} rows but n={n}")
    e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                   dtype=np.int64)
    if e.size == 0:
        e = e.reshape(0, 2)
    if e.ndim != 2 or e.shape[1] != 2:
        raise InputError("edges must be (node, node) pairs")
    if e.size and (e.min() < 0 or e.max() >= n):
        bad = e[(e < 0).any(1) | (e >= n).any(1)][0]
        raise InputError(f"edge {tuple(int(x) for x in bad)} has a node id outside [0, {n})")
    offsets, cols = _csr_from_pairs(e[:, 0], e[:, 1], n)
    return AttributedGraph(offsets, cols, features)


@dataclass(frozen=True)
class DegreePartition:
    k_threshold: int
    tail_nodes: np.ndarray
    head_nodes: np.ndarray

    def is_tail(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        mask[self.tail_nodes] = True
        return mask


def partition_by_degree(g: AttributedGraph, k: int) -> DegreePartition:
    """Split nodes into tail (degree <= k) and head (degree > k)."""
    if int(k) != k or k < 1:
        raise ParameterError(f"degree threshold must be a positive integer, got {k}")
    deg = g.degrees
    return DegreePartition(int(k), np.flatnonzero(deg <= k), np.flatnonzero(deg > k))


def l2_normalize_features(g_or_x) -> np.ndarray:
    x = g_or_x.features if isinstance(g_or_x, AttributedGraph) else np.asarray(g_or_x, float)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def cosine_similarity(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx_, ny_ = np.linalg.norm(x), np.linalg.norm(y)
    if nx_ == 0 or ny_ == 0:
        return 0.0
    return float(np.clip(x @ y / (nx_ * ny_), -1.0, 1.0))


def normalized_adjacency(g: AttributedGraph) -> sp.csr_matrix:
    """Symmetric GCN normalization D^-1/2 (A + I) D^-1/2 as a CSR matrix."""
    n = g.n
    d1 = g.degrees + 1.0
    a_hat = (g.adjacency() + sp.identity(n, format="csr")).tocsr()
    a_hat.sort_indices()
    rows = np.repeat(np.arange(n), np.diff(a_hat.indptr))
    # one square root per entry keeps rows of regular graphs summing to exactly 1
    a_hat.data = 1.0 / np.sqrt(d1[rows] * d1[a_hat.indices])
    return a_hat


def rwr_neighborhoods(g: AttributedGraph, anchors, restart_prob=DEFAULT_RESTART_PROB,
                      target_size=DEFAULT_RWR_SIZE, rng=None, max_steps=None):
    """Random walk with restart from many anchors at once.

    Each anchor runs its own walk; at every step the walker jumps back to the
    anchor with probability ``restart_prob`` and otherwise moves to a uniformly
    chosen neighbor of its current node. Distinct visited nodes other than the
    anchor are collected until ``target_size`` are found or the step budget
    runs out. Isolated anchors get themselves as their only member.

    Returns
    -------
    members : ndarray, shape (len(anchors), target_size)
        Collected node ids, padded with -1.
    counts : ndarray, shape (len(anchors),)
        Number of valid entries per row (always >= 1).
    """
    if not 0.0 < restart_prob < 1.0:
        raise ParameterError("restart_prob must lie in (0, 1)")
    if target_size < 1:
        raise ParameterError("target_size must be >= 1")
    rng = np.random.default_rng(rng)
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1)
    m = len(anchors)
    steps = RWR_STEPS_PER_NODE * target_size if max_steps is None else max_steps
    off, col, deg = g.row_offsets, g.col_indices, g.degrees

    members = np.full((m, target_size), -1, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    isolated = deg[anchors] == 0
    members[isolated, 0] = anchors[isolated]
    counts[isolated] = 1
    active = ~isolated
    cur = anchors.copy()
    for _ in range(steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        restart = rng.random(idx.size) < restart_prob
        c = cur[idx]
        pick = off[c] + (rng.random(idx.size) * deg[c]).astype(np.int64)
        nxt = np.where(restart, anchors[idx], col[pick])
        cur[idx] = nxt
        fresh = (nxt != anchors[idx]) & ~(members[idx] == nxt[:, None]).any(axis=1)
        fi = idx[fresh]
        members[fi, counts[fi]] = nxt[fresh]
        counts[fi] += 1
        active[fi[counts[fi] == target_size]] = False
    return members, counts


def rwr_sample(g: AttributedGraph, anchor: int, restart_prob=DEFAULT_RESTART_PROB,
               target_size=DEFAULT_RWR_SIZE, rng=None) -> set:
    members, counts = rwr_neighborhoods(g, [anchor], restart_prob, target_size, rng)
    return {int(v) for v in members[0, :counts[0]]}
