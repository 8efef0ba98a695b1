"""GCN encoder, mean readout over RWR neighborhoods and bilinear discriminator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import ContractError
from .graph_core import (AttributedGraph, DEFAULT_RESTART_PROB, DEFAULT_RWR_SIZE,
                         normalized_adjacency, rwr_neighborhoods)


@dataclass
class ModelParams:
    """Encoder weights (one matrix per GCN layer), bilinear matrix, Adam state."""

    gcn_weights: list
    bilinear: np.ndarray
    m: list = field(default=None)
    v: list = field(default=None)
    step: int = 0

    def __post_init__(self):
        self.gcn_weights = [np.asarray(w, dtype=np.float64) for w in self.gcn_weights]
        self.bilinear = np.asarray(self.bilinear, dtype=np.float64)
        if self.m is None:
            self.m = [np.zeros_like(t) for t in self.tensors()]
        if self.v is None:
            self.v = [np.zeros_like(t) for t in self.tensors()]

    @property
    def w_gcn(self) -> np.ndarray:
        return self.gcn_weights[0]

    @property
    def f(self) -> int:
        return self.gcn_weights[0].shape[0]

    @property
    def d(self) -> int:
        return self.bilinear.shape[0]

    def tensors(self) -> list:
        return [*self.gcn_weights, self.bilinear]

    def set_tensors(self, tensors):
        *self.gcn_weights, self.bilinear = tensors

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.gcn_weights], self.bilinear.copy(),
                           [a.copy() for a in self.m], [a.copy() for a in self.v], self.step)

    def equals(self, other: "ModelParams") -> bool:
        pairs = zip(self.tensors() + self.m + self.v, other.tensors() + other.m + other.v)
        return (self.step == other.step and len(self.m) == len(other.m)
                and all(a.shape == b.shape and np.array_equal(a, b) for a, b in pairs))


def init_params(f: int, d: int, rng=None, layers: int = 1) -> ModelParams:
    """Xavier-uniform weights, zero Adam moments."""
    if f < 1 or d < 1 or layers < 1:
        raise ContractError("f, d and layers must be >= 1")
    rng = np.random.default_rng(rng)

    def xavier(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    dims = [f] + [d] * layers
    gcn = [xavier(dims[i], dims[i + 1]) for i in range(layers)]
    return ModelParams(gcn, xavier(d, d))


def features_operator(x):
    """Sparse copy of ``x`` when it is mostly zeros, else ``x`` itself."""
    x = np.asarray(x, dtype=np.float64)
    if np.count_nonzero(x) < 0.1 * x.size:
        return sp.csr_matrix(x)
    return x


def encode(view: AttributedGraph, params: ModelParams, a_hat=None, features=None):
    """H = ReLU(Â ... ReLU(Â X W1) ... W_L).

    Returns
    -------
    h : ndarray, shape (n, d)
    pre : list of ndarray
        Pre-activations per layer (the last one belongs to ``h``).
    """
    x = view.features if features is None else features
    if x.shape[1] != params.f:
        raise ContractError(f"feature dim {x.shape[1]} does not match encoder input {params.f}")
    if a_hat is None:
        a_hat = normalized_adjacency(view)
    h = x
    pre = []
    for w in params.gcn_weights:
        z = a_hat @ np.asarray(h @ w)
        pre.append(z)
        h = np.maximum(z, 0.0)
    return h, pre


def readout(h, neighbor_sets) -> np.ndarray:
    """Mean of the rows of ``h`` over each node's sampled set."""
    rows = []
    for s in neighbor_sets:
        idx = np.fromiter(s, dtype=np.int64) if not isinstance(s, np.ndarray) else s
        if len(idx) == 0:
            raise ContractError("readout over an empty neighbor set")
        rows.append(h[idx].mean(axis=0))
    return np.vstack(rows) if rows else np.zeros((0, h.shape[1]))


def readout_matrix(members, counts, n) -> sp.csr_matrix:
    """Row-stochastic sparse matrix M with M[i, j] = 1/|set_i| for j in set_i."""
    if (counts < 1).any():
        raise ContractError("readout over an empty neighbor set")
    valid = members >= 0
    rows = np.repeat(np.arange(len(counts)), counts)
    vals = np.repeat(1.0 / counts, counts)
    return sp.csr_matrix((vals, (rows, members[valid])), shape=(len(counts), n))


def discriminate(h_neighbor, h_node, params_or_w) -> float:
    w = params_or_w.bilinear if isinstance(params_or_w, ModelParams) else params_or_w
    return float(expit(np.asarray(h_neighbor) @ np.asarray(w) @ np.asarray(h_node)))


@dataclass
class PairSample:
    """Positive RWR sets and negative partners drawn for one view."""

    members: np.ndarray
    counts: np.ndarray
    neg_nodes: np.ndarray


@dataclass
class ForwardTrace:
    """Everything the backward pass needs for one view."""

    a_hat: sp.csr_matrix
    inputs: list
    pre_activation: list
    embeddings: np.ndarray
    neighbor_reprs: np.ndarray
    neg_reprs: np.ndarray
    pos_logits: np.ndarray
    neg_logits: np.ndarray
    pos_scores: np.ndarray
    neg_scores: np.ndarray
    sample: PairSample
    readout_op: sp.csr_matrix | None = None
    masked_pairs: tuple | None = None

    @property
    def n(self) -> int:
        return len(self.pos_scores)

    @property
    def pair_assignment(self):
        s = self.sample
        sets = [s.members[i, :s.counts[i]] for i in range(len(s.counts))]
        return sets, s.neg_nodes


def sample_pairs(view: AttributedGraph, rng, restart_prob=DEFAULT_RESTART_PROB,
                 rwr_size=DEFAULT_RWR_SIZE) -> PairSample:
    rng = np.random.default_rng(rng)
    n = view.n
    members, counts = rwr_neighborhoods(view, np.arange(n), restart_prob, rwr_size, rng)
    if n > 1:
        neg = rng.integers(n - 1, size=n)
        neg = neg + (neg >= np.arange(n))
    else:
        neg = np.zeros(n, dtype=np.int64)
    return PairSample(members, counts, neg)


def _masked_pair_terms(a_hat, members, counts):
    """Anchor/member pairs and the Â[member, anchor] coupling used for masking."""
    n = len(counts)
    anchors = np.repeat(np.arange(n), counts)
    mem = members[members >= 0]
    keys = np.repeat(np.arange(a_hat.shape[0]), np.diff(a_hat.indptr)) * n + a_hat.indices
    want = mem * n + anchors
    pos = np.searchsorted(keys, want)
    pos = np.minimum(pos, len(keys) - 1)
    coupling = np.where(keys[pos] == want, a_hat.data[pos], 0.0)
    return anchors, mem, coupling


def forward_with(view: AttributedGraph, params: ModelParams, sample: PairSample,
                 mask_anchor=False, a_hat=None, features=None) -> ForwardTrace:
    """Deterministic forward pass for a fixed pair sample."""
    if a_hat is None:
        a_hat = normalized_adjacency(view)
    x = view.features if features is None else features
    inputs, pre = [], []
    h = x
    for w in params.gcn_weights:
        inputs.append(h)
        z = a_hat @ np.asarray(h @ w)
        pre.append(z)
        h = np.maximum(z, 0.0)
    n = view.n
    readout_op = masked = None
    if mask_anchor:
        # readout of i sees every member with node i's own features zeroed
        anchors, mem, coupling = _masked_pair_terms(a_hat, sample.members, sample.counts)
        xw = np.asarray(x @ params.gcn_weights[0])
        q = pre[0][mem] - coupling[:, None] * xw[anchors]
        z = np.maximum(q, 0.0)
        hpos = np.zeros_like(h)
        np.add.at(hpos, anchors, z / sample.counts[anchors, None])
        masked = (anchors, mem, coupling, q)
    else:
        readout_op = readout_matrix(sample.members, sample.counts, n)
        hpos = np.asarray(readout_op @ h)
    hneg = hpos[sample.neg_nodes]
    hw = h @ params.bilinear.T  # row i: W h_i
    lp = np.einsum("ij,ij->i", hpos, hw)
    ln = np.einsum("ij,ij->i", hneg, hw)
    return ForwardTrace(a_hat, inputs, pre, h, hpos, hneg, lp, ln, expit(lp), expit(ln),
                        sample, readout_op, masked)


def forward_view(view: AttributedGraph, params: ModelParams, rng, config=None,
                 a_hat=None, features=None) -> ForwardTrace:
    """Sample positive/negative pairs for every node and score them."""
    restart = getattr(config, "restart_prob", DEFAULT_RESTART_PROB)
    size = getattr(config, "rwr_size", DEFAULT_RWR_SIZE)
    mask = getattr(config, "mask_anchor", False)
    sample = sample_pairs(view, rng, restart, size)
    return forward_with(view, params, sample, mask, a_hat, features)
