"""Intra-view BCE, inter-view InfoNCE, and their exact gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ParameterError
from .model import ForwardTrace, ModelParams

NORM_EPS = 1e-12


@dataclass
class LossBreakdown:
    intra_v1: float
    intra_v2: float
    inter_feat: float
    inter_score: float
    total: float
    alpha: float

    @property
    def intra(self) -> float:
        return self.intra_v1 + self.intra_v2

    @property
    def inter(self) -> float:
        return self.inter_feat + self.inter_score


@dataclass
class GradientSet:
    grad_gcn: list
    grad_bilinear: np.ndarray

    @property
    def grad_w_gcn(self):
        return self.grad_gcn[0]

    def tensors(self) -> list:
        return [*self.grad_gcn, self.grad_bilinear]


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def intra_loss(trace: ForwardTrace) -> float:
    """-(1/2n) sum_i [log s_p,i + log(1 - s_n,i)], evaluated from logits."""
    n = trace.n
    return float(-(_log_sigmoid(trace.pos_logits).sum()
                   + _log_sigmoid(-trace.neg_logits).sum()) / (2 * n))


def intra_loss_from_scores(pos_scores, neg_scores) -> float:
    pos = np.asarray(pos_scores, dtype=float)
    neg = np.asarray(neg_scores, dtype=float)
    return float(-(np.log(pos).sum() + np.log1p(-neg).sum()) / (2 * len(pos)))


def infonce(q, k, tau) -> float:
    return infonce_with_grad(q, k, tau)[0]


def infonce_with_grad(q, k, tau):
    """ctr(Q, K) = -sum_i log softmax_j(q_i . k_j / tau)[i] and its gradients.

    Rows are used as given; the log-sum-exp subtracts the row maximum.
    """
    if not tau > 0:
        raise ParameterError(f"temperature must be > 0, got {tau}")
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.ndim == 1:
        q, k = q[:, None], k[:, None]
    if q.shape[0] != k.shape[0]:
        raise ParameterError("Q and K must have the same number of rows")
    logits = q @ k.T / tau
    value = float(-(np.diagonal(logits) - logsumexp(logits, axis=1)).sum())
    g = softmax(logits, axis=1)
    g[np.diag_indices_from(g)] -= 1.0
    return value, g @ k / tau, g.T @ q / tau


def _row_normalize(a):
    norms = np.maximum(np.linalg.norm(a, axis=1, keepdims=True), NORM_EPS)
    return a / norms, norms


def _row_normalize_backward(a_hat, norms, grad):
    return (grad - a_hat * np.einsum("ij,ij->i", a_hat, grad)[:, None]) / norms


def _contrast(q, k, tau, normalize, reduction="sum"):
    if normalize:
        qn, qs = _row_normalize(q)
        kn, ks = _row_normalize(k)
        value, gq, gk = infonce_with_grad(qn, kn, tau)
        gq = _row_normalize_backward(qn, qs, gq)
        gk = _row_normalize_backward(kn, ks, gk)
    else:
        value, gq, gk = infonce_with_grad(q, k, tau)
    if reduction == "mean":
        scale = 1.0 / len(q)
        return value * scale, gq * scale, gk * scale
    return value, gq, gk


def score_matrix(trace: ForwardTrace, mode="pos_neg") -> np.ndarray:
    if mode == "pos_only":
        return trace.pos_scores[:, None]
    return np.column_stack([trace.pos_scores, trace.neg_scores])


def inter_loss(traces, tau, mode="pos_neg", normalize=False, reduction="sum") -> float:
    t1, t2 = traces
    feat = _contrast(t1.embeddings, t2.embeddings, tau, normalize, reduction)[0]
    score = _contrast(score_matrix(t1, mode), score_matrix(t2, mode), tau, normalize,
                      reduction)[0]
    return feat + score


def _flags(config):
    return dict(
        alpha=getattr(config, "alpha", 0.2),
        tau=getattr(config, "tau", 0.07),
        mode=getattr(config, "score_contrast_mode", "pos_neg"),
        normalize=getattr(config, "normalize_infonce_rows", False),
        reduction=getattr(config, "infonce_reduction", "sum"),
        disable_intra=getattr(config, "disable_intra", False),
        disable_inter=getattr(config, "disable_inter", False),
    )


def total_loss(traces, alpha=0.2, tau=0.07, disable_intra=False, disable_inter=False,
               mode="pos_neg", normalize=False, reduction="sum") -> LossBreakdown:
    t1, t2 = traces
    i1 = 0.0 if disable_intra else intra_loss(t1)
    i2 = 0.0 if disable_intra else intra_loss(t2)
    if disable_inter:
        feat = score = 0.0
    else:
        feat = _contrast(t1.embeddings, t2.embeddings, tau, normalize, reduction)[0]
        score = _contrast(score_matrix(t1, mode), score_matrix(t2, mode), tau, normalize,
                          reduction)[0]
    return LossBreakdown(i1, i2, feat, score, i1 + i2 + alpha * (feat + score), alpha)


def loss_for_config(traces, config) -> LossBreakdown:
    fl = _flags(config)
    return total_loss(traces, fl["alpha"], fl["tau"], fl["disable_intra"], fl["disable_inter"],
                      fl["mode"], fl["normalize"], fl["reduction"])


def _view_backward(trace: ForwardTrace, params: ModelParams, g_lp, g_ln, g_h):
    """Chain rule from logit/embedding gradients of one view to the weights."""
    wb = params.bilinear
    h, hpos, hneg = trace.embeddings, trace.neighbor_reprs, trace.neg_reprs
    g_wb = hpos.T @ (g_lp[:, None] * h) + hneg.T @ (g_ln[:, None] * h)
    g_h = g_h + g_lp[:, None] * (hpos @ wb) + g_ln[:, None] * (hneg @ wb)
    hw = h @ wb.T
    g_hpos = g_lp[:, None] * hw
    np.add.at(g_hpos, trace.sample.neg_nodes, g_ln[:, None] * hw)

    a_hat = trace.a_hat
    n_layers = len(params.gcn_weights)
    grads = [None] * n_layers
    if trace.masked_pairs is None:
        g_h = g_h + trace.readout_op.T @ g_hpos
        extra_pre = extra_xw = None
    else:
        anchors, mem, coupling, q = trace.masked_pairs
        g_q = (g_hpos[anchors] / trace.sample.counts[anchors, None]) * (q > 0)
        extra_pre = np.zeros_like(h)
        np.add.at(extra_pre, mem, g_q)
        extra_xw = np.zeros_like(h)
        np.add.at(extra_xw, anchors, -coupling[:, None] * g_q)

    for layer in range(n_layers - 1, -1, -1):
        g_pre = g_h * (trace.pre_activation[layer] > 0)
        if layer == 0 and extra_pre is not None:
            g_pre = g_pre + extra_pre
        g_xw = np.asarray(a_hat.T @ g_pre)
        if layer == 0 and extra_xw is not None:
            g_xw = g_xw + extra_xw
        inp = trace.inputs[layer]
        grads[layer] = np.asarray(inp.T @ g_xw)
        if layer > 0:
            g_h = g_xw @ params.gcn_weights[layer].T
    return grads, g_wb


def backward(traces, params: ModelParams, config=None, weights=None) -> GradientSet:
    """Analytic gradient of the total loss with respect to every weight.

    ``weights`` optionally overrides the coefficients of the three loss
    families, as a dict with keys ``intra``, ``inter_feat``, ``inter_score``;
    by default they follow ``config`` (alpha and the ablation switches).
    """
    fl = _flags(config)
    if weights is None:
        weights = {
            "intra": 0.0 if fl["disable_intra"] else 1.0,
            "inter_feat": 0.0 if fl["disable_inter"] else fl["alpha"],
            "inter_score": 0.0 if fl["disable_inter"] else fl["alpha"],
        }
    t1, t2 = traces
    n = t1.n
    per_view = []
    for t in (t1, t2):
        g_lp = -weights["intra"] * (1.0 - t.pos_scores) / (2 * n)
        g_ln = weights["intra"] * t.neg_scores / (2 * n)
        per_view.append([g_lp, g_ln, np.zeros_like(t.embeddings)])

    if weights["inter_feat"]:
        _, g1, g2 = _contrast(t1.embeddings, t2.embeddings, fl["tau"], fl["normalize"],
                             fl["reduction"])
        per_view[0][2] += weights["inter_feat"] * g1
        per_view[1][2] += weights["inter_feat"] * g2
    if weights["inter_score"]:
        s1, s2 = score_matrix(t1, fl["mode"]), score_matrix(t2, fl["mode"])
        _, g1, g2 = _contrast(s1, s2, fl["tau"], fl["normalize"], fl["reduction"])
        for (acc, t, g) in ((per_view[0], t1, g1), (per_view[1], t2, g2)):
            acc[0] = acc[0] + weights["inter_score"] * g[:, 0] * t.pos_scores * (1 - t.pos_scores)
            if g.shape[1] > 1:
                acc[1] = acc[1] + weights["inter_score"] * g[:, 1] * t.neg_scores * (1 - t.neg_scores)

    total_gcn = [np.zeros_like(w) for w in params.gcn_weights]
    total_wb = np.zeros_like(params.bilinear)
    for t, (g_lp, g_ln, g_h) in zip((t1, t2), per_view):
        gcn, wb = _view_backward(t, params, g_lp, g_ln, g_h)
        total_gcn = [a + b for a, b in zip(total_gcn, gcn)]
        total_wb += wb
    return GradientSet(total_gcn, total_wb)
