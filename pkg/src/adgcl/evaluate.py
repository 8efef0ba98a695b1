"""Multi-round anomaly scoring and ranking metrics, overall and per degree stratum."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .augment import Augmenter
from .errors import MetricError, ParameterError
from .graph_core import (AttributedGraph, DegreePartition, l2_normalize_features,
                         normalized_adjacency, partition_by_degree)
from .model import ModelParams, features_operator, forward_view

log = logging.getLogger(__name__)

DEFAULT_ROUNDS = 256


def anomaly_scores(g: AttributedGraph, params: ModelParams, rounds: int = DEFAULT_ROUNDS,
                   rng=None, config=None, window=None) -> np.ndarray:
    """Mean over ``rounds`` of (negative-pair score - positive-pair score).

    Every round resamples each node's RWR set and negative partner from its
    own generator ``default_rng([seed, round])``. With
    ``config.score_view == "completion_avg"`` each round scores a freshly
    completed view instead of the original graph, which needs ``window``.
    """
    if rounds < 1:
        raise ParameterError("rounds must be >= 1")
    seed = int(rng) if rng is not None else getattr(config, "seed", 0)
    xn = l2_normalize_features(g)
    feats = features_operator(xn)
    normed = g.with_features(xn)
    a_hat = normalized_adjacency(g)
    completion = getattr(config, "score_view", "original") == "completion_avg"
    if completion:
        if window is None:
            raise ParameterError("score_view=completion_avg needs a score window")
        aug = Augmenter(g, partition_by_degree(g, config.k_threshold), xn)
    total = np.zeros(g.n)
    for r in range(rounds):
        rr = np.random.default_rng([seed, r])
        view, a = normed, a_hat
        if completion:
            view = aug.completed_view(window, rr)
            a = normalized_adjacency(view)
        trace = forward_view(view, params, rr, config, a, feats)
        total += trace.neg_scores - trace.pos_scores
    return total / rounds


# -- metrics -----------------------------------------------------------------

def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise MetricError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise MetricError("labels must be 0/1")
    if not np.isfinite(s).all():
        raise MetricError("scores must be finite")
    y = y.astype(bool)
    if y.all() or not y.any():
        raise MetricError("metric undefined: labels contain a single class")
    return s, y


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC via midrank sums (ties count one half)."""
    s, y = _check_binary(scores, labels)
    ranks = rankdata(s)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _pr_points(s, y):
    """Precision and recall after each distinct threshold, highest first."""
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(y)[last].astype(np.float64)
    k = last + 1.0
    return tp / k, tp / y.sum()


def auprc_ap(scores, labels) -> tuple[float, float]:
    """Trapezoidal area under the PR curve and step-interpolated AP.

    Both walk the distinct score thresholds from high to low; the PR curve
    starts at (recall 0, precision 1).
    """
    s, y = _check_binary(scores, labels)
    precision, recall = _pr_points(s, y)
    r = np.r_[0.0, recall]
    p = np.r_[1.0, precision]
    auprc = float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))
    ap = float(np.sum(np.diff(r) * precision))
    return auprc, ap


def _safe(fn, scores, labels):
    try:
        return fn(scores, labels)
    except MetricError:
        return None


def ols_slope(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2 or np.ptp(x) == 0:
        return 0.0
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


@dataclass
class EvalReport:
    """Ranking metrics; ``None`` marks a metric undefined for its subset."""

    auc: float | None
    auprc: float | None
    ap: float | None
    tail_auc: float | None
    head_auc: float | None
    tail_auprc: float | None
    head_auprc: float | None
    tail_ap: float | None
    head_ap: float | None
    degree_auc_points: list = field(default_factory=list)
    regression_slope: float | None = None
    n_rounds: int | None = None
    k_threshold: int | None = None
    stratify_mode: str = "stratum"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_degree_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["degree", "auc", "count"])
            for deg, auc, count in self.degree_auc_points:
                w.writerow([deg, repr(float(auc)), count])


def _subset(scores, labels, mask, mode):
    if mode == "stratum_vs_all_normals":
        # anomalies of the stratum against every normal node
        mask = mask | (labels == 0)
    return scores[mask], labels[mask]


def stratified_eval(scores, labels, partition: DegreePartition, degrees, n_rounds=None,
                    stratify_mode="stratum") -> EvalReport:
    """Overall, tail, head and per-degree metrics plus the degree-AUC slope."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).astype(np.int64).reshape(-1)
    deg = np.asarray(degrees).astype(np.int64).reshape(-1)
    if not (len(s) == len(y) == len(deg)):
        raise MetricError("scores, labels and degrees differ in length")
    if stratify_mode not in ("stratum", "stratum_vs_all_normals"):
        raise ParameterError(f"unknown stratify_mode {stratify_mode!r}")
    overall = _safe(auprc_ap, s, y) or (None, None)
    tail = partition.is_tail(len(s))
    parts = {}
    for name, mask in (("tail", tail), ("head", ~tail)):
        ss, yy = _subset(s, y, mask, stratify_mode)
        pr = _safe(auprc_ap, ss, yy) or (None, None)
        parts[name] = (_safe(roc_auc, ss, yy), *pr)
    points = []
    for d in np.unique(deg):
        m = deg == d
        auc = _safe(roc_auc, s[m], y[m])
        if auc is not None:
            points.append((int(d), auc, int(m.sum())))
    slope = ols_slope([p[0] for p in points], [p[1] for p in points]) if points else None
    report = EvalReport(_safe(roc_auc, s, y), overall[0], overall[1],
                        parts["tail"][0], parts["head"][0], parts["tail"][1], parts["head"][1],
                        parts["tail"][2], parts["head"][2], points, slope, n_rounds,
                        partition.k_threshold, stratify_mode)
    for key, val in report.to_dict().items():
        if val is None and key in ("auc", "tail_auc", "head_auc"):
            log.warning("%s undefined: its subset holds a single class", key)
        if isinstance(val, float) and not math.isfinite(val):
            raise MetricError(f"{key} is not finite")
    return report


def evaluate_graph(scores, labels, g: AttributedGraph, k: int, n_rounds=None,
                   stratify_mode="stratum") -> EvalReport:
    return stratified_eval(scores, labels, partition_by_degree(g, k), g.degrees, n_rounds,
                           stratify_mode)
