"""Two-stage contrastive training loop, Adam, and checkpoint files.

Checkpoint layout (little-endian)::

    b"ADGCLCKP"  uint32 version  uint32 layers L  uint64 adam step
    (uint32 rows, uint32 cols) for each of the L GCN matrices and W_bil
    float64 values of every tensor, then every first moment, then every
    second moment, all in row-major order
    uint32 CRC32 of everything before it
"""

from __future__ import annotations

import json
import logging
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import Augmenter, ScoreWindow, update_score_window
from .data_io import DatasetBundle, RunConfig
from .errors import CheckpointError, ContractError, TrainingError
from .graph_core import l2_normalize_features, normalized_adjacency, partition_by_degree
from .model import ModelParams, features_operator, forward_view, init_params
from .objective import backward, loss_for_config

log = logging.getLogger(__name__)

MAGIC = b"ADGCLCKP"
VERSION = 1
_HEADER = struct.Struct("<8sIIQ")
_SHAPE = struct.Struct("<II")

# purpose codes of the per-epoch random streams
STREAM_INIT = 0
STREAM_VIEW1 = 1
STREAM_VIEW2 = 2
STREAM_PAIRS1 = 3
STREAM_PAIRS2 = 4
STREAM_SCORE = 5


def derived_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``."""
    return np.random.default_rng([int(seed), *[int(k) for k in keys]])


def adam_step(params: ModelParams, grads, lr: float, beta1=0.9, beta2=0.999,
              eps=1e-8) -> ModelParams:
    """One bias-corrected Adam update; returns a new ModelParams."""
    grads = grads.tensors() if hasattr(grads, "tensors") else list(grads)
    tensors = params.tensors()
    if len(grads) != len(tensors) or any(g.shape != t.shape for g, t in zip(grads, tensors)):
        raise ContractError("gradient shapes do not match parameters")
    if not lr > 0:
        raise ContractError("learning rate must be > 0")
    for i, g in enumerate(grads):
        if not np.isfinite(g).all():
            bad = int((~np.isfinite(g)).sum())
            raise TrainingError(f"non-finite gradient: tensor {i} has {bad} bad entries "
                                f"at Adam step {params.step + 1}")
    t = params.step + 1
    new_t, new_m, new_v = [], [], []
    for p, g, m, v in zip(tensors, grads, params.m, params.v):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        new_t.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    *gcn, bil = new_t
    return ModelParams(gcn, bil, new_m, new_v, t)


@dataclass
class EpochRecord:
    epoch: int
    stage: int
    intra: float
    inter: float
    total: float
    wall_ms: float

    def to_json(self) -> str:
        return json.dumps(dict(epoch=self.epoch, stage=self.stage, intra=self.intra,
                               inter=self.inter, total=self.total, wall_ms=self.wall_ms))


@dataclass
class TrainResult:
    params: ModelParams
    window: ScoreWindow
    log: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.params, self.window, self.log))


def degree_sampler_for(g):
    """Draws from the empirical degree distribution of ``g``."""
    degrees = g.degrees.copy()

    def sample(rng):
        return int(degrees[rng.integers(len(degrees))])
    return sample


def stage_views(epoch: int, config: RunConfig, g, aug: Augmenter, window: ScoreWindow,
                degree_sampler, seed: int):
    """The (view1, view2, stage) pair used at ``epoch`` (1-based)."""
    completion = (epoch > config.stage_switch_epoch and not config.disable_nc
                  and window.filled_epochs > 0)
    if not completion:
        v2 = g if config.disable_np else aug.pruned_view(derived_rng(seed, epoch, STREAM_VIEW2))
        return g, v2, 1
    v1 = aug.completed_view(window, derived_rng(seed, epoch, STREAM_VIEW1), degree_sampler)
    if config.stage2_views == "completion_plus_pruned" and not config.disable_np:
        v2 = aug.pruned_view(derived_rng(seed, epoch, STREAM_VIEW2))
    else:
        v2 = aug.completed_view(window, derived_rng(seed, epoch, STREAM_VIEW2), degree_sampler)
    return v1, v2, 2


def train(bundle: DatasetBundle, config: RunConfig, rng=None, hook=None,
          log_stream=None) -> TrainResult:
    """Train the encoder and discriminator.

    Parameters
    ----------
    bundle : DatasetBundle
    config : RunConfig
        Must be resolved (see :meth:`RunConfig.resolved`).
    rng : int, optional
        Master seed; defaults to ``config.seed``. Every epoch draws from
        streams derived from ``(seed, epoch, purpose)``.
    hook : callable, optional
        Called as ``hook(event, epoch, **info)`` with events ``"views"`` and
        ``"epoch"``; useful to assert the stage schedule.
    log_stream : file-like, optional
        Receives one JSON line per epoch.
    """
    config.validate()
    seed = config.seed if rng is None else int(rng)
    g = bundle.graph
    xn = l2_normalize_features(g)
    feats = features_operator(xn)
    params = init_params(g.f, config.d, derived_rng(seed, 0, STREAM_INIT), config.gcn_layers)
    window = ScoreWindow(g.n, config.w)
    records = []
    if config.epochs == 0:
        return TrainResult(params, window, records)

    partition = partition_by_degree(g, config.k_threshold)
    aug = Augmenter(g, partition, xn)
    deg_sampler = degree_sampler_for(g)
    a_orig = normalized_adjacency(g)
    normed = g.with_features(xn)

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        v1, v2, stage = stage_views(epoch, config, normed, aug, window, deg_sampler, seed)
        if hook is not None:
            hook("views", epoch, stage=stage, views=(v1, v2))
        a1 = a_orig if v1 is normed else normalized_adjacency(v1)
        a2 = a_orig if v2 is normed else normalized_adjacency(v2)
        t1 = forward_view(v1, params, derived_rng(seed, epoch, STREAM_PAIRS1), config, a1, feats)
        t2 = forward_view(v2, params, derived_rng(seed, epoch, STREAM_PAIRS2), config, a2, feats)
        losses = loss_for_config((t1, t2), config)
        if not np.isfinite(losses.total):
            raise TrainingError(f"non-finite loss at epoch {epoch}: {losses}")
        grads = backward((t1, t2), params, config)
        params = adam_step(params, grads, config.learning_rate, config.beta1, config.beta2,
                           config.eps)
        window = update_score_window(window, t1.pos_scores + t2.pos_scores,
                                     t1.neg_scores + t2.neg_scores)
        rec = EpochRecord(epoch, stage, losses.intra, losses.inter, losses.total,
                          round((time.perf_counter() - t0) * 1000.0, 3))
        records.append(rec)
        if log_stream is not None:
            log_stream.write(rec.to_json() + "\n")
        if hook is not None:
            hook("epoch", epoch, record=rec)
        log.debug("epoch %d stage %d loss %.6f", epoch, stage, losses.total)
    return TrainResult(params, window, records)


# -- checkpoints -------------------------------------------------------------

def checkpoint_bytes(params: ModelParams) -> bytes:
    tensors = params.tensors()
    parts = [_HEADER.pack(MAGIC, VERSION, len(params.gcn_weights), params.step)]
    parts += [_SHAPE.pack(*t.shape) for t in tensors]
    for group in (tensors, params.m, params.v):
        parts += [np.ascontiguousarray(t, dtype="<f8").tobytes() for t in group]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def params_from_bytes(data: bytes) -> ModelParams:
    if len(data) < _HEADER.size + 4:
        raise CheckpointError("checkpoint truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    magic, version, layers, step = _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch (truncated or corrupt)")
    offset = _HEADER.size
    shapes = []
    for _ in range(layers + 1):
        if offset + _SHAPE.size > len(body):
            raise CheckpointError("checkpoint truncated in shape table")
        shapes.append(_SHAPE.unpack_from(body, offset))
        offset += _SHAPE.size
    sizes = [r * c for r, c in shapes]
    if offset + 8 * 3 * sum(sizes) != len(body):
        raise CheckpointError("checkpoint payload size does not match its shape table")
    groups = []
    for _ in range(3):
        group = []
        for shape, size in zip(shapes, sizes):
            group.append(np.frombuffer(body, "<f8", size, offset).reshape(shape).astype(np.float64))
            offset += 8 * size
        groups.append(group)
    tensors, m, v = groups
    return ModelParams(tensors[:-1], tensors[-1], m, v, step)


def checkpoint(params: ModelParams, path):
    Path(path).write_bytes(checkpoint_bytes(params))


def restore(path) -> ModelParams:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return params_from_bytes(data)


def save_window(window: ScoreWindow, path):
    with open(path, "wb") as fh:
        np.savez(fh, window=window.window, w=window.w, filled=window.filled_epochs)


def load_window(path) -> ScoreWindow:
    try:
        with np.load(path) as z:
            return ScoreWindow(z["window"].shape[0], int(z["w"]), z["window"], int(z["filled"]))
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read score window {path}: {exc}") from None
