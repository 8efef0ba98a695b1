import dataclasses
import io
import json
import struct

import numpy as np
import pytest

from adgcl.augment import ScoreWindow
from adgcl.data_io import DatasetBundle, RunConfig
from adgcl.errors import CheckpointError, TrainingError
from adgcl.inject import inject_anomalies
from adgcl.model import ModelParams, init_params
from adgcl.synthetic import cora_like
from adgcl.trainer import (adam_step, checkpoint, checkpoint_bytes, load_window, params_from_bytes,
                           restore, save_window, train)


@pytest.fixture(scope="module")
def small_bundle():
    g, _ = cora_like(150, 40, 3, 300, words_per_node=6, topic_words=10, rng=0)
    g2, labels, kinds = inject_anomalies(g, 5, 1, k_candidates=20, rng=1)
    return DatasetBundle(g2, labels, kinds, "tiny")


def cfg(**kw):
    base = dict(d=8, epochs=6, learning_rate=5e-3, r=4, w=2, seed=3)
    base.update(kw)
    return RunConfig(**base).resolved()


def test_adam_zero_gradient(rng):
    p = init_params(4, 3, rng)
    zeros = [np.zeros_like(t) for t in p.tensors()]
    q = adam_step(p, zeros, 1e-2)
    assert all(np.array_equal(a, b) for a, b in zip(p.tensors(), q.tensors()))
    assert q.step == 1
    p.m = [np.ones_like(t) for t in p.tensors()]
    p.v = [np.ones_like(t) for t in p.tensors()]
    q = adam_step(p, zeros, 1e-2)
    assert np.allclose(q.m[0], 0.9) and np.allclose(q.v[0], 0.999)


def test_adam_first_step_sign(rng):
    p = init_params(4, 3, rng)
    g = [rng.normal(size=t.shape) for t in p.tensors()]
    q = adam_step(p, g, 1e-3)
    for a, b, gg in zip(p.tensors(), q.tensors(), g):
        assert np.allclose(b - a, -1e-3 * np.sign(gg), rtol=1e-4)


def test_adam_quadratic_convergence():
    target = np.array([0.7, -0.4])
    p = ModelParams([np.zeros((1, 1))], np.zeros((1, 1)))
    for _ in range(100):
        x = np.array([p.gcn_weights[0][0, 0], p.bilinear[0, 0]])
        grad = 2 * (x - target) * np.array([1.0, 3.0])
        p = adam_step(p, [grad[:1].reshape(1, 1), grad[1:].reshape(1, 1)], 0.05)
    x = np.array([p.gcn_weights[0][0, 0], p.bilinear[0, 0]])
    assert np.abs(x - target).max() < 1e-3


def test_adam_non_finite(rng):
    p = init_params(2, 2, rng)
    g = [np.zeros_like(t) for t in p.tensors()]
    g[1][0, 0] = np.nan
    with pytest.raises(TrainingError, match="non-finite"):
        adam_step(p, g, 1e-3)


def test_zero_epochs(small_bundle):
    res = train(small_bundle, cfg(epochs=0))
    assert res.params.equals(init_params(small_bundle.graph.f, 8,
                                         np.random.default_rng([3, 0, 0])))
    assert res.window.filled_epochs == 0 and not res.window.window.any() and res.log == []


def test_train_deterministic(small_bundle):
    a = train(small_bundle, cfg())
    b = train(small_bundle, cfg())
    assert a.params.equals(b.params)
    assert np.array_equal(a.window.window, b.window.window)
    assert not a.params.equals(train(small_bundle, cfg(seed=4)).params)


@pytest.mark.parametrize("epochs", [1, 2, 5])
def test_window_fill(small_bundle, epochs):
    res = train(small_bundle, cfg(epochs=epochs, w=3))
    assert res.window.filled_epochs == min(epochs, 3)
    assert np.all((res.window.window[:, 6 - 2 * min(epochs, 3):] > 0))
    assert np.all(res.window.window < 2)


def test_stage_schedule(small_bundle):
    seen = []

    def hook(event, epoch, **info):
        if event == "views":
            seen.append((epoch, info["stage"], info["views"]))
    c = cfg(epochs=6, stage_switch_epoch=4)
    train(small_bundle, c, hook=hook)
    g = small_bundle.graph
    assert [s for _, s, _ in seen] == [1, 1, 1, 1, 2, 2]
    for epoch, stage, (v1, v2) in seen:
        if stage == 1:
            assert v1.same_as(g.with_features(v1.features))
            assert v2.num_edges <= g.num_edges
        else:
            tails = np.flatnonzero(g.degrees <= c.k_threshold)
            assert np.all(v1.degrees[tails] >= g.degrees[tails])


def test_ablation_redirects(small_bundle):
    stages = {}

    def hook_for(name):
        def hook(event, epoch, **info):
            if event == "views":
                stages.setdefault(name, []).append((info["stage"], info["views"]))
        return hook
    train(small_bundle, cfg(disable_np=True), hook=hook_for("np"))
    train(small_bundle, cfg(disable_nc=True), hook=hook_for("nc"))
    g = small_bundle.graph
    for stage, (v1, v2) in stages["np"]:
        if stage == 1:
            assert v2.num_edges == g.num_edges
    assert all(stage == 1 for stage, _ in stages["nc"])


def test_log_records(small_bundle):
    buf = io.StringIO()
    res = train(small_bundle, cfg(), log_stream=buf)
    lines = [json.loads(x) for x in buf.getvalue().splitlines()]
    assert [r["epoch"] for r in lines] == list(range(1, 7))
    assert set(lines[0]) == {"epoch", "stage", "intra", "inter", "total", "wall_ms"}
    assert all(np.isfinite(r["total"]) for r in lines)
    assert lines[-1]["total"] == res.log[-1].total


def test_training_reduces_loss():
    # 5 seeds of a Cora-style schedule on a reduced surrogate graph
    g, _ = cora_like(300, 100, 4, 600, words_per_node=10, topic_words=20, rng=1)
    g2, labels, kinds = inject_anomalies(g, 6, 1, k_candidates=30, rng=2)
    bundle = DatasetBundle(g2, labels, kinds, "cora")
    for seed in range(5):
        c = RunConfig(dataset="cora", seed=seed, d=16, stage_switch_epoch=200).resolved()
        res = train(bundle, c)
        assert res.log[-1].total < res.log[0].total


def test_checkpoint_round_trip(tmp_path, rng):
    p = init_params(5, 4, rng, layers=2)
    p = adam_step(p, [rng.normal(size=t.shape) for t in p.tensors()], 1e-3)
    checkpoint(p, tmp_path / "m.ckpt")
    q = restore(tmp_path / "m.ckpt")
    assert q.equals(p) and q.step == 1 and len(q.gcn_weights) == 2


def test_checkpoint_corruption(tmp_path, rng):
    data = checkpoint_bytes(init_params(3, 2, rng))
    with pytest.raises(CheckpointError):
        params_from_bytes(data[:-9])
    with pytest.raises(CheckpointError):
        params_from_bytes(data[:10])
    flipped = bytearray(data)
    flipped[40] ^= 0xFF
    with pytest.raises(CheckpointError, match="checksum"):
        params_from_bytes(bytes(flipped))
    bumped = bytearray(data)
    bumped[8:12] = struct.pack("<I", 2)
    with pytest.raises(CheckpointError, match="version"):
        params_from_bytes(bytes(bumped))
    with pytest.raises(CheckpointError, match="magic"):
        params_from_bytes(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointError):
        restore(tmp_path / "missing.ckpt")


def test_window_snapshot(tmp_path, rng):
    sw = ScoreWindow(6, 3, rng.random((6, 6)), 2)
    save_window(sw, tmp_path / "w.npz")
    back = load_window(tmp_path / "w.npz")
    assert np.array_equal(back.window, sw.window) and back.filled_epochs == 2 and back.w == 3
    (tmp_path / "bad.npz").write_bytes(b"junk")
    with pytest.raises(CheckpointError):
        load_window(tmp_path / "bad.npz")


def test_stage2_variants_run(small_bundle):
    for kw in ({"stage2_views": "completion_plus_pruned"}, {"mask_anchor": True},
               {"gcn_layers": 2}, {"disable_inter": True}):
        res = train(small_bundle, dataclasses.replace(cfg(), **kw))
        assert all(np.isfinite(r.total) for r in res.log)
