import json

import numpy as np
import pytest

from adgcl.cli import main
from adgcl.data_io import read_scores, write_edges, write_features
from adgcl.synthetic import cora_like


@pytest.fixture(scope="module")
def raw(tmp_path_factory):
    d = tmp_path_factory.mktemp("raw")
    g, _ = cora_like(120, 30, 3, 260, words_per_node=6, topic_words=8, rng=0)
    write_edges(g, d / "edges.txt")
    write_features(g.features, d / "features.csv")
    return d


@pytest.fixture(scope="module")
def injected(raw, tmp_path_factory):
    out = tmp_path_factory.mktemp("inj")
    code = main(["inject", "--graph", str(raw / "edges.txt"), "--features",
                 str(raw / "features.csv"), "--out-dir", str(out), "--clique-size", "5",
                 "--clique-count", "1", "--k-candidates", "20", "--seed", "1"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "config.json"
    p.write_text(json.dumps({"d": 8, "epochs": 4, "w": 2, "r": 4}))
    return p


def test_inject_outputs(injected):
    man = json.loads((injected / "manifest.json").read_text())
    assert man["anomaly_count"] == 10 and man["seed"] == 1
    assert {p.name for p in injected.iterdir()} >= {"edges.txt", "features.csv", "labels.csv"}


def test_inject_is_reproducible(raw, injected, tmp_path):
    main(["inject", "--graph", str(raw / "edges.txt"), "--features", str(raw / "features.csv"),
          "--out-dir", str(tmp_path), "--clique-size", "5", "--clique-count", "1",
          "--k-candidates", "20", "--seed", "1"])
    for name in ("edges.txt", "features.csv", "labels.csv"):
        assert (tmp_path / name).read_bytes() == (injected / name).read_bytes()


def test_inject_bad_clique(raw, tmp_path):
    assert main(["inject", "--graph", str(raw / "edges.txt"), "--features",
                 str(raw / "features.csv"), "--out-dir", str(tmp_path),
                 "--clique-size", "1"]) == 2


def test_inject_missing_file(tmp_path):
    assert main(["inject", "--graph", str(tmp_path / "nope"), "--features",
                 str(tmp_path / "nope2"), "--out-dir", str(tmp_path)]) == 3


def test_pipeline(injected, config_file, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--data", str(injected), "--config", str(config_file),
                 "--out", str(run)]) == 0
    resolved = json.loads((run / "resolved_config.json").read_text())
    assert resolved["tau"] == 0.07 and resolved["epochs"] == 4 and resolved["k_threshold"] == 6
    log = (run / "train_log.ndjson").read_text().splitlines()
    assert len(log) == 4
    assert main(["score", "--data", str(injected), "--checkpoint", str(run / "model.ckpt"),
                 "--config", str(config_file), "--out", str(run / "scores.csv")]) == 0
    scores = read_scores(run / "scores.csv")
    assert len(scores) == 120 and np.all(np.abs(scores) < 1)
    assert json.loads((run / "manifest.json").read_text())["rounds"] == 4
    assert main(["eval", "--scores", str(run / "scores.csv"), "--labels",
                 str(injected / "labels.csv"), "--graph", str(injected / "edges.txt"),
                 "--out", str(run / "eval")]) == 0
    report = json.loads((run / "eval" / "report.json").read_text())
    assert report["k_threshold"] == 6 and 0 <= report["auc"] <= 1
    assert (run / "eval" / "degree_auc.csv").read_text().startswith("degree,auc,count\n")


def test_unknown_config_key(injected, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"bogus": 1}')
    assert main(["train", "--data", str(injected), "--config", str(bad),
                 "--out", str(tmp_path / "o")]) == 2


def test_corrupt_checkpoint(injected, tmp_path):
    (tmp_path / "m.ckpt").write_bytes(b"ADGCLCKP" + b"\0" * 20)
    assert main(["score", "--data", str(injected), "--checkpoint", str(tmp_path / "m.ckpt"),
                 "--out", str(tmp_path / "s.csv")]) == 3


def test_eval_perfect_and_missing_labels(injected, tmp_path):
    labels = np.loadtxt(injected / "labels.csv", delimiter=",", skiprows=1, usecols=1)
    from adgcl.data_io import write_scores
    write_scores(labels.astype(float), tmp_path / "s.csv")
    assert main(["eval", "--scores", str(tmp_path / "s.csv"), "--labels",
                 str(injected / "labels.csv"), "--graph", str(injected / "edges.txt"),
                 "--out", str(tmp_path / "e")]) == 0
    assert json.loads((tmp_path / "e" / "report.json").read_text())["auc"] == 1.0
    assert main(["eval", "--scores", str(tmp_path / "s.csv"), "--labels",
                 str(tmp_path / "none.csv"), "--graph", str(injected / "edges.txt"),
                 "--out", str(tmp_path / "e2")]) == 3


def test_eval_single_class_nulls(injected, tmp_path):
    (tmp_path / "l.csv").write_text("".join(f"{i},0,none\n" for i in range(120)))
    from adgcl.data_io import write_scores
    write_scores(np.linspace(0, 1, 120), tmp_path / "s.csv")
    assert main(["eval", "--scores", str(tmp_path / "s.csv"), "--labels",
                 str(tmp_path / "l.csv"), "--graph", str(injected / "edges.txt"),
                 "--out", str(tmp_path / "e")]) == 0
    assert json.loads((tmp_path / "e" / "report.json").read_text())["auc"] is None


def test_ablate(injected, config_file, tmp_path):
    assert main(["ablate", "--data", str(injected), "--config", str(config_file),
                 "--out", str(tmp_path), "--seed", "7"]) == 0
    rows = (tmp_path / "comparison.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["full", "wo_np", "wo_nc", "wo_intra",
                                                    "wo_inter"]
    for name in ("full", "wo_np", "wo_nc", "wo_intra", "wo_inter"):
        assert (tmp_path / name / "report.json").exists()
    assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 7


def test_usage_error():
    assert main(["train"]) == 2
    assert main(["--threads", "0", "synth", "--out-dir", "/tmp/x"]) == 2


def test_synth(tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path), "--nodes", "50", "--features", "20",
                 "--edges", "80"]) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["n"] == 50
