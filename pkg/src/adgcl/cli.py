"""Command-line pipeline: inject, train, score, eval, ablate, synth.

Exit codes: 0 success, 2 usage or parameter error, 3 I/O error,
4 numerical failure. ``ADGCL_LOG`` (error, warn, info, debug) sets verbosity.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .data_io import (DATASET_DEFAULTS, DatasetBundle, RunConfig, config_from_dict,
                      load_dataset_dir, read_edges, read_features, read_labels, read_scores,
                      save_dataset, write_scores)
from .errors import ADGCLError, ParameterError
from .evaluate import DEFAULT_ROUNDS, anomaly_scores, evaluate_graph
from .graph_core import build_graph
from .inject import DEFAULT_CLIQUE_SIZE, DEFAULT_K_CANDIDATES, inject_anomalies
from .trainer import checkpoint, load_window, restore, save_window, train

log = logging.getLogger("adgcl")

CHECKPOINT_FILE = "model.ckpt"
WINDOW_FILE = "score_window.npz"
TRAIN_LOG_FILE = "train_log.ndjson"
MANIFEST_FILE = "manifest.json"
CONFIG_DUMP_FILE = "resolved_config.json"
REPORT_FILE = "report.json"
DEGREE_CSV_FILE = "degree_auc.csv"

ABLATIONS = {
    "full": {},
    "wo_np": {"disable_np": True},
    "wo_nc": {"disable_nc": True},
    "wo_intra": {"disable_intra": True},
    "wo_inter": {"disable_inter": True},
}

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest(out_dir, command, args, seed, config=None, **extra):
    """Resolved arguments, seed and config: enough to rerun the command."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    argv = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
            if k != "func"}
    body = dict(command=command, version=__version__, seed=seed, args=argv, **extra)
    if config is not None:
        body["config"] = config.to_dict()
        _write_json(out / CONFIG_DUMP_FILE, config.to_dict())
    _write_json(out / MANIFEST_FILE, body)


def _read_config(path, seed=None, dataset=None) -> RunConfig:
    if path is None:
        data = {}
    else:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ParameterError(f"{path}: config must be a JSON object")
    if seed is not None:
        data["seed"] = seed
    if dataset is not None and "dataset" not in data:
        data["dataset"] = dataset
    return config_from_dict(data)


def cmd_inject(args):
    edges = read_edges(args.graph)
    x = read_features(args.features)
    g = build_graph(edges, x)
    name = (args.dataset or "").lower()
    q = args.clique_count
    if q is None:
        q = DATASET_DEFAULTS.get(name, {}).get("clique_count", 5)
    g2, labels, kinds = inject_anomalies(g, args.clique_size, q, args.feature_count,
                                         args.k_candidates, np.random.default_rng(args.seed))
    save_dataset(DatasetBundle(g2, labels, kinds, args.dataset), args.out_dir)
    _manifest(args.out_dir, "inject", args, args.seed,
              clique_size=args.clique_size, clique_count=q,
              feature_count=int((kinds == "feature").sum()),
              structural_count=int((kinds == "structural").sum()),
              anomaly_count=int(labels.sum()), n=g.n,
              anomaly_rate=float(labels.mean()))
    log.info("injected %d anomalies into %d nodes", int(labels.sum()), g.n)
    return 0


def _train_to(bundle, config, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / TRAIN_LOG_FILE, "w") as fh:
        result = train(bundle, config, log_stream=fh)
    checkpoint(result.params, out / CHECKPOINT_FILE)
    save_window(result.window, out / WINDOW_FILE)
    return result


def cmd_train(args):
    bundle = load_dataset_dir(args.data)
    config = _read_config(args.config, args.seed, args.dataset)
    _manifest(args.out, "train", args, config.seed, config)
    _train_to(bundle, config, args.out)
    return 0


def _score_bundle(bundle, params, config, rounds, seed, window=None):
    return anomaly_scores(bundle.graph, params, rounds, seed, config, window)


def cmd_score(args):
    bundle = load_dataset_dir(args.data)
    config = _read_config(args.config, args.seed, args.dataset)
    params = restore(args.checkpoint)
    if params.f != bundle.graph.f:
        raise ParameterError(f"checkpoint expects {params.f} features, data has {bundle.graph.f}")
    if config.gcn_layers != len(params.gcn_weights):
        config = dataclasses.replace(config, gcn_layers=len(params.gcn_weights))
    window = None
    if config.score_view == "completion_avg":
        wpath = args.window or Path(args.checkpoint).with_name(WINDOW_FILE)
        window = load_window(wpath)
    rounds = args.rounds if args.rounds is not None else config.r
    scores = _score_bundle(bundle, params, config, rounds, config.seed, window)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scores(scores, out)
    _manifest(out.parent, "score", args, config.seed, config, rounds=rounds)
    return 0


def _report(scores, labels, g, k, rounds=None, mode="stratum"):
    return evaluate_graph(scores, labels, g, k, rounds, mode)


def _write_report(report, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_FILE).write_text(report.to_json())
    report.write_degree_csv(out / DEGREE_CSV_FILE)


def cmd_eval(args):
    scores = read_scores(args.scores)
    labels, _ = read_labels(args.labels, len(scores))
    edges = read_edges(args.graph)
    g = build_graph(edges, np.zeros((len(scores), 1)), len(scores))
    report = _report(scores, labels, g, args.k, None, args.stratify_mode)
    _write_report(report, args.out)
    _manifest(args.out, "eval", args, None)
    return 0


def cmd_ablate(args):
    bundle = load_dataset_dir(args.data)
    if bundle.labels is None:
        raise ParameterError("ablation needs labels.csv in the data directory")
    base = _read_config(args.config, args.seed, args.dataset)
    out = Path(args.out)
    rows = []
    variants = args.variants or list(ABLATIONS)
    for name in variants:
        config = dataclasses.replace(base, **ABLATIONS[name])
        result = _train_to(bundle, config, out / name)
        rounds = args.rounds if args.rounds is not None else config.r
        scores = _score_bundle(bundle, result.params, config, rounds, config.seed,
                               result.window)
        write_scores(scores, out / name / "scores.csv")
        report = _report(scores, bundle.labels, bundle.graph, config.k_threshold, rounds,
                         config.stratify_mode)
        _write_report(report, out / name)
        rows.append([name, report.auc, report.tail_auc, report.head_auc, report.auprc,
                     report.ap, report.regression_slope])
        log.info("%s: auc=%s", name, report.auc)
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "auc", "tail_auc", "head_auc", "auprc", "ap", "slope"])
        w.writerows(rows)
    _manifest(out, "ablate", args, base.seed, base, variants=variants)
    return 0


def cmd_synth(args):
    from .synthetic import cora_like
    g, _ = cora_like(args.nodes, args.features, args.classes, args.edges,
                     rng=np.random.default_rng(args.seed))
    save_dataset(DatasetBundle(g, None, None, "synthetic"), args.out_dir)
    _manifest(args.out_dir, "synth", args, args.seed, n=g.n, edges=g.num_edges)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adgcl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on BLAS worker threads")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("inject", help="plant structural and feature anomalies")
    s.add_argument("--graph", required=True, type=Path)
    s.add_argument("--features", required=True, type=Path)
    s.add_argument("--out-dir", required=True, type=Path)
    s.add_argument("--dataset", default=None, help="name used for the default clique count")
    s.add_argument("--clique-size", type=int, default=DEFAULT_CLIQUE_SIZE)
    s.add_argument("--clique-count", type=int, default=None)
    s.add_argument("--feature-count", type=int, default=None)
    s.add_argument("--k-candidates", type=int, default=DEFAULT_K_CANDIDATES)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_inject)

    s = sub.add_parser("train", help="train on a dataset directory")
    s.add_argument("--data", required=True, type=Path)
    s.add_argument("--config", type=Path, default=None)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    s.add_argument("--dataset", default=None, help="dataset name for default hyperparameters")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("score", help="write per-node anomaly scores")
    s.add_argument("--data", required=True, type=Path)
    s.add_argument("--checkpoint", required=True, type=Path)
    s.add_argument("--config", type=Path, default=None)
    s.add_argument("--window", type=Path, default=None)
    s.add_argument("--rounds", type=int, default=None, help=f"default {DEFAULT_ROUNDS}")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--dataset", default=None)
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("eval", help="metrics for a score file")
    s.add_argument("--scores", required=True, type=Path)
    s.add_argument("--labels", required=True, type=Path)
    s.add_argument("--graph", required=True, type=Path)
    s.add_argument("--k", type=int, default=6)
    s.add_argument("--stratify-mode", default="stratum",
                   choices=("stratum", "stratum_vs_all_normals"))
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="train, score and evaluate the ablation variants")
    s.add_argument("--data", required=True, type=Path)
    s.add_argument("--config", type=Path, default=None)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--dataset", default=None)
    s.add_argument("--rounds", type=int, default=None)
    s.add_argument("--variants", nargs="+", choices=list(ABLATIONS), default=None)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("synth", help="generate a Cora-shaped synthetic graph")
    s.add_argument("--out-dir", required=True, type=Path)
    s.add_argument("--nodes", type=int, default=2708)
    s.add_argument("--features", type=int, default=1433)
    s.add_argument("--classes", type=int, default=7)
    s.add_argument("--edges", type=int, default=5278)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)
    return p


def _setup_logging():
    level = _LEVELS.get(os.environ.get("ADGCL_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _limit_threads(n):
    if n is None:
        return
    if n < 1:
        raise ParameterError("--threads must be >= 1")
    threadpool_limits(n)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _limit_threads(args.threads)
        return args.func(args)
    except ADGCLError as exc:
        log.error("%s", exc)
        print(f"adgcl: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"adgcl: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
