"""File formats and run configuration.

Formats
-------
edges.txt
    Whitespace-separated integer node pairs, one per line. ``#`` starts a
    comment; blank lines are ignored.
features.csv
    Headerless CSV of reals, row ``i`` holds node ``i``.
labels.csv
    ``node_id,label,kind`` with ``label`` in {0, 1} and ``kind`` in
    {none, structural, feature}. A header line is written and optional on read.
scores.csv
    ``node_id,score`` header, then one row per node in id order. Reals are
    rendered with 17 significant digits so reading back is exact.
config.json
    A single JSON object whose keys are :class:`RunConfig` field names.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConsistencyError, ParseError
from .graph_core import AttributedGraph, build_graph

EDGES_FILE = "edges.txt"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.csv"

LABEL_KINDS = ("none", "structural", "feature")
REAL_FMT = "%.17g"

# learning rate, epochs, degree threshold K, clique count q (clique size 15)
DATASET_DEFAULTS = {
    "cora": dict(learning_rate=5e-3, epochs=200, k_threshold=6, clique_count=5),
    "citeseer": dict(learning_rate=3e-3, epochs=200, k_threshold=6, clique_count=5),
    "pubmed": dict(learning_rate=4e-3, epochs=100, k_threshold=6, clique_count=20),
    "bitcoinotc": dict(learning_rate=4e-4, epochs=100, k_threshold=6, clique_count=10),
    "bitotc": dict(learning_rate=5e-4, epochs=100, k_threshold=6, clique_count=10),
    "bitalpha": dict(learning_rate=5e-3, epochs=100, k_threshold=6, clique_count=10),
    "reddit": dict(learning_rate=5e-4, epochs=300, k_threshold=9),
    "tolokers": dict(learning_rate=4e-2, epochs=300, k_threshold=90),
}
FALLBACK_LEARNING_RATE = 1e-3
FALLBACK_EPOCHS = 100
DEFAULT_K = 6


@dataclass
class DatasetBundle:
    graph: AttributedGraph
    labels: np.ndarray | None = None
    kinds: np.ndarray | None = None
    name: str = "dataset"

    def __post_init__(self):
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != self.graph.n:
                raise ConsistencyError(
                    f"{len(self.labels)} labels for a graph with {self.graph.n} nodes")
            if self.kinds is None:
                self.kinds = np.where(self.labels == 1, "structural", "none").astype(object)
            self.kinds = np.asarray(self.kinds, dtype=object)


# -- readers -----------------------------------------------------------------

def read_edges(path) -> np.ndarray:
    path = Path(path)
    pairs = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected two node ids, got {len(parts)} fields", path, lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"non-integer node id in {line!r}", path, lineno) from None
            if u < 0 or v < 0:
                raise ParseError("negative node id", path, lineno)
            pairs.append((u, v))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def read_features(path) -> np.ndarray:
    path = Path(path)
    rows = []
    width = None
    with path.open() as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            try:
                row = np.array(line.split(","), dtype=np.float64)
            except ValueError:
                raise ParseError("non-numeric feature value", path, lineno) from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"expected {width} columns, got {len(row)}", path, lineno)
            if not np.isfinite(row).all():
                raise ParseError("non-finite feature value", path, lineno)
            rows.append(row)
    if not rows:
        return np.zeros((0, 0))
    return np.vstack(rows)


def read_labels(path, n: int | None = None):
    """Return ``(labels, kinds)`` arrays indexed by node id."""
    path = Path(path)
    entries = {}
    with path.open() as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if lineno == 1 and parts[0] == "node_id":
                continue
            if len(parts) not in (2, 3):
                raise ParseError("expected node_id,label[,kind]", path, lineno)
            try:
                node = int(parts[0])
                label = int(parts[1])
            except ValueError:
                raise ParseError(f"unparsable label row {line!r}", path, lineno) from None
            if label not in (0, 1):
                raise ConsistencyError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
            kind = parts[2] if len(parts) == 3 else ("structural" if label else "none")
            if kind not in LABEL_KINDS:
                raise ConsistencyError(f"{path}:{lineno}: unknown anomaly kind {kind!r}")
            if (kind == "none") != (label == 0):
                raise ConsistencyError(f"{path}:{lineno}: kind {kind!r} contradicts label {label}")
            if node in entries:
                raise ConsistencyError(f"{path}:{lineno}: duplicate node id {node}")
            entries[node] = (label, kind)
    size = len(entries) if n is None else n
    if set(entries) != set(range(size)):
        raise ConsistencyError(f"{path}: labels must cover node ids 0..{size - 1} exactly once")
    labels = np.array([entries[i][0] for i in range(size)], dtype=np.int64)
    kinds = np.array([entries[i][1] for i in range(size)], dtype=object)
    return labels, kinds


def read_scores(path) -> np.ndarray:
    path = Path(path)
    values = {}
    with path.open() as fh:
        header = fh.readline().strip()
        if header != "node_id,score":
            raise ParseError("missing 'node_id,score' header", path, 1)
        for lineno, raw in enumerate(fh, 2):
            line = raw.strip()
            if not line:
                continue
            try:
                node, score = line.split(",")
                values[int(node)] = float(score)
            except ValueError:
                raise ParseError(f"bad score row {line!r}", path, lineno) from None
    if set(values) != set(range(len(values))):
        raise ConsistencyError(f"{path}: score node ids are not 0..n-1")
    return np.array([values[i] for i in range(len(values))], dtype=np.float64)


def load_dataset(graph_path, feature_path, label_path=None, name=None) -> DatasetBundle:
    """Load a graph, its features and optional labels into a bundle.

    The node count comes from the feature file; edge ids and label rows are
    checked against it.
    """
    edges = read_edges(graph_path)
    features = read_features(feature_path)
    n = features.shape[0]
    if edges.size and edges.max() >= n:
        raise ConsistencyError(
            f"edge file references node {int(edges.max())} but features have {n} rows")
    graph = build_graph(edges, features)
    labels = kinds = None
    if label_path is not None:
        labels, kinds = read_labels(label_path, n)
    return DatasetBundle(graph, labels, kinds, name or Path(feature_path).parent.name)


def load_dataset_dir(directory, name=None) -> DatasetBundle:
    d = Path(directory)
    labels = d / LABELS_FILE
    return load_dataset(d / EDGES_FILE, d / FEATURES_FILE,
                        labels if labels.exists() else None, name or d.name)


def read_linqs(directory, name="cora") -> DatasetBundle:
    """Read the ``<name>.content`` / ``<name>.cites`` citation layout.

    Paper ids are remapped to 0..n-1 in file order; citations to unknown ids
    are skipped. No anomaly labels are attached.
    """
    d = Path(directory)
    ids, rows = {}, []
    with (d / f"{name}.content").open() as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            ids[parts[0]] = len(ids)
            rows.append(np.array(parts[1:-1], dtype=np.float64))
    pairs = []
    with (d / f"{name}.cites").open() as fh:
        for line in fh:
            parts = line.split()
            if len(parts) == 2 and parts[0] in ids and parts[1] in ids:
                pairs.append((ids[parts[0]], ids[parts[1]]))
    return DatasetBundle(build_graph(np.array(pairs).reshape(-1, 2), np.vstack(rows)), name=name)


# -- writers -----------------------------------------------------------------

def write_edges(g: AttributedGraph, path):
    np.savetxt(path, g.edge_array(), fmt="%d")


def write_features(x, path):
    np.savetxt(path, np.asarray(x, dtype=np.float64), fmt=REAL_FMT, delimiter=",")


def write_labels(labels, kinds, path):
    with Path(path).open("w") as fh:
        fh.write("node_id,label,kind\n")
        for i, (lab, kind) in enumerate(zip(labels, kinds)):
            fh.write(f"{i},{int(lab)},{kind}\n")


def write_scores(scores, path):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    with Path(path).open("w") as fh:
        fh.write("node_id,score\n")
        for i, s in enumerate(scores):
            fh.write(f"{i},{REAL_FMT % s}\n")


def save_dataset(bundle: DatasetBundle, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_edges(bundle.graph, d / EDGES_FILE)
    write_features(bundle.graph.features, d / FEATURES_FILE)
    if bundle.labels is not None:
        write_labels(bundle.labels, bundle.kinds, d / LABELS_FILE)


# -- configuration -----------------------------------------------------------

_CHOICES = {
    "score_contrast_mode": ("pos_neg", "pos_only"),
    "stage2_views": ("completion_pair", "completion_plus_pruned"),
    "score_view": ("original", "completion_avg"),
    "stratify_mode": ("stratum", "stratum_vs_all_normals"),
    "infonce_reduction": ("sum", "mean"),
}


@dataclass
class RunConfig:
    """Hyperparameters of one training + scoring run.

    ``None`` for ``learning_rate``, ``epochs``, ``k_threshold`` or
    ``stage_switch_epoch`` means "derive from ``dataset``" (see
    :meth:`resolved`).
    """

    d: int = 64
    r: int = 256
    w: int = 5
    tau: float = 0.07
    alpha: float = 0.2
    k_threshold: int | None = None
    learning_rate: float | None = None
    epochs: int | None = None
    stage_switch_epoch: int | None = None
    restart_prob: float = 0.5
    rwr_size: int = 4
    seed: int = 0
    disable_np: bool = False
    disable_nc: bool = False
    disable_intra: bool = False
    disable_inter: bool = False
    dataset: str | None = None
    gcn_layers: int = 1
    mask_anchor: bool = False
    normalize_infonce_rows: bool = False
    infonce_reduction: str = "sum"
    score_contrast_mode: str = "pos_neg"
    stage2_views: str = "completion_pair"
    score_view: str = "original"
    stratify_mode: str = "stratum"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def resolved(self) -> "RunConfig":
        """Fill dataset-dependent defaults and validate."""
        defaults = DATASET_DEFAULTS.get((self.dataset or "").lower(), {})
        cfg = dataclasses.replace(self)
        if cfg.learning_rate is None:
            cfg.learning_rate = defaults.get("learning_rate", FALLBACK_LEARNING_RATE)
        if cfg.epochs is None:
            cfg.epochs = defaults.get("epochs", FALLBACK_EPOCHS)
        if cfg.k_threshold is None:
            cfg.k_threshold = defaults.get("k_threshold", DEFAULT_K)
        if cfg.stage_switch_epoch is None:
            cfg.stage_switch_epoch = max(1, cfg.epochs // 2) if cfg.epochs else 0
        cfg.validate()
        return cfg

    def validate(self):
        for name in ("d", "r", "w", "rwr_size", "gcn_layers", "k_threshold"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.epochs and not 1 <= self.stage_switch_epoch <= self.epochs:
            raise ConfigError("stage_switch_epoch must lie in [1, epochs]")
        if not self.tau > 0:
            raise ConfigError("tau must be > 0")
        if not self.alpha >= 0:
            raise ConfigError("alpha must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0 < self.restart_prob < 1:
            raise ConfigError("restart_prob must lie in (0, 1)")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigError("Adam constants out of range")
        if self.mask_anchor and self.gcn_layers != 1:
            raise ConfigError("mask_anchor is only supported with gcn_layers=1")
        for key, allowed in _CHOICES.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _check_type(name, value, annotation):
    optional = "None" in annotation
    if value is None:
        if optional:
            return
        raise ConfigError(f"{name} may not be null")
    if annotation.startswith("bool"):
        ok = isinstance(value, bool)
    elif annotation.startswith("int"):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif annotation.startswith("float"):
        ok = (isinstance(value, (int, float)) and not isinstance(value, bool)
              and math.isfinite(value))
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(f"{name}: expected {annotation}, got {value!r}")


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key, value in data.items():
        _check_type(key, value, str(fields[key].type))
    cfg = RunConfig(**data)
    if isinstance(cfg.learning_rate, int):
        cfg.learning_rate = float(cfg.learning_rate)
    return cfg.resolved()


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)
