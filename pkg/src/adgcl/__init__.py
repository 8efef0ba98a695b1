"""Contrastive graph anomaly detection robust to degree imbalance."""

__version__ = "0.1.0"

from .data_io import DatasetBundle, RunConfig, load_dataset_dir
from .evaluate import (EvalReport, anomaly_scores, auprc_ap, evaluate_graph, roc_auc,
                       stratified_eval)
from .graph_core import AttributedGraph, build_graph, partition_by_degree
from .inject import inject_anomalies
from .trainer import checkpoint, restore, train

__all__ = [
    "AttributedGraph", "DatasetBundle", "EvalReport", "RunConfig", "anomaly_scores",
    "auprc_ap", "build_graph", "checkpoint", "evaluate_graph", "inject_anomalies",
    "load_dataset_dir", "partition_by_degree", "restore", "roc_auc", "stratified_eval", "train",
]
