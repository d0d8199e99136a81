"""Metrics, the pose-robustness experiment and computation-balance reports."""

from .imbalance import imbalance_report
from .metrics import MetricsReport, aggregate, compute_metrics, confusion, majority_baseline
from .pose import CSV_HEADER, PoseRow, pose_robustness_experiment, read_pose_csv, rotate_labels, rotate_sample, write_pose_csv
from .runner import evaluate, predict

__all__ = [
    "CSV_HEADER",
    "MetricsReport",
    "PoseRow",
    "aggregate",
    "compute_metrics",
    "confusion",
    "evaluate",
    "imbalance_report",
    "majority_baseline",
    "pose_robustness_experiment",
    "predict",
    "read_pose_csv",
    "rotate_labels",
    "rotate_sample",
    "write_pose_csv",
]
