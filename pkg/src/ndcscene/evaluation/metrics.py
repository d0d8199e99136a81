"""Occupancy IoU and per-class IoU over known voxels."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..data.formats import LabelGrid

UNKNOWN_POLICY = "voxels marked unknown in the ground truth are excluded from every count"
MIOU_POLICY = "mIoU averages semantic classes present in prediction or ground truth; classes absent from both are skipped"


@dataclass
class MetricsReport:
    iou_occupancy: float
    per_class_iou: list  # [(class id, iou or None)] for classes 1..M
    miou: float
    tp: list  # per class 0..M
    fp: list
    fn: list
    occupancy_counts: dict = field(default_factory=dict)  # tp, fp, fn for occupied-vs-free
    n_voxels: int = 0
    notes: tuple = (UNKNOWN_POLICY, MIOU_POLICY)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_class_iou"] = [[c, v] for c, v in self.per_class_iou]
        d["notes"] = list(self.notes)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def confusion(pred: np.ndarray, gt: np.ndarray, known: np.ndarray, num_classes: int) -> np.ndarray:
    """``conf[g, p]`` counts of known voxels with ground truth ``g`` predicted as ``p``."""
    g = gt[known].astype(np.int64).ravel()
    p = pred[known].astype(np.int64).ravel()
    return np.bincount(g * num_classes + p, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def report_from_confusion(conf: np.ndarray) -> MetricsReport:
    K = conf.shape[0]
    tp = np.diag(conf)
    fp = conf.sum(axis=0) - tp
    fn = conf.sum(axis=1) - tp
    occ_tp = int(conf[1:, 1:].sum())
    occ_fp = int(conf[0, 1:].sum())
    occ_fn = int(conf[1:, 0].sum())
    denom = occ_tp + occ_fp + occ_fn
    iou = occ_tp / denom if denom else 1.0
    per_class = []
    vals = []
    for c in range(1, K):
        d = int(tp[c] + fp[c] + fn[c])
        if d == 0:
            per_class.append((c, None))
        else:
            v = int(tp[c]) / d
            per_class.append((c, v))
            vals.append(v)
    miou = float(np.mean(vals)) if vals else 1.0
    return MetricsReport(
        iou_occupancy=float(iou),
        per_class_iou=per_class,
        miou=miou,
        tp=[int(v) for v in tp],
        fp=[int(v) for v in fp],
        fn=[int(v) for v in fn],
        occupancy_counts={"tp": occ_tp, "fp": occ_fp, "fn": occ_fn},
        n_voxels=int(conf.sum()),
    )


def compute_metrics(pred: LabelGrid, gt: LabelGrid) -> MetricsReport:
    if pred.dims != gt.dims:
        raise ValueError(f"prediction dims {pred.dims} != ground truth dims {gt.dims}")
    K = max(pred.num_classes, gt.num_classes)
    return report_from_confusion(confusion(pred.labels, gt.labels, gt.known, K))


def aggregate(preds: list[LabelGrid], gts: list[LabelGrid]) -> MetricsReport:
    """Metrics over a dataset: confusion counts summed over scenes in order."""
    if len(preds) != len(gts) or not gts:
        raise ValueError("need equal, non-empty lists of predictions and ground truths")
    K = max(max(p.num_classes for p in preds), max(g.num_classes for g in gts))
    conf = np.zeros((K, K), dtype=np.int64)
    for p, g in zip(preds, gts):
        if p.dims != g.dims:
            raise ValueError(f"prediction dims {p.dims} != ground truth dims {g.dims}")
        conf += confusion(p.labels, g.labels, g.known, K)
    return report_from_confusion(conf)


def majority_baseline(train_grids: list[LabelGrid], eval_grids: list[LabelGrid]) -> MetricsReport:
    """Predict the most frequent known training class at every voxel."""
    K = max(g.num_classes for g in train_grids + eval_grids)
    counts = np.zeros(K, dtype=np.int64)
    for g in train_grids:
        counts += np.bincount(g.labels[g.known].ravel(), minlength=K)[:K]
    c = int(np.argmax(counts))
    preds = [LabelGrid(np.full(g.dims, c, np.uint8), np.zeros(g.dims, bool), K) for g in eval_grids]
    return aggregate(preds, eval_grids)
