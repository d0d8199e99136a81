"""Masked voxel-wise cross-entropy with optional inverse-frequency class weights."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, cross_entropy
from ..data.formats import LabelGrid

WEIGHT_CLIP = (0.5, 5.0)


def class_frequencies(grids: list[LabelGrid], num_classes: int) -> np.ndarray:
    counts = np.zeros(num_classes, dtype=np.int64)
    for g in grids:
        counts += np.bincount(g.labels[g.known].ravel(), minlength=num_classes)[:num_classes]
    total = counts.sum()
    if total == 0:
        raise ValueError("no known voxels to estimate class frequencies from")
    return counts / total


def class_weights(grids: list[LabelGrid], num_classes: int, clip=WEIGHT_CLIP) -> np.ndarray:
    """``(1/K) / freq`` clipped to ``clip``; absent classes get the upper bound."""
    freq = class_frequencies(grids, num_classes)
    with np.errstate(divide="ignore"):
        w = np.where(freq > 0, (1.0 / num_classes) / freq, np.inf)
    return np.clip(w, *clip)


def ssc_loss(logits: Tensor, gt: LabelGrid, weights=None) -> Tensor:
    """Mean cross-entropy over voxels not marked unknown."""
    if logits.shape[1:] != gt.dims:
        raise ValueError(f"logits {logits.shape} do not match ground truth dims {gt.dims}")
    if logits.shape[0] != gt.num_classes:
        raise ValueError(f"{logits.shape[0]} logit channels for {gt.num_classes} classes")
    if not gt.known.any():
        raise ValueError("ground truth has no known voxels")
    return cross_entropy(logits, gt.labels, gt.known, weights)
