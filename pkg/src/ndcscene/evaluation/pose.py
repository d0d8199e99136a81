"""Robustness to the choice of target-space pose.

Each evaluation scene gets an angle ``u * theta`` about the vertical axis
through the grid center, with ``u ~ U[0, 1]`` drawn once per scene and
reused for every ``theta`` (common random numbers), so rows differ only in
the rotation magnitude. The camera is re-expressed in the rotated frame and
the ground truth is resampled by nearest neighbour; voxels that land outside
the original grid become unknown.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data.formats import LabelGrid
from ..data.manifest import Sample
from ..geometry import CameraModel, NdcGridSpec, TargetGridSpec, axis_angle_matrix, rotate_extrinsics
from ..model.network import SscNet
from .metrics import aggregate
from .runner import predict

CSV_HEADER = ("theta_deg", "iou", "miou", "n_scenes", "seed")

# full-scale NYUv2 numbers (IoU, mIoU) by theta, for context only
REFERENCE = {
    "ndc_scene": {0: (44.17, 29.03), 5: (42.88, 28.28), 10: (39.07, 24.64), 15: (36.74, 22.39)},
    "monoscene": {0: (42.51, 26.94), 5: (38.99, 23.20), 10: (33.52, 20.15), 15: (30.05, 16.71)},
}


@dataclass(frozen=True)
class PoseRow:
    theta_deg: float
    iou: float
    miou: float
    n_scenes: int
    seed: int

    def as_tuple(self):
        return (self.theta_deg, self.iou, self.miou, self.n_scenes, self.seed)


def rotate_labels(grid: LabelGrid, spec: TargetGridSpec, angle_deg: float, axis=(0.0, 1.0, 0.0)) -> LabelGrid:
    """Labels of the scene seen from a target frame rotated by ``angle_deg`` about ``axis`` through the grid center."""
    if angle_deg == 0:
        return grid
    R = axis_angle_matrix(angle_deg, axis)
    c = spec.center
    q = spec.voxel_centers().reshape(-1, 3)
    p = (q - c) @ R.T + c  # where each rotated voxel center sits in the original frame
    idx = np.floor((p - np.asarray(spec.origin)) / spec.voxel_size).astype(np.int64)
    dims = np.asarray(spec.dims)
    inside = np.all((idx >= 0) & (idx < dims), axis=1)
    labels = np.zeros(len(q), np.uint8)
    unknown = np.ones(len(q), bool)
    i = idx[inside]
    labels[inside] = grid.labels[i[:, 0], i[:, 1], i[:, 2]]
    unknown[inside] = grid.unknown[i[:, 0], i[:, 1], i[:, 2]]
    return LabelGrid(labels.reshape(spec.dims), unknown.reshape(spec.dims), grid.num_classes)


def rotate_sample(sample: Sample, spec: TargetGridSpec, angle_deg: float, axis=(0.0, 1.0, 0.0)) -> Sample:
    if angle_deg == 0:
        return sample
    e = rotate_extrinsics(sample.camera.extrinsics, angle_deg, axis, pivot=spec.center)
    return Sample(sample.image, rotate_labels(sample.grid, spec, angle_deg, axis), CameraModel(sample.camera.intrinsics, e))


def pose_robustness_experiment(
    model: SscNet,
    samples: list[Sample],
    target: TargetGridSpec,
    ndc: NdcGridSpec,
    thetas,
    seed: int = 0,
    axis=(0.0, 1.0, 0.0),
) -> list[PoseRow]:
    u = np.random.default_rng(seed).uniform(0.0, 1.0, len(samples))
    rows = []
    for theta in thetas:
        rotated = [rotate_sample(s, target, float(theta) * ui, axis) for s, ui in zip(samples, u)]
        preds = [predict(model, s, target, ndc) for s in rotated]
        rep = aggregate(preds, [s.grid for s in rotated])
        rows.append(PoseRow(float(theta), rep.iou_occupancy, rep.miou, len(samples), seed))
    return rows


def write_pose_csv(path, rows: list[PoseRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow((f"{r.theta_deg:g}", repr(r.iou), repr(r.miou), r.n_scenes, r.seed))


def read_pose_csv(path) -> list[PoseRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected pose CSV header {header}")
        return [PoseRow(float(a), float(b), float(c), int(d), int(e)) for a, b, c, d, e in reader]
