"""Dataset directories and line-oriented manifests.

A dataset directory holds, per scene, ``<stem>.imgf``, ``<stem>.vxgd`` and
``<stem>.camera.json``. The manifest has one line per scene::

    image_path<TAB>grid_path<TAB>camera_json
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import CameraModel
from .formats import LabelGrid, read_grid, read_image, write_grid, write_image
from .synthetic import SyntheticSceneSpec, derive_seed, generate_scene

MANIFEST_NAME = "manifest.tsv"


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Entry:
    image_path: str
    grid_path: str
    camera: dict

    def line(self) -> str:
        return f"{self.image_path}\t{self.grid_path}\t{json.dumps(self.camera, sort_keys=True)}"


@dataclass
class Sample:
    image: np.ndarray
    grid: LabelGrid
    camera: CameraModel


def build_manifest(directory) -> list[Entry]:
    d = Path(directory)
    if not d.is_dir():
        raise ManifestError(f"{d} is not a directory")
    images = {p.name[: -len(".imgf")]: p for p in d.glob("*.imgf")}
    grids = {p.name[: -len(".vxgd")]: p for p in d.glob("*.vxgd")}
    if not images and not grids:
        raise ManifestError(f"no scenes found in {d}")
    unpaired = sorted(set(images) ^ set(grids))
    if unpaired:
        raise ManifestError(f"unpaired scene files: {unpaired[:5]}")
    entries = []
    for stem in sorted(images):
        cam_path = d / f"{stem}.camera.json"
        if not cam_path.exists():
            raise ManifestError(f"missing camera file {cam_path.name}")
        entries.append(Entry(images[stem].name, grids[stem].name, json.loads(cam_path.read_text())))
    return entries


def write_manifest(path, entries: list[Entry]) -> None:
    Path(path).write_text("".join(e.line() + "\n" for e in entries))


def read_manifest(path) -> list[Entry]:
    entries = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ManifestError(f"{path}:{n}: expected 3 tab-separated fields, got {len(parts)}")
        entries.append(Entry(parts[0], parts[1], json.loads(parts[2])))
    return entries


def split(entries: list[Entry], train_fraction: float, seed: int) -> tuple[list[Entry], list[Entry]]:
    """Deterministic disjoint train/eval split."""
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError("train_fraction must be in [0, 1]")
    order = np.random.default_rng(seed).permutation(len(entries))
    n_train = int(round(train_fraction * len(entries)))
    train = [entries[i] for i in sorted(order[:n_train])]
    test = [entries[i] for i in sorted(order[n_train:])]
    return train, test


def load_sample(directory, entry: Entry) -> Sample:
    d = Path(directory)
    return Sample(read_image(d / entry.image_path), read_grid(d / entry.grid_path), CameraModel.from_dict(entry.camera))


def load_samples(directory, entries: list[Entry]) -> list[Sample]:
    return [load_sample(directory, e) for e in entries]


def generate_dataset(spec: SyntheticSceneSpec, directory, count: int, seed: int, prefix: str = "scene") -> list[Entry]:
    """Write ``count`` scenes and the manifest; scene ``i`` uses ``derive_seed(seed, i)``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        scene = generate_scene(spec, derive_seed(seed, i))
        stem = f"{prefix}_{i:05d}"
        write_image(d / f"{stem}.imgf", scene.image)
        write_grid(d / f"{stem}.vxgd", scene.grid)
        (d / f"{stem}.camera.json").write_text(json.dumps(scene.camera.to_dict(), sort_keys=True))
    entries = build_manifest(d)
    write_manifest(d / MANIFEST_NAME, entries)
    return entries
