"""Synthetic scenes, file formats and manifests."""

from .formats import FormatError, LabelGrid, read_grid, read_image, write_grid, write_image
from .manifest import Entry, ManifestError, Sample, build_manifest, generate_dataset, load_samples, read_manifest, split, write_manifest
from .synthetic import PlacementError, Primitive, Scene, SyntheticSceneSpec, derive_seed, generate_scene

__all__ = [
    "Entry",
    "FormatError",
    "LabelGrid",
    "ManifestError",
    "PlacementError",
    "Primitive",
    "Sample",
    "Scene",
    "SyntheticSceneSpec",
    "build_manifest",
    "derive_seed",
    "generate_dataset",
    "generate_scene",
    "load_samples",
    "read_grid",
    "read_image",
    "read_manifest",
    "split",
    "write_grid",
    "write_image",
    "write_manifest",
]
