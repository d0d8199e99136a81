"""The run configuration shared by every CLI command.

A YAML tree with sections ``camera``, ``grids``, ``scene``, ``data``,
``model``, ``train``, ``pose`` and ``ablate``; missing keys take the defaults
below. Validation reports the dotted path of the first bad field.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .data.synthetic import SyntheticSceneSpec
from .geometry import CameraModel, Intrinsics, NdcGridSpec, TargetGridSpec, look_at
from .model.config import VARIANTS, ConfigError, ModelConfig, shape_plan
from .model.training import TrainConfig


@dataclass
class CameraSection:
    fx: float = 55.4
    fy: float = 55.4
    cx: float = 32.0
    cy: float = 24.0
    width: int = 64
    height: int = 48
    eye: tuple = (2.4, 1.7, -0.4)
    look: tuple = (2.4, 2.9, 3.0)
    up: tuple = (0.0, -1.0, 0.0)


@dataclass
class TargetSection:
    dims: tuple = (48, 32, 48)
    voxel_size: float = 0.1
    origin: tuple = (0.0, 0.0, 0.0)


@dataclass
class NdcSection:
    dims: tuple = (32, 24, 32)
    stride: float = 2.0
    d_min: float = 0.2
    d_max: float = 6.2


@dataclass
class GridsSection:
    target: TargetSection = field(default_factory=TargetSection)
    ndc: NdcSection = field(default_factory=NdcSection)
    vertical_axis: tuple = (0.0, 1.0, 0.0)


@dataclass
class SceneSection:
    eye_jitter: tuple = (0.15, 0.1, 0.15)
    look_jitter: tuple = (0.2, 0.1, 0.2)
    num_objects: tuple = (2, 4)
    primitives: tuple = ("box", "tall_box", "cylinder", "slab")
    num_semantic: int = 5
    floor_y: float = 2.9
    wall_thickness: float = 0.2
    structure: bool = True
    near_z: float = 1.0
    max_retries: int = 200
    color_jitter: float = 0.08


@dataclass
class DataSection:
    dir: str = "data"  # relative paths resolve under the output directory
    count: int = 80
    train_fraction: float = 0.8


@dataclass
class PoseSection:
    thetas: tuple = (0.0, 5.0, 10.0, 15.0)


@dataclass
class AblateSection:
    variants: tuple = ("ndc_full", "ndc_fa", "ndc_ci", "ndc_nf")
    seeds: tuple = (0,)


_SECTIONS = {
    "camera": CameraSection,
    "grids": GridsSection,
    "scene": SceneSection,
    "data": DataSection,
    "pose": PoseSection,
    "ablate": AblateSection,
}


def _build(cls, raw, path):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(path, f"expected a mapping, got {type(raw).__name__}")
    kwargs = {}
    flds = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in raw.items():
        if key not in flds:
            raise ConfigError(f"{path}.{key}", "unknown field")
        default = getattr(cls(), key)
        sub = f"{path}.{key}"
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, sub)
        elif isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(sub, "expected a list")
            kwargs[key] = tuple(value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(sub, "expected true or false")
            kwargs[key] = value
        elif isinstance(default, (int, float)):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(sub, f"expected a number, got {value!r}")
            if isinstance(default, int) and not float(value).is_integer():
                raise ConfigError(sub, f"expected an integer, got {value!r}")
            kwargs[key] = type(default)(value)
        else:
            kwargs[key] = str(value)
    return cls(**kwargs)


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    camera: CameraSection = field(default_factory=CameraSection)
    grids: GridsSection = field(default_factory=GridsSection)
    scene: SceneSection = field(default_factory=SceneSection)
    data: DataSection = field(default_factory=DataSection)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pose: PoseSection = field(default_factory=PoseSection)
    ablate: AblateSection = field(default_factory=AblateSection)

    # construction ----------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict | None) -> "RunConfig":
        raw = dict(raw or {})
        known = {f.name for f in dataclasses.fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(key, "unknown section")
        seed = raw.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed", f"expected a non-negative integer, got {seed!r}")
        kwargs = {"seed": seed, "out": str(raw.get("out", cls.out))}
        for name, section in _SECTIONS.items():
            kwargs[name] = _build(section, raw.get(name), name)
        model = dict(raw.get("model") or {})
        model.setdefault("seed", seed)
        kwargs["model"] = ModelConfig.from_dict(model, "model")
        train = dict(raw.get("train") or {})
        train.setdefault("seed", seed)
        try:
            kwargs["train"] = TrainConfig.from_dict(train, "train")
        except TypeError as exc:
            raise ConfigError("train", str(exc)) from None
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(str(path), f"not valid YAML: {exc}") from None
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
        if raw is not None and not isinstance(raw, dict):
            raise ConfigError(str(path), "top level must be a mapping")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return _plain(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def with_seed(self, seed: int) -> "RunConfig":
        """Same config under another master seed (model init and batch order follow it)."""
        d = self.to_dict()
        d["seed"] = seed
        d["model"]["seed"] = seed
        d["train"]["seed"] = seed
        return RunConfig.from_dict(d)

    # derived objects -------------------------------------------------------

    def intrinsics(self) -> Intrinsics:
        c = self.camera
        return Intrinsics(c.fx, c.fy, c.cx, c.cy, c.width, c.height)

    def camera_model(self) -> CameraModel:
        c = self.camera
        return CameraModel(self.intrinsics(), look_at(c.eye, c.look, c.up))

    def target(self) -> TargetGridSpec:
        t = self.grids.target
        return TargetGridSpec(tuple(t.dims), t.voxel_size, tuple(t.origin))

    def ndc(self) -> NdcGridSpec:
        n = self.grids.ndc
        return NdcGridSpec(tuple(n.dims), n.stride, n.d_min, n.d_max)

    def scene_spec(self) -> SyntheticSceneSpec:
        s = self.scene
        spec = SyntheticSceneSpec(
            self.target(),
            self.intrinsics(),
            eye=tuple(self.camera.eye),
            look=tuple(self.camera.look),
            eye_jitter=tuple(s.eye_jitter),
            look_jitter=tuple(s.look_jitter),
            num_objects=tuple(s.num_objects),
            primitives=tuple(s.primitives),
            num_semantic=s.num_semantic,
            floor_y=s.floor_y,
            wall_thickness=s.wall_thickness,
            structure=s.structure,
            near_z=s.near_z,
            max_retries=s.max_retries,
            color_jitter=s.color_jitter,
        )
        try:
            spec.validate()
        except ValueError as exc:
            raise ConfigError("scene", str(exc)) from None
        return spec

    def out_dir(self) -> Path:
        return Path(self.out)

    def data_dir(self) -> Path:
        d = Path(self.data.dir)
        return d if d.is_absolute() else self.out_dir() / d

    # validation ------------------------------------------------------------

    def validate(self) -> None:
        def wrap(path, fn):
            try:
                return fn()
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(path, str(exc)) from None

        for key in ("eye", "look", "up"):
            if len(getattr(self.camera, key)) != 3:
                raise ConfigError(f"camera.{key}", "expected three numbers")
        k = wrap("camera", self.intrinsics)
        wrap("camera", self.camera_model)
        for key, n in (("dims", 3), ("origin", 3)):
            if len(getattr(self.grids.target, key)) != n:
                raise ConfigError(f"grids.target.{key}", f"expected {n} values")
        if len(self.grids.ndc.dims) != 3:
            raise ConfigError("grids.ndc.dims", "expected 3 values")
        if len(self.grids.vertical_axis) != 3 or not np.any(self.grids.vertical_axis):
            raise ConfigError("grids.vertical_axis", "expected a non-zero 3-vector")
        target = wrap("grids.target", self.target)
        ndc = wrap("grids.ndc", self.ndc)
        m = self.model
        if (k.height, k.width) != m.image_hw:
            raise ConfigError("model.image_hw", f"{m.image_hw} does not match camera image {k.height}x{k.width}")
        try:
            shape_plan(m, target.dims)
        except TypeError as exc:
            raise ConfigError("model", str(exc)) from None
        if ndc.dims != m.ndc_dims:
            raise ConfigError("grids.ndc.dims", f"{ndc.dims} does not match the decoder output {m.ndc_dims}")
        if ndc.stride != m.ndc_stride:
            raise ConfigError("grids.ndc.stride", f"{ndc.stride} does not match the decoder stride {m.ndc_stride}")
        if m.num_classes != self.scene.num_semantic + 1:
            raise ConfigError("model.num_classes", f"{m.num_classes} != scene.num_semantic + 1 = {self.scene.num_semantic + 1}")
        if self.data.count < 2:
            raise ConfigError("data.count", "need at least two scenes")
        if not 0.0 < self.data.train_fraction < 1.0:
            raise ConfigError("data.train_fraction", "must be strictly between 0 and 1")
        for i, t in enumerate(self.pose.thetas):
            if not isinstance(t, (int, float)) or t < 0:
                raise ConfigError(f"pose.thetas[{i}]", "angles must be non-negative numbers")
        for i, v in enumerate(self.ablate.variants):
            if v not in VARIANTS:
                raise ConfigError(f"ablate.variants[{i}]", f"must be one of {VARIANTS}")
        if not self.ablate.seeds:
            raise ConfigError("ablate.seeds", "need at least one seed")
