"""Camera and grid presets.

``indoor`` and ``outdoor`` reproduce the feature-map shapes of the two
benchmark settings (15x20x16 -> 60x80x64 and 39x12x32 -> 156x48x128); their
frustum depth ranges and image sizes are our own choices. ``desk`` is the
small room setting used for synthetic training.

Outdoor note: the 1220x370 crop is scaled by 1/4 to 305x92.5 and padded to
312x96 on the right and bottom so that an stride-8 encoder yields 39x12.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import CameraGridSpec, CameraModel, Intrinsics, NdcGridSpec, TargetGridSpec, look_at


@dataclass(frozen=True)
class Preset:
    name: str
    camera: CameraModel
    target: TargetGridSpec
    ndc: NdcGridSpec  # decoder output grid
    ndc_seed_dims: tuple[int, int, int]  # (W, H, D) of the reshaped encoder map
    encoder_stride: int

    @property
    def image_hw(self) -> tuple[int, int]:
        return self.camera.intrinsics.height, self.camera.intrinsics.width

    @property
    def camera_grid(self) -> CameraGridSpec:
        return CameraGridSpec.covering(self.ndc, self.camera.intrinsics)


def indoor() -> Preset:
    k = Intrinsics(fx=518.86 / 4, fy=519.47 / 4, cx=325.58 / 4, cy=253.74 / 4, width=160, height=120)
    target = TargetGridSpec((60, 36, 60), 0.08, (0.0, 0.0, 0.0))
    # world: x lateral, y down, z forward; floor at y = 2.88
    e = look_at(eye=(2.4, 1.4, -0.6), target=(2.4, 2.4, 3.0))
    ndc = NdcGridSpec((80, 60, 64), stride=2.0, d_min=0.3, d_max=6.7)
    return Preset("indoor", CameraModel(k, e), target, ndc, (20, 15, 16), 8)


def outdoor() -> Preset:
    k = Intrinsics(fx=707.09 / 4, fy=707.09 / 4, cx=(601.89 - 6.0) / 4, cy=183.11 / 4, width=312, height=96)
    # world: x forward, y left, z up (the usual LiDAR frame), 0.2 m voxels
    target = TargetGridSpec((256, 256, 32), 0.2, (0.0, -25.6, -2.0))
    e = look_at(eye=(0.0, 0.0, -0.27), target=(10.0, 0.0, -0.27), up=(0.0, 0.0, 1.0))
    ndc = NdcGridSpec((156, 48, 128), stride=2.0, d_min=1.0, d_max=61.0)
    return Preset("outdoor", CameraModel(k, e), target, ndc, (39, 12, 32), 8)


def desk() -> Preset:
    k = Intrinsics(fx=55.4, fy=55.4, cx=32.0, cy=24.0, width=64, height=48)
    target = TargetGridSpec((48, 32, 48), 0.1, (0.0, 0.0, 0.0))
    e = look_at(eye=(2.4, 1.7, -0.4), target=(2.4, 2.9, 3.0))
    ndc = NdcGridSpec((32, 24, 32), stride=2.0, d_min=0.2, d_max=6.2)
    return Preset("desk", CameraModel(k, e), target, ndc, (8, 6, 8), 8)


PRESETS = {"indoor": indoor, "outdoor": outdoor, "desk": desk}


def get(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None

