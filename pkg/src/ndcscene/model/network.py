"""The scene completion network and its ablation variants.

``ndc_full``: 2D encoder, channel-to-depth seed, dual decoder whose 3D branch
lives on the NDC grid and is fused with the 2D branch by depth-adaptive
attention, resampling into the target grid, light 3D UNet, class head.

``ndc_fa`` keeps the 2D branch but lifts its last map along lines of sight
into the target grid and runs a heavier UNet with about the same number of 3D
parameters. ``ndc_ci`` runs the dual decoder on a grid uniform in camera
coordinates. ``ndc_nf`` swaps attention for the parameter-free mean of the
channel groups added to every depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..attention import DepthAdaptiveAttention
from ..autodiff import Tensor, add, expand, relu, reshape, scale, sum_axis, transpose
from ..autodiff.nn import Module
from ..geometry import CameraGridSpec, CameraModel, NdcGridSpec, TargetGridSpec
from ..lifting import LiftedVolume, camera_resample_to_target, camera_space_lift, flosp_lift, ndc_resample_to_target
from .blocks import Bottleneck3d, Conv, Encoder2d, HeavyUnet3d, LightUnet3d, ResUnit2d, Up
from .config import ConfigError, ModelConfig, shape_plan


@dataclass
class SscPrediction:
    logits: Tensor  # (M + 1, X, Y, Z)
    valid_mask: np.ndarray  # voxels that received image evidence
    intermediates: dict = field(default_factory=dict)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.logits.data, axis=0).astype(np.uint8)


def seed3d(feat2d: Tensor, depth: int) -> Tensor:
    """Channel-to-depth reshape: channel block ``d`` of size ``C / depth`` becomes depth slice ``d``."""
    C, H, W = feat2d.shape
    if C % depth:
        raise ValueError(f"seed3d: {C} channels not divisible by depth {depth}")
    return transpose(reshape(feat2d, (depth, C // depth, H, W)), (1, 2, 3, 0))


def naive_fuse(x3d: Tensor, x2d: Tensor, groups: int) -> Tensor:
    """``x3d`` plus the mean of the 2D channel groups, repeated along depth."""
    C2, H, W = x2d.shape
    mean = scale(sum_axis(reshape(x2d, (groups, C2 // groups, H, W)), 0), 1.0 / groups)
    return add(x3d, expand(mean, 3, x3d.shape[3]))


class Decoder2dLayer(Module):
    def __init__(self, rng, cin, cskip, cout, units):
        super().__init__()
        self.up = Up(rng, cin, cout)
        self.skip = Conv(rng, cskip, cout, 1)
        self.units = [self.add_module(f"unit{i}", ResUnit2d(rng, cout)) for i in range(units)]

    def __call__(self, x: Tensor, skip: Tensor) -> Tensor:
        x = relu(add(self.up(x), self.skip(skip)))
        for u in self.units:
            x = u(x)
        return x


class Decoder3dLayer(Module):
    def __init__(self, rng, cin, cout, c2d, cfg: ModelConfig):
        super().__init__()
        self.up = Up(rng, cin, cout, nd=3)
        self.groups = cfg.groups
        self.naive = cfg.variant == "ndc_nf"
        if not self.naive:
            self.daa = DepthAdaptiveAttention(rng, cout, c2d, cfg.groups, cfg.d_attn, cfg.daa_scaled, cfg.daa_residual)
        self.units = [self.add_module(f"unit{i}", Bottleneck3d(rng, cout)) for i in range(cfg.units3d)]

    def __call__(self, x3d: Tensor, x2d: Tensor) -> Tensor:
        x = relu(self.up(x3d))
        x = naive_fuse(x, x2d, self.groups) if self.naive else self.daa(x, x2d)
        for u in self.units:
            x = u(x)
        return x


class SscNet(Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        shape_plan(cfg)
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        enc = cfg.encoder_channels
        self.encoder = Encoder2d(rng, enc, cfg.coord_channels)
        self.dec2d = []
        c = enc[-1]
        for layer in range(cfg.decoder_layers):
            skip_c = enc[len(enc) - 2 - layer]
            m = self.add_module(f"dec2d_{layer}", Decoder2dLayer(rng, c, skip_c, cfg.dec2d_channels[layer], cfg.units2d))
            self.dec2d.append(m)
            c = cfg.dec2d_channels[layer]
        c3 = cfg.dec3d_channels[-1]
        if cfg.variant == "ndc_fa":
            self.fa_proj = Conv(rng, c, c3, 1)
            width, blocks = fa_unet_shape(cfg)
            self.heavy = HeavyUnet3d(rng, c3, width, blocks)
        else:
            self.dec3d = []
            c = cfg.seed_channels
            for layer in range(cfg.decoder_layers):
                m = self.add_module(
                    f"dec3d_{layer}", Decoder3dLayer(rng, c, cfg.dec3d_channels[layer], cfg.dec2d_channels[layer], cfg)
                )
                self.dec3d.append(m)
                c = cfg.dec3d_channels[layer]
            self.unet = LightUnet3d(rng, c3, cfg.unet_channels, cfg.unet_blocks)
        self.head = Conv(rng, c3, cfg.num_classes, 1, nd=3)

    # stages -----------------------------------------------------------------

    def encode2d(self, image: Tensor) -> list[Tensor]:
        H, W = image.shape[1:]
        s = self.cfg.encoder_stride
        if H % s or W % s:
            raise ValueError(f"image {H}x{W} not divisible by encoder stride {s}")
        return self.encoder(image)

    def decode2d(self, feats: list[Tensor]) -> list[Tensor]:
        x = feats[-1]
        outs = []
        for layer, m in enumerate(self.dec2d):
            x = m(x, feats[len(feats) - 2 - layer])
            outs.append(x)
        return outs

    def dadd_forward(self, feats: list[Tensor], camera_grids: list[CameraGridSpec] | None = None, k=None) -> Tensor:
        """Run both decoder branches; returns the final 3D feature ``(C, rows, cols, depth)``.

        With ``camera_grids`` (one per layer) the 2D map is sampled per cell
        of a camera-coordinate grid before fusion instead of being shared by
        every depth at a pixel.
        """
        x3d = seed3d(feats[-1], self.cfg.seed_depth)
        for layer, x2d in enumerate(self.decode2d(feats)):
            if camera_grids is not None:
                x2d = camera_space_lift(x2d, camera_grids[layer], k).features
            x3d = self.dec3d[layer](x3d, x2d)
        return x3d

    def unet3d(self, vol: LiftedVolume) -> Tensor:
        if self.cfg.variant == "ndc_fa":
            return self.heavy(vol.features)
        return self.unet(vol.features)

    def class_head(self, feat: Tensor) -> Tensor:
        return self.head(feat)

    # full pass --------------------------------------------------------------

    def check_specs(self, camera: CameraModel, target: TargetGridSpec, ndc: NdcGridSpec) -> None:
        cfg = self.cfg
        k = camera.intrinsics
        if (k.height, k.width) != cfg.image_hw:
            raise ConfigError("camera.intrinsics", f"image {k.height}x{k.width} does not match model image_hw {cfg.image_hw}")
        if tuple(ndc.dims) != cfg.ndc_dims:
            raise ConfigError("grids.ndc.dims", f"{ndc.dims} does not match the decoder output {cfg.ndc_dims}")
        if ndc.stride != cfg.ndc_stride:
            raise ConfigError("grids.ndc.stride", f"{ndc.stride} does not match the decoder stride {cfg.ndc_stride}")
        shape_plan(cfg, target.dims)

    def forward(self, image, camera: CameraModel, target: TargetGridSpec, ndc: NdcGridSpec) -> SscPrediction:
        self.check_specs(camera, target, ndc)
        if not isinstance(image, Tensor):
            image = Tensor(np.asarray(image))
        k, e = camera.intrinsics, camera.extrinsics
        feats = self.encode2d(image)
        variant = self.cfg.variant
        inter = {}
        if variant == "ndc_fa":
            x2d = self.decode2d(feats)[-1]
            vol = flosp_lift(self.fa_proj(x2d), target, k, e)
            inter["lifted"] = vol.features
        elif variant == "ndc_ci":
            cover = CameraGridSpec.covering(ndc, k)
            grids = [cover.with_dims(_layer_dims(ndc.dims, self.cfg.decoder_layers, layer)) for layer in range(self.cfg.decoder_layers)]
            xc = self.dadd_forward(feats, grids, k)
            inter["camera_volume"] = xc
            vol = camera_resample_to_target(LiftedVolume(xc, "camera", cover, np.ones(cover.array_shape, bool)), target, k, e, self.cfg.resample_mode)
        else:
            xn = self.dadd_forward(feats)
            inter["ndc_volume"] = xn
            vol = ndc_resample_to_target(LiftedVolume(xn, "ndc", ndc, np.ones(ndc.array_shape, bool)), target, k, e, self.cfg.resample_mode)
        logits = self.class_head(self.unet3d(vol))
        return SscPrediction(logits, vol.valid_mask, inter)

    __call__ = forward


def _layer_dims(final_dims, layers, layer):
    f = 2 ** (layers - 1 - layer)
    return tuple(d // f for d in final_dims)


def three_d_param_count(cfg: ModelConfig) -> int:
    """Parameters of the 3D decoder branch, attention and light UNet of the full model."""
    full = ModelConfig(**{**cfg.to_dict(), "variant": "ndc_full"})
    rng = np.random.default_rng(0)
    total = 0
    c = full.seed_channels
    for layer in range(full.decoder_layers):
        total += Decoder3dLayer(rng, c, full.dec3d_channels[layer], full.dec2d_channels[layer], full).num_parameters()
        c = full.dec3d_channels[layer]
    total += LightUnet3d(rng, c, full.unet_channels, full.unet_blocks).num_parameters()
    return total


def fa_unet_shape(cfg: ModelConfig) -> tuple[int, int]:
    """``(width, blocks)`` of the heavy UNet whose size is closest to the replaced 3D parameters.

    The 1x1 projection before lifting counts toward the budget. Raises if no
    choice lands within 10%.
    """
    c3 = cfg.dec3d_channels[-1]
    budget = three_d_param_count(cfg) - (cfg.dec2d_channels[-1] * c3 + 2 * c3)
    best = None
    for blocks in (1, 2, 3):
        for width in range(1, 257):
            n = HeavyUnet3d.count(c3, width, blocks)
            gap = abs(n - budget) / budget
            if best is None or gap < best[0]:
                best = (gap, width, blocks)
            if n > budget:
                break
    gap, width, blocks = best
    if gap > 0.10:
        raise ConfigError("model", f"cannot match the 3D parameter budget {budget} within 10% (best gap {gap:.1%})")
    return width, blocks
