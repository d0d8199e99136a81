"""Architecture hyperparameters and the shape ledger derived from them."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, fields

VARIANTS = ("ndc_full", "ndc_fa", "ndc_ci", "ndc_nf")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ModelConfig:
    variant: str = "ndc_full"
    num_classes: int = 6  # M + 1, class 0 is free space
    image_hw: tuple[int, int] = (48, 64)
    encoder_channels: tuple[int, ...] = (16, 24, 32, 64)
    coord_channels: bool = True
    seed_depth: int = 8  # D_s of the channel-to-depth reshape
    decoder_layers: int = 2
    dec2d_channels: tuple[int, ...] = (32, 32)
    dec3d_channels: tuple[int, ...] = (8, 8)
    groups: int = 4
    d_attn: int = 8
    daa_residual: bool = True
    daa_scaled: bool = False
    units2d: int = 2
    units3d: int = 2
    unet_channels: int = 16
    unet_blocks: int = 1
    resample_mode: str = "trilinear"
    seed: int = 0

    def __post_init__(self):
        for f in ("image_hw", "encoder_channels", "dec2d_channels", "dec3d_channels"):
            setattr(self, f, tuple(int(v) for v in getattr(self, f)))

    # derived ---------------------------------------------------------------

    @property
    def encoder_stride(self) -> int:
        return 2 ** (len(self.encoder_channels) - 1)

    @property
    def seed_hw(self) -> tuple[int, int]:
        return self.image_hw[0] // self.encoder_stride, self.image_hw[1] // self.encoder_stride

    @property
    def seed_channels(self) -> int:
        return self.encoder_channels[-1] // self.seed_depth

    @property
    def output_scale(self) -> int:
        return 2**self.decoder_layers

    @property
    def ndc_dims(self) -> tuple[int, int, int]:
        """``(W, H, D)`` of the decoder output grid."""
        h, w = self.seed_hw
        s = self.output_scale
        return w * s, h * s, self.seed_depth * s

    @property
    def ndc_stride(self) -> float:
        return self.encoder_stride / self.output_scale

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict, path: str = "model") -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(path, str(exc)) from None

    # validation ------------------------------------------------------------

    def validate(self, path: str = "model") -> None:
        def need(cond, fld, msg):
            if not cond:
                raise ConfigError(f"{path}.{fld}", msg)

        need(self.variant in VARIANTS, "variant", f"must be one of {VARIANTS}")
        need(self.num_classes >= 3, "num_classes", "need free space plus at least two semantic classes")
        need(len(self.encoder_channels) >= 2, "encoder_channels", "need at least two stages")
        need(all(c > 0 for c in self.encoder_channels), "encoder_channels", "channels must be positive")
        for i, n in enumerate(self.image_hw):
            need(n > 0 and n % self.encoder_stride == 0, f"image_hw[{i}]", f"{n} not divisible by encoder stride {self.encoder_stride}")
        need(self.seed_depth > 0, "seed_depth", "must be positive")
        need(
            self.encoder_channels[-1] % self.seed_depth == 0,
            "seed_depth",
            f"channel-to-depth reshape needs encoder_channels[-1]={self.encoder_channels[-1]} divisible by seed_depth={self.seed_depth}",
        )
        L = self.decoder_layers
        need(1 <= L < len(self.encoder_channels), "decoder_layers", f"must be in [1, {len(self.encoder_channels) - 1}]")
        need(len(self.dec2d_channels) == L, "dec2d_channels", f"need {L} entries, one per decoder layer")
        need(len(self.dec3d_channels) == L, "dec3d_channels", f"need {L} entries, one per decoder layer")
        need(self.groups >= 1, "groups", "must be >= 1")
        for i, (c2, c3) in enumerate(zip(self.dec2d_channels, self.dec3d_channels)):
            need(c2 == self.groups * c3, f"dec2d_channels[{i}]", f"attention channel plan needs {c2} == groups ({self.groups}) x dec3d_channels[{i}] ({c3})")
        need(self.d_attn >= 1, "d_attn", "must be >= 1")
        need(self.units2d >= 0 and self.units3d >= 0, "units3d", "unit counts must be non-negative")
        need(self.unet_channels >= 1 and self.unet_blocks >= 0, "unet_channels", "must be positive")
        need(self.resample_mode in ("trilinear", "nearest"), "resample_mode", "must be 'trilinear' or 'nearest'")


def shape_plan(cfg: ModelConfig, target_dims: tuple[int, int, int] | None = None) -> "OrderedDict[str, tuple]":
    """Every intermediate shape of a forward pass, from the config alone.

    Raises :class:`ConfigError` before any allocation if the plan is
    inconsistent. 3D NDC shapes are ``(C, rows, cols, depth)``.
    """
    cfg.validate()
    plan: "OrderedDict[str, tuple]" = OrderedDict()
    H, W = cfg.image_hw
    plan["image"] = (3, H, W)
    for i, c in enumerate(cfg.encoder_channels):
        plan[f"enc{i}"] = (c, H >> i, W >> i)
    hs, ws = cfg.seed_hw
    plan["seed3d"] = (cfg.seed_channels, hs, ws, cfg.seed_depth)
    h, w, d = hs, ws, cfg.seed_depth
    for layer in range(cfg.decoder_layers):
        h, w, d = 2 * h, 2 * w, 2 * d
        plan[f"dec{layer}.2d"] = (cfg.dec2d_channels[layer], h, w)
        plan[f"dec{layer}.3d"] = (cfg.dec3d_channels[layer], h, w, d)
    plan["ndc"] = plan[f"dec{cfg.decoder_layers - 1}.3d"]
    if target_dims is not None:
        depth = 2 if cfg.variant == "ndc_fa" else 1
        for i, n in enumerate(target_dims):
            if n % (2**depth):
                raise ConfigError(f"grids.target.dims[{i}]", f"{n} not divisible by {2 ** depth} (3D UNet depth {depth})")
        plan["target"] = (cfg.dec3d_channels[-1],) + tuple(target_dims)
        plan["logits"] = (cfg.num_classes,) + tuple(target_dims)
    return plan
