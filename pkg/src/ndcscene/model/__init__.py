"""Network, loss, training loop and checkpoints."""

from .config import VARIANTS, ConfigError, ModelConfig, shape_plan
from .network import SscNet, SscPrediction, fa_unet_shape, naive_fuse, seed3d, three_d_param_count

__all__ = [
    "VARIANTS",
    "ConfigError",
    "ModelConfig",
    "SscNet",
    "SscPrediction",
    "fa_unet_shape",
    "naive_fuse",
    "seed3d",
    "shape_plan",
    "three_d_param_count",
]
