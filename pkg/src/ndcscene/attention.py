"""Depth-adaptive attention.

Every 3D cell at pixel (i, j) and depth k chooses, through a softmax over G
groups, how to mix the G channel groups of the 2D feature at the same pixel.
The query comes from the 3D feature, the keys from each 2D channel group,
and there is no value projection: the output is the weighted sum of the raw
groups, so it has ``C2d / G`` channels.

The 2D feature may be pixel-aligned ``(C2d, H, W)`` (NDC grids, shared by all
depths) or per-cell ``(C2d, H, W, D)`` (camera grids, where each cell samples
a different pixel).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, einsum, reshape, scale, softmax
from .autodiff.nn import Module, he_normal


@dataclass
class DaaParams:
    w_q: Tensor  # (d_attn, C3d)
    w_k: Tensor  # (d_attn, C2d / G)
    groups: int
    scaled: bool = False

    def __post_init__(self):
        if self.groups < 1:
            raise ValueError("group count must be >= 1")
        if self.w_q.ndim != 2 or self.w_k.ndim != 2 or self.w_q.shape[0] != self.w_k.shape[0]:
            raise ValueError(f"projection shapes {self.w_q.shape} and {self.w_k.shape} disagree on the attention width")

    @property
    def d_attn(self) -> int:
        return self.w_q.shape[0]


def _group(x2d: Tensor, groups: int) -> Tensor:
    C = x2d.shape[0]
    if C % groups:
        raise ValueError(f"2D channels {C} not divisible by {groups} groups")
    return reshape(x2d, (groups, C // groups) + tuple(x2d.shape[1:]))


def _check_aligned(x3d: Tensor, x2d: Tensor, p: DaaParams) -> None:
    if x3d.ndim != 4:
        raise ValueError(f"3D feature must be (C, H, W, D), got {x3d.shape}")
    if tuple(x2d.shape[1:3]) != tuple(x3d.shape[1:3]):
        raise ValueError(f"2D feature {x2d.shape} is not spatially aligned with 3D feature {x3d.shape}")
    if x2d.ndim == 4 and x2d.shape[3] != x3d.shape[3]:
        raise ValueError(f"per-cell 2D feature depth {x2d.shape[3]} != 3D depth {x3d.shape[3]}")
    if x2d.ndim not in (3, 4):
        raise ValueError(f"2D feature must be (C, H, W) or (C, H, W, D), got {x2d.shape}")
    if x3d.shape[0] != p.w_q.shape[1]:
        raise ValueError(f"query projection expects {p.w_q.shape[1]} channels, 3D feature has {x3d.shape[0]}")
    if x2d.shape[0] % p.groups:
        raise ValueError(f"2D channels {x2d.shape[0]} not divisible by {p.groups} groups")
    if x2d.shape[0] // p.groups != p.w_k.shape[1]:
        raise ValueError(f"key projection expects {p.w_k.shape[1]} channels per group, got {x2d.shape[0] // p.groups}")


def daa_logits(x3d: Tensor, x2d: Tensor, p: DaaParams) -> Tensor:
    """Attention logits ``(G, H, W, D)``: projected query dotted with each projected key group."""
    _check_aligned(x3d, x2d, p)
    q = einsum("ac,chwz->ahwz", p.w_q, x3d)
    g = _group(x2d, p.groups)
    if x2d.ndim == 3:
        keys = einsum("ac,gchw->gahw", p.w_k, g)
        logits = einsum("ahwz,gahw->ghwz", q, keys)
    else:
        keys = einsum("ac,gchwz->gahwz", p.w_k, g)
        logits = einsum("ahwz,gahwz->ghwz", q, keys)
    if p.scaled:
        logits = scale(logits, 1.0 / np.sqrt(p.d_attn))
    return logits


def daa_weights(x3d: Tensor, x2d: Tensor, p: DaaParams) -> Tensor:
    return softmax(daa_logits(x3d, x2d, p), axis=0)


def daa_apply(x3d: Tensor, x2d: Tensor, p: DaaParams) -> Tensor:
    """Per-cell weighted sum of the 2D channel groups, shape ``(C2d/G, H, W, D)``."""
    A = daa_weights(x3d, x2d, p)
    g = _group(x2d, p.groups)
    if x2d.ndim == 3:
        return einsum("ghwz,gchw->chwz", A, g)
    return einsum("ghwz,gchwz->chwz", A, g)


def daa_fuse(x3d: Tensor, x2d: Tensor, p: DaaParams, residual: bool = True) -> Tensor:
    """Fuse the 2D feature into the 3D one; residual by default, plain replacement otherwise."""
    if x2d.shape[0] // p.groups != x3d.shape[0] or x2d.shape[0] % p.groups:
        raise ValueError(
            f"channel plan violated: 3D channels {x3d.shape[0]} must equal 2D channels {x2d.shape[0]} / {p.groups} groups"
        )
    out = daa_apply(x3d, x2d, p)
    return add(x3d, out) if residual else out


class DepthAdaptiveAttention(Module):
    """Learnable projections for one decoder layer."""

    def __init__(self, rng: np.random.Generator, c3d: int, c2d: int, groups: int, d_attn: int, scaled: bool = False, residual: bool = True):
        super().__init__()
        if c2d % groups or c2d // groups != c3d:
            raise ValueError(f"channel plan: need c2d / groups == c3d, got {c2d}/{groups} vs {c3d}")
        self.w_q = he_normal(rng, (d_attn, c3d), c3d, gain=0.5, name="w_q")
        self.w_k = he_normal(rng, (d_attn, c2d // groups), c2d // groups, gain=0.5, name="w_k")
        self.groups = groups
        self.scaled = scaled
        self.residual = residual

    @property
    def params(self) -> DaaParams:
        return DaaParams(self.w_q, self.w_k, self.groups, self.scaled)

    def __call__(self, x3d: Tensor, x2d: Tensor) -> Tensor:
        return daa_fuse(x3d, x2d, self.params, residual=self.residual)
