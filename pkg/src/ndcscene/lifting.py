"""Placing 2D features into 3D grids.

Three schemes are compared by the ablations:

* :func:`flosp_lift` broadcasts the 2D feature under each target voxel's
  projection into the target grid (every voxel on a ray gets the same value);
* NDC volumes are produced by the decoder and pulled into the target grid by
  :func:`ndc_resample_to_target`;
* :func:`camera_space_lift` samples the 2D map at cells uniform in camera
  coordinates.

All samplers are gathers (each output cell pulls from its sources), so they
are deterministic and their adjoint is a scatter with the same weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .autodiff import Tensor, gather
from .geometry import (
    EPS_DEPTH,
    CameraGridSpec,
    Extrinsics,
    Intrinsics,
    NdcGridSpec,
    TargetGridSpec,
    camera_to_pixel,
    ndc_centers,
    target_to_camera,
)

GridSpec = Union[TargetGridSpec, NdcGridSpec, CameraGridSpec]


@dataclass
class LiftedVolume:
    """Features on one of the three grids plus the in-frustum mask.

    ``features`` is ``(C,) + spatial``; for the NDC and camera grids the
    spatial layout is ``spec.array_shape`` (rows, cols, depth), for the target
    grid it is ``spec.dims``.
    """

    features: Tensor
    space_tag: str
    spec: GridSpec
    valid_mask: np.ndarray

    def __post_init__(self):
        if self.space_tag not in ("target", "ndc", "camera"):
            raise ValueError(f"unknown space tag {self.space_tag!r}")
        spatial = self.spec.dims if self.space_tag == "target" else self.spec.array_shape
        if tuple(self.features.shape[1:]) != tuple(spatial):
            raise ValueError(f"features {self.features.shape} do not match {self.space_tag} grid {spatial}")


# sampling plans -------------------------------------------------------------


def bilinear_plan(uv: np.ndarray, valid: np.ndarray, feat_hw: tuple[int, int], stride: float):
    """Gather indices/weights that bilinearly sample a ``(C, H, W)`` map at pixel ``uv``.

    Feature cell (r, c) covers pixels ``[c*stride, (c+1)*stride)`` with its
    center at ``(c + 0.5) * stride``; samples between centers and the border
    clamp to the edge row/column. Invalid points get zero weights.
    """
    H, W = feat_hw
    fu = uv[..., 0] / stride - 0.5
    fv = uv[..., 1] / stride - 0.5
    fu = np.where(valid, np.clip(fu, 0.0, W - 1), 0.0)
    fv = np.where(valid, np.clip(fv, 0.0, H - 1), 0.0)
    c0 = np.minimum(np.floor(fu).astype(np.int64), W - 1)
    r0 = np.minimum(np.floor(fv).astype(np.int64), H - 1)
    c1 = np.minimum(c0 + 1, W - 1)
    r1 = np.minimum(r0 + 1, H - 1)
    au = fu - c0
    av = fv - r0
    idx = np.stack([r0 * W + c0, r0 * W + c1, r1 * W + c0, r1 * W + c1], axis=-1).reshape(-1, 4)
    w = np.stack([(1 - av) * (1 - au), (1 - av) * au, av * (1 - au), av * au], axis=-1).reshape(-1, 4)
    w = w * valid.reshape(-1, 1)
    return idx, w


def trilinear_plan(coords: np.ndarray, valid: np.ndarray, shape: tuple[int, int, int], mode: str = "trilinear"):
    """Gather plan for continuous cell coordinates into a ``(C, A, B, D)`` volume.

    ``coords[..., a]`` is the position along spatial axis ``a`` in cell units,
    with cell centers at integers. Points outside ``[-0.5, n - 0.5]`` on any
    axis are invalid. ``mode='nearest'`` picks the containing cell.
    """
    n = np.asarray(shape)
    flat = coords.reshape(-1, 3)
    ok = valid.reshape(-1) & np.all(np.isfinite(flat), axis=1)
    inside = ok.copy()
    inside[ok] = np.all((flat[ok] >= -0.5) & (flat[ok] <= n - 0.5), axis=1)
    strides = np.array([shape[1] * shape[2], shape[2], 1])
    safe = np.where(inside[:, None], flat, 0.0)
    if mode == "nearest":
        cell = np.clip(np.floor(safe + 0.5).astype(np.int64), 0, n - 1)
        idx = (cell @ strides)[:, None]
        w = inside[:, None].astype(np.float64)
        return idx, w, inside.reshape(valid.shape)
    if mode != "trilinear":
        raise ValueError(f"unknown interpolation mode {mode!r}")
    clamped = np.clip(safe, 0.0, n - 1)
    lo = np.minimum(np.floor(clamped).astype(np.int64), n - 1)
    hi = np.minimum(lo + 1, n - 1)
    frac = clamped - lo
    idx = np.empty((flat.shape[0], 8), dtype=np.int64)
    w = np.empty((flat.shape[0], 8), dtype=np.float64)
    t = 0
    for bx in (0, 1):
        for by in (0, 1):
            for bz in (0, 1):
                cx = hi[:, 0] if bx else lo[:, 0]
                cy = hi[:, 1] if by else lo[:, 1]
                cz = hi[:, 2] if bz else lo[:, 2]
                idx[:, t] = cx * strides[0] + cy * strides[1] + cz
                wx = frac[:, 0] if bx else 1 - frac[:, 0]
                wy = frac[:, 1] if by else 1 - frac[:, 1]
                wz = frac[:, 2] if bz else 1 - frac[:, 2]
                w[:, t] = wx * wy * wz
                t += 1
    w *= inside[:, None]
    return idx, w, inside.reshape(valid.shape)


# lifting schemes ------------------------------------------------------------


def _feature_stride(feat_hw, k: Intrinsics) -> float:
    H, W = feat_hw
    return k.width / W


def flosp_lift(feat2d: Tensor, spec: TargetGridSpec, k: Intrinsics, e: Extrinsics) -> LiftedVolume:
    """Line-of-sight broadcast of a ``(C, H, W)`` feature map into the target grid.

    Each voxel center is projected into the image; in-image voxels take the
    bilinearly sampled feature at that pixel, all others are zero.
    """
    C, H, W = feat2d.shape
    cam = target_to_camera(spec.voxel_centers(), e)
    uv, valid = camera_to_pixel(cam, k)
    idx, w = bilinear_plan(uv, valid, (H, W), _feature_stride((H, W), k))
    vals = gather(feat2d, idx, w, spec.dims)
    return LiftedVolume(vals, "target", spec, valid)


def camera_space_lift(feat2d: Tensor, spec: CameraGridSpec, k: Intrinsics) -> LiftedVolume:
    """Sample a ``(C, H, W)`` feature map at cells uniform in camera coordinates."""
    C, H, W = feat2d.shape
    uv, valid = camera_to_pixel(spec.cell_centers(), k)
    idx, w = bilinear_plan(uv, valid, (H, W), _feature_stride((H, W), k))
    vals = gather(feat2d, idx, w, spec.array_shape)
    return LiftedVolume(vals, "camera", spec, valid)


def target_sampling_coords(source: GridSpec, target: TargetGridSpec, k: Intrinsics, e: Extrinsics):
    """Continuous source-array coordinates of every target voxel center.

    Returns ``(coords, front)`` where ``coords`` indexes the source feature
    array ``(rows, cols, depth)`` in cell units.
    """
    cam = target_to_camera(target.voxel_centers(), e)
    d = cam[..., 2]
    front = d > EPS_DEPTH
    if isinstance(source, NdcGridSpec):
        uv, _ = camera_to_pixel(cam, k, image_size=(np.inf, np.inf))
        col = uv[..., 0] / source.stride - 0.5
        row = uv[..., 1] / source.stride - 0.5
        dep = (d - source.d_min) / source.depth_step - 0.5
    elif isinstance(source, CameraGridSpec):
        lo, st = source.lower, source.steps
        col = (cam[..., 0] - lo[0]) / st[0] - 0.5
        row = (cam[..., 1] - lo[1]) / st[1] - 0.5
        dep = (cam[..., 2] - lo[2]) / st[2] - 0.5
    else:
        raise TypeError(f"cannot resample from {type(source).__name__}")
    coords = np.stack([row, col, dep], axis=-1)
    return np.where(front[..., None], coords, np.nan), front


def _resample(vol: LiftedVolume, spec: TargetGridSpec, k: Intrinsics, e: Extrinsics, mode: str) -> LiftedVolume:
    coords, front = target_sampling_coords(vol.spec, spec, k, e)
    idx, w, inside = trilinear_plan(coords, front, vol.spec.array_shape, mode=mode)
    vals = gather(vol.features, idx, w, spec.dims)
    return LiftedVolume(vals, "target", spec, inside)


def ndc_resample_to_target(vol: LiftedVolume, spec: TargetGridSpec, k: Intrinsics, e: Extrinsics, mode: str = "trilinear") -> LiftedVolume:
    """Pull an NDC volume into the target grid (each target voxel samples the frustum)."""
    if vol.space_tag != "ndc":
        raise ValueError(f"expected an NDC volume, got space_tag={vol.space_tag!r}")
    return _resample(vol, spec, k, e, mode)


def camera_resample_to_target(vol: LiftedVolume, spec: TargetGridSpec, k: Intrinsics, e: Extrinsics, mode: str = "trilinear") -> LiftedVolume:
    if vol.space_tag != "camera":
        raise ValueError(f"expected a camera-grid volume, got space_tag={vol.space_tag!r}")
    return _resample(vol, spec, k, e, mode)


# convolution footprint -------------------------------------------------------


@dataclass
class Footprint:
    """Per-pixel allocation of 3D convolution work.

    ``counts[r, c]`` is the number of kernel taps charged to feature pixel
    (r, c): every in-image cell contributes its full ``(2K+1)^3`` scope to the
    pixel its center projects to. ``spread`` is the mean pixel distance of the
    projected scope members from the projected center, per cell.
    """

    counts: np.ndarray
    spread: np.ndarray
    cells_in_image: int
    stride: float

    @property
    def summary(self) -> dict:
        hit = self.counts[self.counts > 0]
        mean = float(hit.mean()) if hit.size else 0.0
        std = float(hit.std()) if hit.size else 0.0
        return {
            "cv": std / mean if mean > 0 else 0.0,
            "min": int(hit.min()) if hit.size else 0,
            "max": int(hit.max()) if hit.size else 0,
            "max_min_ratio": float(hit.max() / hit.min()) if hit.size else 0.0,
            "pixels_hit": int(hit.size),
            "pixels_total": int(self.counts.size),
            "cells_in_image": self.cells_in_image,
            "mean_spread_px": float(np.nanmean(self.spread)) if np.any(np.isfinite(self.spread)) else 0.0,
        }

    def rows(self):
        """``(u, v, count)`` triples at feature-pixel centers, row-major."""
        H, W = self.counts.shape
        for r in range(H):
            for c in range(W):
                yield (c + 0.5) * self.stride, (r + 0.5) * self.stride, int(self.counts[r, c])


def _cell_positions_to_pixels(spec: GridSpec, k: Intrinsics, e: Extrinsics | None, offsets: np.ndarray):
    """Project cell centers displaced by integer ``offsets`` (in cell units) to pixels."""
    if isinstance(spec, NdcGridSpec):
        centers = ndc_centers(spec)
        step = np.array([spec.stride, spec.stride, spec.depth_step])
        uvd = centers + offsets * step
        inside = (uvd[..., 2] > EPS_DEPTH) & (uvd[..., 0] >= 0) & (uvd[..., 0] <= k.width) & (uvd[..., 1] >= 0) & (uvd[..., 1] <= k.height)
        return uvd[..., :2], inside
    if isinstance(spec, CameraGridSpec):
        pts = spec.cell_centers() + offsets * spec.steps
        return camera_to_pixel(pts, k)
    if isinstance(spec, TargetGridSpec):
        if e is None:
            raise ValueError("target-grid footprint needs extrinsics")
        pts = spec.voxel_centers() + offsets * spec.voxel_size
        return camera_to_pixel(target_to_camera(pts, e), k)
    raise TypeError(f"unsupported grid spec {type(spec).__name__}")


def conv_footprint(
    spec: GridSpec, k: Intrinsics, e: Extrinsics | None, K: int = 1, stride: float | None = None, with_spread: bool = True
) -> Footprint:
    """Histogram of 3D convolution work over feature pixels for a (2K+1)^3 kernel.

    ``stride`` sets the feature-pixel size; it defaults to the NDC stride for
    NDC grids and to 1 (full image pixels) otherwise. ``with_spread=False``
    skips the per-member projection, which dominates the cost on large grids.
    """
    if K < 1:
        raise ValueError("kernel half-width K must be >= 1")
    if stride is None:
        stride = spec.stride if isinstance(spec, NdcGridSpec) else 1.0
    Hp = int(np.ceil(k.height / stride))
    Wp = int(np.ceil(k.width / stride))
    uv, inside = _cell_positions_to_pixels(spec, k, e, np.zeros(3))
    col = np.minimum(np.floor(uv[..., 0] / stride).astype(np.int64), Wp - 1)
    row = np.minimum(np.floor(uv[..., 1] / stride).astype(np.int64), Hp - 1)
    taps = (2 * K + 1) ** 3
    flat = (row * Wp + col)[inside]
    counts = (np.bincount(flat, minlength=Hp * Wp) * taps).reshape(Hp, Wp)

    if not with_spread:
        return Footprint(counts, np.full(inside.shape, np.nan), int(inside.sum()), float(stride))
    spread_sum = np.zeros(inside.shape)
    spread_n = np.zeros(inside.shape)
    for dx in range(-K, K + 1):
        for dy in range(-K, K + 1):
            for dz in range(-K, K + 1):
                if dx == dy == dz == 0:
                    continue
                m_uv, m_ok = _cell_positions_to_pixels(spec, k, e, np.array([dx, dy, dz], dtype=np.float64))
                ok = m_ok & inside
                dist = np.linalg.norm(m_uv - uv, axis=-1)
                spread_sum += np.where(ok, dist, 0.0)
                spread_n += ok
    with np.errstate(invalid="ignore", divide="ignore"):
        spread = np.where(spread_n > 0, spread_sum / np.maximum(spread_n, 1), np.nan)
    return Footprint(counts, spread, int(inside.sum()), float(stride))
