"""Coordinate systems and the transforms between them.

Spaces:

* pixel space: ``u`` along image width, ``v`` along height, pixel (0, 0)
  occupies ``[0, 1) x [0, 1)`` so its center is at (0.5, 0.5);
* target space: the world-aligned voxel grid the labels live in;
* camera coordinates ``(x, y, d)`` with ``d`` the depth along the optical axis;
* NDC space: image-aligned cells at a feature stride, extended by metric depth;
* camera-grid space: cells uniform in camera coordinates (the CI ablation).

All array functions accept points stacked on the last axis, shape ``(..., 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS_DEPTH = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    def scaled(self, factor: float) -> "Intrinsics":
        """Intrinsics of the same camera imaged at ``factor`` times the resolution."""
        return Intrinsics(
            self.fx * factor,
            self.fy * factor,
            self.cx * factor,
            self.cy * factor,
            int(round(self.width * factor)),
            int(round(self.height * factor)),
        )

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy, "width": self.width, "height": self.height}


@dataclass(frozen=True)
class Extrinsics:
    """World-to-camera rigid transform: ``p_cam = rotation @ p_world + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-6):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation must have determinant +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def camera_center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}


@dataclass(frozen=True)
class CameraModel:
    intrinsics: Intrinsics
    extrinsics: Extrinsics

    def to_dict(self) -> dict:
        return {**self.intrinsics.to_dict(), **self.extrinsics.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        k = Intrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]), int(d["width"]), int(d["height"]))
        e = Extrinsics(np.asarray(d["rotation"], dtype=np.float64), np.asarray(d["translation"], dtype=np.float64))
        return cls(k, e)


@dataclass(frozen=True)
class TargetGridSpec:
    dims: tuple[int, int, int]
    voxel_size: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ValueError(f"grid dims must be three positive ints, got {self.dims}")
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.dims, dtype=np.float64) * self.voxel_size

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin) + 0.5 * self.extent

    def voxel_centers(self) -> np.ndarray:
        """World coordinates of every voxel center, shape ``dims + (3,)``."""
        axes = [self.origin[a] + (np.arange(n) + 0.5) * self.voxel_size for a, n in enumerate(self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class NdcGridSpec:
    """Image-aligned frustum grid. ``dims`` is (cells along u, cells along v, depth bins)."""

    dims: tuple[int, int, int]
    stride: float
    d_min: float
    d_max: float
    depth_spacing: str = "linear_depth"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ValueError(f"NDC dims must be three positive ints, got {self.dims}")
        if not 0 < self.d_min < self.d_max:
            raise ValueError(f"need 0 < d_min < d_max, got {self.d_min}, {self.d_max}")
        if self.depth_spacing != "linear_depth":
            raise ValueError(f"unsupported depth spacing {self.depth_spacing!r}")

    @property
    def depth_step(self) -> float:
        return (self.d_max - self.d_min) / self.dims[2]

    @property
    def array_shape(self) -> tuple[int, int, int]:
        """Spatial shape of feature arrays on this grid: (rows=v, cols=u, depth)."""
        return (self.dims[1], self.dims[0], self.dims[2])

    def with_dims(self, dims) -> "NdcGridSpec":
        """Same frustum sampled with different cell counts (the stride follows the width)."""
        stride = self.stride * self.dims[0] / dims[0]
        return NdcGridSpec(tuple(dims), stride, self.d_min, self.d_max, self.depth_spacing)


@dataclass(frozen=True)
class CameraGridSpec:
    """Grid uniform in camera coordinates; ``dims`` is (cells along x, along y, along d)."""

    dims: tuple[int, int, int]
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    d_range: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ValueError(f"camera grid dims must be three positive ints, got {self.dims}")
        for lo, hi in (self.x_range, self.y_range, self.d_range):
            if not hi > lo:
                raise ValueError("camera grid ranges must be increasing")

    @property
    def array_shape(self) -> tuple[int, int, int]:
        return (self.dims[1], self.dims[0], self.dims[2])

    @property
    def steps(self) -> np.ndarray:
        lo = np.array([self.x_range[0], self.y_range[0], self.d_range[0]])
        hi = np.array([self.x_range[1], self.y_range[1], self.d_range[1]])
        return (hi - lo) / np.asarray(self.dims)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_range[0], self.y_range[0], self.d_range[0]])

    def cell_centers(self) -> np.ndarray:
        """Camera coordinates of cell centers, shape ``array_shape + (3,)`` (rows=y, cols=x)."""
        lo, st = self.lower, self.steps
        xs = lo[0] + (np.arange(self.dims[0]) + 0.5) * st[0]
        ys = lo[1] + (np.arange(self.dims[1]) + 0.5) * st[1]
        ds = lo[2] + (np.arange(self.dims[2]) + 0.5) * st[2]
        Y, X, D = np.meshgrid(ys, xs, ds, indexing="ij")
        return np.stack([X, Y, D], axis=-1)

    def with_dims(self, dims) -> "CameraGridSpec":
        return CameraGridSpec(tuple(dims), self.x_range, self.y_range, self.d_range)

    @classmethod
    def covering(cls, ndc: NdcGridSpec, k: Intrinsics) -> "CameraGridSpec":
        """Box in camera coordinates enclosing the NDC frustum, with the NDC cell counts."""
        w = ndc.dims[0] * ndc.stride
        h = ndc.dims[1] * ndc.stride
        xs = [(0 - k.cx) / k.fx * ndc.d_max, (w - k.cx) / k.fx * ndc.d_max]
        ys = [(0 - k.cy) / k.fy * ndc.d_max, (h - k.cy) / k.fy * ndc.d_max]
        return cls(ndc.dims, (min(xs), max(xs)), (min(ys), max(ys)), (ndc.d_min, ndc.d_max))


# transforms ---------------------------------------------------------------


def target_to_camera(p, e: Extrinsics) -> np.ndarray:
    """Rigid world-to-camera transform applied to points on the last axis."""
    p = np.asarray(p, dtype=np.float64)
    return p @ e.rotation.T + e.translation


def camera_to_target(p, e: Extrinsics) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return (p - e.translation) @ e.rotation


def camera_to_pixel(p, k: Intrinsics, image_size: tuple[int, int] | None = None):
    """Perspective projection.

    Returns ``(uv, valid)``: ``uv`` has shape ``(..., 2)``; ``valid`` is False
    for points with depth <= EPS_DEPTH or landing outside ``[0, W] x [0, H]``.
    ``image_size`` is ``(W, H)`` and defaults to the intrinsics' image.
    """
    p = np.asarray(p, dtype=np.float64)
    W, H = image_size if image_size is not None else (k.width, k.height)
    d = p[..., 2]
    front = d > EPS_DEPTH
    safe = np.where(front, d, 1.0)
    u = k.fx * p[..., 0] / safe + k.cx
    v = k.fy * p[..., 1] / safe + k.cy
    valid = front & (u >= 0) & (u <= W) & (v >= 0) & (v <= H)
    return np.stack([u, v], axis=-1), valid


def pixel_to_camera(uv, d, k: Intrinsics) -> np.ndarray:
    """Inverse perspective: pixel coordinates plus depth back to camera coordinates."""
    uv = np.asarray(uv, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    x = (uv[..., 0] - k.cx) * d / k.fx
    y = (uv[..., 1] - k.cy) * d / k.fy
    return np.stack([x, y, np.broadcast_to(d, x.shape)], axis=-1)


def ndc_cell_center(spec: NdcGridSpec, i, j, k) -> np.ndarray:
    """``(u, v, d)`` at the center of cell (i along u, j along v, k along depth)."""
    i, j, k = (np.asarray(a) for a in (i, j, k))
    for a, n, label in ((i, spec.dims[0], "i"), (j, spec.dims[1], "j"), (k, spec.dims[2], "k")):
        if np.any(a < 0) or np.any(a >= n):
            raise IndexError(f"NDC index {label} out of range [0, {n})")
    u = (i + 0.5) * spec.stride
    v = (j + 0.5) * spec.stride
    d = spec.d_min + (k + 0.5) * spec.depth_step
    return np.stack(np.broadcast_arrays(u, v, d), axis=-1).astype(np.float64)


def ndc_centers(spec: NdcGridSpec) -> np.ndarray:
    """All cell centers as ``(u, v, d)``, laid out as ``array_shape + (3,)``."""
    J, I, K = np.meshgrid(np.arange(spec.dims[1]), np.arange(spec.dims[0]), np.arange(spec.dims[2]), indexing="ij")
    return ndc_cell_center(spec, I, J, K)


def ndc_to_target(spec: NdcGridSpec, k: Intrinsics, e: Extrinsics, i, j, kk) -> np.ndarray:
    """World position of an NDC cell center (inverse perspective, then inverse rigid transform)."""
    uvd = ndc_cell_center(spec, i, j, kk)
    cam = pixel_to_camera(uvd[..., :2], uvd[..., 2], k)
    return camera_to_target(cam, e)


def target_to_ndc(p, k: Intrinsics, e: Extrinsics) -> np.ndarray:
    """World points to continuous ``(u, v, d)``; depth <= EPS_DEPTH gives NaN u, v."""
    cam = target_to_camera(p, e)
    d = cam[..., 2]
    front = d > EPS_DEPTH
    safe = np.where(front, d, 1.0)
    u = np.where(front, k.fx * cam[..., 0] / safe + k.cx, np.nan)
    v = np.where(front, k.fy * cam[..., 1] / safe + k.cy, np.nan)
    return np.stack([u, v, d], axis=-1)


def axis_angle_matrix(angle_deg: float, axis) -> np.ndarray:
    """Rodrigues rotation matrix."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0:
        raise ValueError("rotation axis must be non-zero")
    a = axis / n
    theta = np.deg2rad(angle_deg)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


def rotate_extrinsics(e: Extrinsics, angle_deg: float, axis, pivot=None) -> Extrinsics:
    """Extrinsics for a target frame rotated by ``angle_deg`` about ``axis`` through ``pivot``.

    A point ``q`` in the rotated frame sits at ``R (q - pivot) + pivot`` in the
    original frame, so the new transform is ``a R q + a (pivot - R pivot) + b``.
    """
    R = axis_angle_matrix(angle_deg, axis)
    if angle_deg == 0:
        return e
    pivot = np.zeros(3) if pivot is None else np.asarray(pivot, dtype=np.float64)
    rot = e.rotation @ R
    # re-orthonormalize to keep the invariant at 1e-6 under repeated composition
    u, _, vt = np.linalg.svd(rot)
    rot = u @ vt
    trans = e.rotation @ (pivot - R @ pivot) + e.translation
    return Extrinsics(rot, trans)


def look_at(eye, target, up=(0.0, -1.0, 0.0)) -> Extrinsics:
    """Extrinsics for a camera at ``eye`` looking at ``target``; image ``v`` runs opposite ``up``."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    return Extrinsics(R, -R @ eye)
