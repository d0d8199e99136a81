"""Procedural rooms: primitives, voxelization and a voxel ray-cast renderer.

World frame: x lateral, y down (gravity along +y), z forward. The floor's top
surface sits at ``floor_y``; walls close the room on the left, right and back.
The image is rendered by marching each pixel-center ray through the label
grid, so every covered pixel shows exactly the first occupied voxel on its
ray. Voxels whose centers fall outside the camera frustum are marked unknown;
occluded voxels inside the frustum stay known.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import CameraModel, Intrinsics, TargetGridSpec, camera_to_pixel, look_at, target_to_camera
from .formats import LabelGrid

FREE, FLOOR, WALL, BOX, CYLINDER, SLAB = range(6)
CLASS_NAMES = ("free", "floor", "wall", "box", "cylinder", "slab")
PRIMITIVE_CLASS = {"box": BOX, "tall_box": BOX, "cylinder": CYLINDER, "slab": SLAB}
BACKGROUND = np.array([0.02, 0.02, 0.05])
_BASE_COLORS = {
    FLOOR: (0.55, 0.40, 0.25),
    WALL: (0.80, 0.78, 0.72),
    BOX: (0.80, 0.25, 0.20),
    CYLINDER: (0.20, 0.35, 0.85),
    SLAB: (0.25, 0.70, 0.30),
}
_FACE_SHADE = np.array([0.75, 1.0, 0.6])  # by hit-face axis x, y, z


class PlacementError(RuntimeError):
    pass


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Independent per-scene seed from a master seed."""
    return splitmix64(splitmix64(master) ^ index) >> 1


@dataclass(frozen=True)
class Primitive:
    """Vertical prism standing on ``y = y_bottom`` and rising to ``y_top`` (y is down)."""

    kind: str  # "box" or "cylinder"
    label: int
    center: tuple[float, float]  # (x, z)
    half: tuple[float, float]  # box half extents (x, z) or (radius, radius)
    y_top: float
    y_bottom: float
    yaw: float = 0.0  # radians, boxes only
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)

    @property
    def radius(self) -> float:
        return float(np.hypot(*self.half)) if self.kind == "box" else self.half[0]

    def contains(self, pts: np.ndarray) -> np.ndarray:
        dx = pts[..., 0] - self.center[0]
        dz = pts[..., 2] - self.center[1]
        inside_y = (pts[..., 1] >= self.y_top) & (pts[..., 1] <= self.y_bottom)
        if self.kind == "cylinder":
            return inside_y & (dx * dx + dz * dz <= self.half[0] ** 2)
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        lx = c * dx + s * dz
        lz = -s * dx + c * dz
        return inside_y & (np.abs(lx) <= self.half[0]) & (np.abs(lz) <= self.half[1])


@dataclass
class SyntheticSceneSpec:
    grid: TargetGridSpec
    intrinsics: Intrinsics
    eye: tuple[float, float, float]
    look: tuple[float, float, float]
    eye_jitter: tuple[float, float, float] = (0.15, 0.1, 0.15)
    look_jitter: tuple[float, float, float] = (0.2, 0.1, 0.2)
    num_objects: tuple[int, int] = (2, 4)
    primitives: tuple[str, ...] = ("box", "tall_box", "cylinder", "slab")
    num_semantic: int = 5  # M
    floor_y: float = 2.9
    wall_thickness: float = 0.2
    structure: bool = True  # floor and walls
    near_z: float = 1.0  # objects stay beyond this depth so they are in view
    max_retries: int = 200
    color_jitter: float = 0.08

    def validate(self) -> None:
        if self.num_semantic < 2:
            raise ValueError("need at least two semantic classes")
        for p in self.primitives:
            if p not in PRIMITIVE_CLASS:
                raise ValueError(f"unknown primitive {p!r}")
        need = max([PRIMITIVE_CLASS[p] for p in self.primitives] + ([WALL] if self.structure else [0]))
        if need > self.num_semantic:
            raise ValueError(f"primitives need class ids up to {need}, but M = {self.num_semantic}")
        lo, hi = self.num_objects
        if not 0 <= lo <= hi:
            raise ValueError(f"bad object count range {self.num_objects}")
        ext = self.grid.extent
        o = np.asarray(self.grid.origin)
        if not (o[1] < self.floor_y <= o[1] + ext[1]):
            raise ValueError("floor must lie inside the grid")


@dataclass
class Scene:
    image: np.ndarray  # (3, H, W) float32 in [0, 1]
    grid: LabelGrid
    camera: CameraModel
    class_map: np.ndarray  # (H, W) class of the first occupied voxel, FREE where the ray escapes
    depth: np.ndarray  # (H, W) ray parameter of the hit, inf on misses
    primitives: list[Primitive] = field(default_factory=list)


# construction -----------------------------------------------------------------


def _color(rng, label, jitter):
    base = np.array(_BASE_COLORS[label])
    return tuple(np.clip(base + rng.uniform(-jitter, jitter, 3), 0, 1).tolist())


def structure_primitives(spec: SyntheticSceneSpec, rng) -> list[Primitive]:
    o = np.asarray(spec.grid.origin, dtype=np.float64)
    hi = o + spec.grid.extent
    t = spec.wall_thickness
    cx, cz = (o[0] + hi[0]) / 2, (o[2] + hi[2]) / 2
    hx, hz = (hi[0] - o[0]) / 2, (hi[2] - o[2]) / 2
    floor = Primitive("box", FLOOR, (cx, cz), (hx, hz), spec.floor_y, hi[1], color=_color(rng, FLOOR, spec.color_jitter))
    wall_color = _color(rng, WALL, spec.color_jitter)
    top = o[1]
    walls = [
        Primitive("box", WALL, (o[0] + t / 2, cz), (t / 2, hz), top, spec.floor_y, color=wall_color),
        Primitive("box", WALL, (hi[0] - t / 2, cz), (t / 2, hz), top, spec.floor_y, color=wall_color),
        Primitive("box", WALL, (cx, hi[2] - t / 2), (hx, t / 2), top, spec.floor_y, color=wall_color),
    ]
    return [floor] + walls


def _sample_object(kind, rng) -> tuple[tuple, float, float]:
    """(half extents, height, yaw) for one primitive kind."""
    if kind == "box":
        return (rng.uniform(0.2, 0.4), rng.uniform(0.2, 0.4)), rng.uniform(0.4, 1.0), rng.uniform(0, np.pi)
    if kind == "tall_box":
        return (rng.uniform(0.15, 0.3), rng.uniform(0.15, 0.3)), rng.uniform(1.2, 2.0), rng.uniform(0, np.pi)
    if kind == "cylinder":
        r = rng.uniform(0.2, 0.45)
        return (r, r), rng.uniform(0.5, 1.5), 0.0
    r = (rng.uniform(0.3, 0.5), rng.uniform(0.3, 0.5))
    return r, rng.uniform(0.3, 0.5), rng.uniform(0, np.pi)


def place_objects(spec: SyntheticSceneSpec, rng, count: int) -> list[Primitive]:
    o = np.asarray(spec.grid.origin, dtype=np.float64)
    hi = o + spec.grid.extent
    margin = spec.wall_thickness + 0.05 if spec.structure else 0.05
    placed: list[Primitive] = []
    for _ in range(count):
        kind = spec.primitives[int(rng.integers(len(spec.primitives)))]
        for _attempt in range(spec.max_retries):
            half, height, yaw = _sample_object(kind, rng)
            kind_geom = "cylinder" if kind == "cylinder" else "box"
            label = PRIMITIVE_CLASS[kind]
            rad = float(np.hypot(*half)) if kind_geom == "box" else half[0]
            xlo, xhi = o[0] + margin + rad, hi[0] - margin - rad
            zlo, zhi = max(o[2] + margin, spec.near_z) + rad, hi[2] - margin - rad
            if xlo > xhi or zlo > zhi:
                continue
            center = (rng.uniform(xlo, xhi), rng.uniform(zlo, zhi))
            if any(np.hypot(center[0] - p.center[0], center[1] - p.center[1]) < rad + p.radius + 0.1 for p in placed):
                continue
            y_top = max(spec.floor_y - height, o[1])
            placed.append(Primitive(kind_geom, label, center, half, y_top, spec.floor_y, yaw, _color(rng, label, spec.color_jitter)))
            break
        else:
            raise PlacementError(f"could not place a {kind} after {spec.max_retries} attempts")
    return placed


def voxelize(prims: list[Primitive], grid: TargetGridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Labels and instance ids (``-1`` for free) from voxel-center containment; later primitives win."""
    centers = grid.voxel_centers()
    labels = np.zeros(grid.dims, dtype=np.uint8)
    inst = np.full(grid.dims, -1, dtype=np.int32)
    for i, p in enumerate(prims):
        m = p.contains(centers)
        labels[m] = p.label
        inst[m] = i
    return labels, inst


def frustum_mask(grid: TargetGridSpec, camera: CameraModel) -> np.ndarray:
    """Voxels whose centers project inside the image in front of the camera."""
    _, valid = camera_to_pixel(target_to_camera(grid.voxel_centers(), camera.extrinsics), camera.intrinsics)
    return valid


# rendering --------------------------------------------------------------------


def pixel_rays(camera: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """World-space origin and unnormalized direction through every pixel center, ``(H, W, 3)``."""
    k, e = camera.intrinsics, camera.extrinsics
    v, u = np.meshgrid(np.arange(k.height) + 0.5, np.arange(k.width) + 0.5, indexing="ij")
    d_cam = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    d_world = d_cam @ e.rotation  # R^T d for row vectors
    origin = np.broadcast_to(e.camera_center, d_world.shape)
    return origin, d_world


def march(labels: np.ndarray, grid: TargetGridSpec, origin: np.ndarray, direction: np.ndarray):
    """Vectorized voxel traversal; returns ``(x, y, z, face_axis, t)`` of the first occupied voxel.

    Misses have index ``-1`` and ``t = inf``. Ties between axes step the
    lowest axis first.
    """
    shape = origin.shape[:-1]
    o = origin.reshape(-1, 3).astype(np.float64)
    d = direction.reshape(-1, 3).astype(np.float64)
    n = o.shape[0]
    dims = np.asarray(grid.dims)
    lo = np.asarray(grid.origin, dtype=np.float64)
    hi = lo + dims * grid.voxel_size
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(d != 0, 1.0 / d, np.inf)
        t0 = (lo - o) * inv
        t1 = (hi - o) * inv
    tnear = np.where(d != 0, np.minimum(t0, t1), np.where((o >= lo) & (o <= hi), -np.inf, np.inf))
    tfar = np.where(d != 0, np.maximum(t0, t1), np.where((o >= lo) & (o <= hi), np.inf, -np.inf))
    t_enter = np.max(tnear, axis=1)
    enter_axis = np.argmax(tnear, axis=1)
    t_exit = np.min(tfar, axis=1)
    alive = (t_enter <= t_exit) & (t_exit > 0)
    t_start = np.maximum(t_enter, 0.0)
    p = o + d * t_start[:, None]
    cell = np.floor((p - lo) / grid.voxel_size).astype(np.int64)
    cell = np.clip(cell, 0, dims - 1)
    step = np.where(d > 0, 1, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        boundary = lo + (cell + (step > 0)) * grid.voxel_size
        tmax = np.where(d != 0, (boundary - o) * inv, np.inf)
        tdelta = np.where(d != 0, grid.voxel_size * np.abs(inv), np.inf)
    face = np.where(t_enter > 0, enter_axis, -1)
    t_hit = np.where(alive, t_start, np.inf)

    out = np.full((n, 3), -1, dtype=np.int64)
    out_face = np.full(n, -1, dtype=np.int64)
    out_t = np.full(n, np.inf)
    active = np.nonzero(alive)[0]
    for _ in range(int(dims.sum()) + 3):
        if active.size == 0:
            break
        c = cell[active]
        lab = labels[c[:, 0], c[:, 1], c[:, 2]]
        hit = lab != 0
        hidx = active[hit]
        out[hidx] = c[hit]
        out_face[hidx] = face[hidx]
        out_t[hidx] = t_hit[hidx]
        active = active[~hit]
        if active.size == 0:
            break
        tm = tmax[active]
        axis = np.argmin(tm, axis=1)
        rows = np.arange(active.size)
        t_hit[active] = tm[rows, axis]
        cell[active, axis] += step[active, axis]
        tmax[active, axis] += tdelta[active, axis]
        face[active] = axis
        inside = np.all((cell[active] >= 0) & (cell[active] < dims), axis=1)
        active = active[inside]
    return out.reshape(shape + (3,)), out_face.reshape(shape), out_t.reshape(shape)


def render(labels: np.ndarray, inst: np.ndarray, prims: list[Primitive], grid: TargetGridSpec, camera: CameraModel):
    """Flat-shaded image, class map and hit distance along each pixel ray."""
    origin, direction = pixel_rays(camera)
    idx, face, t = march(labels, grid, origin, direction)
    H, W = face.shape
    hit = idx[..., 0] >= 0
    class_map = np.zeros((H, W), dtype=np.uint8)
    image = np.broadcast_to(BACKGROUND, (H, W, 3)).copy()
    if hit.any():
        hx, hy, hz = idx[hit].T
        class_map[hit] = labels[hx, hy, hz]
        colors = np.array([p.color for p in prims])[inst[hx, hy, hz]]
        shade = np.where(face[hit] >= 0, _FACE_SHADE[np.maximum(face[hit], 0)], 1.0)
        dist = t[hit] * np.linalg.norm(direction[hit], axis=-1)
        fog = np.exp(-dist / 12.0)[:, None]
        image[hit] = colors * shade[:, None] * fog + BACKGROUND * (1 - fog)
    depth = np.where(hit, t, np.inf)
    return image.transpose(2, 0, 1).astype(np.float32), class_map, depth


def sample_camera(spec: SyntheticSceneSpec, rng) -> CameraModel:
    eye = np.asarray(spec.eye) + rng.uniform(-1, 1, 3) * np.asarray(spec.eye_jitter)
    look = np.asarray(spec.look) + rng.uniform(-1, 1, 3) * np.asarray(spec.look_jitter)
    return CameraModel(spec.intrinsics, look_at(eye, look))


def generate_scene(spec: SyntheticSceneSpec, seed: int) -> Scene:
    spec.validate()
    rng = np.random.default_rng(seed)
    camera = sample_camera(spec, rng)
    prims = structure_primitives(spec, rng) if spec.structure else []
    lo, hi = spec.num_objects
    prims += place_objects(spec, rng, int(rng.integers(lo, hi + 1)))
    labels, inst = voxelize(prims, spec.grid)
    unknown = ~frustum_mask(spec.grid, camera)
    image, class_map, depth = render(labels, inst, prims, spec.grid, camera)
    grid = LabelGrid(labels, unknown, spec.num_semantic + 1)
    return Scene(image, grid, camera, class_map, depth, prims)
