import math

import numpy as np
import pytest

from ndcscene import presets
from ndcscene.autodiff import Tensor, mul, precision, sum as tsum
from ndcscene.autodiff.gradcheck import check_gradients
from ndcscene.geometry import (
    CameraGridSpec,
    Extrinsics,
    Intrinsics,
    NdcGridSpec,
    TargetGridSpec,
    look_at,
    rotate_extrinsics,
)
from ndcscene.lifting import (
    LiftedVolume,
    camera_resample_to_target,
    camera_space_lift,
    conv_footprint,
    flosp_lift,
    ndc_resample_to_target,
    target_sampling_coords,
)

# Small camera looking down +z at an 8x8x8 grid of 0.25 m voxels.
K8 = Intrinsics(fx=14.0, fy=14.0, cx=8.0, cy=8.0, width=16, height=16)
G8 = TargetGridSpec((8, 8, 8), 0.25, (-1.0, -1.0, 0.5))
E8 = look_at(eye=(0.1, -0.05, -0.6), target=(0.0, 0.1, 1.5))


def _oracle_bilinear(feat, u, v, stride):
    C, H, W = feat.shape
    x = min(max(u / stride - 0.5, 0.0), W - 1)
    y = min(max(v / stride - 0.5, 0.0), H - 1)
    x0, y0 = min(int(math.floor(x)), W - 1), min(int(math.floor(y)), H - 1)
    x1, y1 = min(x0 + 1, W - 1), min(y0 + 1, H - 1)
    ax, ay = x - x0, y - y0
    out = np.zeros(C)
    for c in range(C):
        out[c] = (
            (1 - ay) * (1 - ax) * float(feat[c, y0, x0])
            + (1 - ay) * ax * float(feat[c, y0, x1])
            + ay * (1 - ax) * float(feat[c, y1, x0])
            + ay * ax * float(feat[c, y1, x1])
        )
    return out


def _oracle_project(p, R, t, k):
    cam = [sum(R[i][j] * p[j] for j in range(3)) + t[i] for i in range(3)]
    if cam[2] <= 1e-6:
        return None
    u = k.fx * cam[0] / cam[2] + k.cx
    v = k.fy * cam[1] / cam[2] + k.cy
    if not (0 <= u <= k.width and 0 <= v <= k.height):
        return None
    return u, v


def oracle_flosp(feat, spec, k, e):
    C, H, W = feat.shape
    stride = k.width / W
    R, t = e.rotation.tolist(), e.translation.tolist()
    out = np.zeros((C,) + spec.dims)
    mask = np.zeros(spec.dims, dtype=bool)
    for x in range(spec.dims[0]):
        for y in range(spec.dims[1]):
            for z in range(spec.dims[2]):
                p = [spec.origin[a] + (idx + 0.5) * spec.voxel_size for a, idx in enumerate((x, y, z))]
                uv = _oracle_project(p, R, t, k)
                if uv is None:
                    continue
                mask[x, y, z] = True
                out[:, x, y, z] = _oracle_bilinear(feat, uv[0], uv[1], stride)
    return out, mask


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / (np.max(np.abs(b)) + 1e-12))


def test_flosp_constant_map():
    feat = Tensor(np.full((2, 4, 4), 7.0, dtype=np.float32))
    vol = flosp_lift(feat, G8, K8, E8)
    assert vol.space_tag == "target"
    assert vol.valid_mask.any() and (~vol.valid_mask).any()
    assert np.all(vol.features.data[:, vol.valid_mask] == 7.0)
    assert np.all(vol.features.data[:, ~vol.valid_mask] == 0.0)


def test_flosp_same_ray_identical():
    # camera at the origin: voxel centers with parallel position vectors share a ray
    k = Intrinsics(4.0, 4.0, 4.0, 4.0, 8, 8)
    spec = TargetGridSpec((8, 8, 8), 1.0, (-4.0, -4.0, 0.0))
    e = Extrinsics()
    centers = spec.voxel_centers().reshape(-1, 3)
    dirs = centers / np.linalg.norm(centers, axis=1, keepdims=True)
    pairs = [(a, b) for a in range(len(dirs)) for b in range(a + 1, len(dirs)) if np.allclose(dirs[a], dirs[b], atol=1e-12)]
    assert pairs
    rng = np.random.default_rng(0)
    vol = flosp_lift(Tensor(rng.normal(size=(3, 4, 4)).astype(np.float32)), spec, k, e)
    flat = vol.features.data.reshape(3, -1)
    valid = vol.valid_mask.reshape(-1)
    checked = 0
    for a, b in pairs:
        if valid[a] and valid[b]:
            np.testing.assert_array_equal(flat[:, a], flat[:, b])
            checked += 1
    assert checked > 0


@pytest.mark.parametrize("seed", range(3))
def test_flosp_matches_per_voxel_oracle(seed):
    rng = np.random.default_rng(seed)
    feat = rng.normal(size=(3, 8, 8)).astype(np.float32)
    vol = flosp_lift(Tensor(feat), G8, K8, E8)
    ref, mask = oracle_flosp(feat, G8, K8, E8)
    np.testing.assert_array_equal(vol.valid_mask, mask)
    assert _rel(vol.features.data.astype(np.float64), ref) < 1e-6


def test_camera_space_lift_constant_and_oracle():
    spec = CameraGridSpec((8, 8, 8), (-0.6, 0.6), (-0.5, 0.5), (0.3, 2.3))
    vol = camera_space_lift(Tensor(np.full((1, 8, 8), 3.0, dtype=np.float32)), spec, K8)
    assert np.all(vol.features.data[:, vol.valid_mask] == 3.0)
    assert vol.valid_mask.any() and (~vol.valid_mask).any()

    rng = np.random.default_rng(5)
    feat = rng.normal(size=(2, 8, 8)).astype(np.float32)
    vol = camera_space_lift(Tensor(feat), spec, K8)
    stride = K8.width / 8
    steps = [(spec.x_range[1] - spec.x_range[0]) / 8, (spec.y_range[1] - spec.y_range[0]) / 8, (spec.d_range[1] - spec.d_range[0]) / 8]
    ref = np.zeros((2, 8, 8, 8))
    for r in range(8):
        for c in range(8):
            for d in range(8):
                p = [spec.x_range[0] + (c + 0.5) * steps[0], spec.y_range[0] + (r + 0.5) * steps[1], spec.d_range[0] + (d + 0.5) * steps[2]]
                uv = _oracle_project(p, np.eye(3).tolist(), [0, 0, 0], K8)
                assert (uv is not None) == vol.valid_mask[r, c, d]
                if uv is not None:
                    ref[:, r, c, d] = _oracle_bilinear(feat, uv[0], uv[1], stride)
    assert _rel(vol.features.data.astype(np.float64), ref) < 1e-6


def test_camera_space_near_columns_spread_wider_than_far():
    p = presets.desk()
    fp = conv_footprint(p.camera_grid, p.camera.intrinsics, None, K=1)
    spread = fp.spread  # rows, cols, depth
    near = np.nanmean(spread[..., :4])
    far = np.nanmean(spread[..., -4:])
    assert near > 3 * far


def _ndc_setup(dims=(8, 6, 5)):
    k = Intrinsics(12.0, 12.0, 8.0, 6.0, width=16, height=12)
    ndc = NdcGridSpec(dims, stride=2.0, d_min=0.5, d_max=3.0)
    target = TargetGridSpec((10, 8, 10), 0.15, (-0.75, -0.6, 0.6))
    e = look_at(eye=(0.05, -0.1, -0.2), target=(0.0, 0.0, 1.5))
    return k, ndc, target, e


def test_ndc_resample_constant():
    k, ndc, target, e = _ndc_setup()
    vol = LiftedVolume(Tensor(np.full((2,) + ndc.array_shape, 4.0, dtype=np.float32)), "ndc", ndc, np.ones(ndc.array_shape, bool))
    for mode in ("trilinear", "nearest"):
        out = ndc_resample_to_target(vol, target, k, e, mode=mode)
        assert out.valid_mask.any() and (~out.valid_mask).any()
        np.testing.assert_allclose(out.features.data[:, out.valid_mask], 4.0, rtol=1e-6)
        assert np.all(out.features.data[:, ~out.valid_mask] == 0)


def test_ndc_resample_space_tag_checked():
    k, ndc, target, e = _ndc_setup()
    vol = LiftedVolume(Tensor(np.zeros((1,) + ndc.array_shape, np.float32)), "ndc", ndc, np.ones(ndc.array_shape, bool))
    with pytest.raises(ValueError):
        camera_resample_to_target(vol, target, k, e)
    flo = flosp_lift(Tensor(np.zeros((1, 6, 8), np.float32)), target, k, e)
    with pytest.raises(ValueError):
        ndc_resample_to_target(flo, target, k, e)


def test_ndc_nearest_equals_index_lookup():
    k, ndc, target, e = _ndc_setup()
    rng = np.random.default_rng(1)
    feats = rng.normal(size=(3,) + ndc.array_shape).astype(np.float32)
    vol = LiftedVolume(Tensor(feats), "ndc", ndc, np.ones(ndc.array_shape, bool))
    out = ndc_resample_to_target(vol, target, k, e, mode="nearest")
    R, t = e.rotation.tolist(), e.translation.tolist()
    rows, cols, deps = ndc.array_shape
    hits = 0
    for x in range(target.dims[0]):
        for y in range(target.dims[1]):
            for z in range(target.dims[2]):
                p = [target.origin[a] + (i + 0.5) * target.voxel_size for a, i in enumerate((x, y, z))]
                cam = [sum(R[i][j] * p[j] for j in range(3)) + t[i] for i in range(3)]
                u = k.fx * cam[0] / cam[2] + k.cx
                v = k.fy * cam[1] / cam[2] + k.cy
                c, r, d = u / ndc.stride, v / ndc.stride, (cam[2] - ndc.d_min) / ndc.depth_step
                if 0 <= c <= cols and 0 <= r <= rows and 0 <= d <= deps:
                    ci, ri, di = min(int(c), cols - 1), min(int(r), rows - 1), min(int(d), deps - 1)
                    np.testing.assert_array_equal(out.features.data[:, x, y, z], feats[:, ri, ci, di])
                    assert out.valid_mask[x, y, z]
                    hits += 1
                else:
                    assert not out.valid_mask[x, y, z]
    assert hits > 50


def test_ndc_cells_along_one_pixel_are_independent():
    k, ndc, target, e = _ndc_setup()
    base = np.zeros((1,) + ndc.array_shape, np.float32)
    coords, front = target_sampling_coords(ndc, target, k, e)
    lookup = np.where(front[..., None], np.floor(coords + 0.5), -1).astype(np.int64)

    def changed(r, c, d):
        pert = base.copy()
        pert[0, r, c, d] = 1.0
        a = ndc_resample_to_target(LiftedVolume(Tensor(base), "ndc", ndc, np.ones(ndc.array_shape, bool)), target, k, e, "nearest")
        b = ndc_resample_to_target(LiftedVolume(Tensor(pert), "ndc", ndc, np.ones(ndc.array_shape, bool)), target, k, e, "nearest")
        return a.features.data[0] != b.features.data[0]

    r, c = 3, 4
    sets = [changed(r, c, d) for d in range(ndc.dims[2])]
    assert sum(int(s.any()) for s in sets) >= 2
    for d, s in enumerate(sets):
        inside = np.all((lookup >= 0) & (lookup < np.array(ndc.array_shape)), axis=-1)
        expected = inside & (lookup[..., 0] == r) & (lookup[..., 1] == c) & (lookup[..., 2] == d)
        np.testing.assert_array_equal(s, expected)
        for d2 in range(d + 1, len(sets)):
            assert not np.any(s & sets[d2])


def test_rotation_double_path_nearest():
    p = presets.desk()
    k, e, target = p.camera.intrinsics, p.camera.extrinsics, p.target
    ndc = p.ndc
    rng = np.random.default_rng(2)
    vol = LiftedVolume(Tensor(rng.normal(size=(2,) + ndc.array_shape).astype(np.float32)), "ndc", ndc, np.ones(ndc.array_shape, bool))
    pivot = target.center
    e_rot = rotate_extrinsics(e, 90.0, [0, 1, 0], pivot)
    path_a = ndc_resample_to_target(vol, target, k, e_rot, "nearest").features.data
    plain = ndc_resample_to_target(vol, target, k, e, "nearest").features.data
    # rotate the target grid: voxel q of the rotated frame sits at R (q - c) + c
    X, Y, Z = target.dims
    path_b = np.zeros_like(plain)
    for x in range(X):
        for z in range(Z):
            qx = (x + 0.5) * target.voxel_size + target.origin[0] - pivot[0]
            qz = (z + 0.5) * target.voxel_size + target.origin[2] - pivot[2]
            # 90 deg about +y: (x, z) -> (z, -x)
            sx, sz = qz + pivot[0], -qx + pivot[2]
            ix = int(round((sx - target.origin[0]) / target.voxel_size - 0.5))
            iz = int(round((sz - target.origin[2]) / target.voxel_size - 0.5))
            path_b[:, x, :, z] = plain[:, ix, :, iz]
    assert np.count_nonzero(path_a) > 1000
    np.testing.assert_array_equal(path_a, path_b)


def test_lifting_gradients():
    k, ndc, target, e = _ndc_setup((4, 3, 4))
    rng = np.random.default_rng(3)
    with precision(np.float64):
        feat2d = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True, name="feat2d")
        flo_probe = Tensor(rng.normal(size=(2,) + target.dims))
        errs = check_gradients(lambda: tsum(mul(flosp_lift(feat2d, target, k, e).features, flo_probe)), [feat2d])
        assert max(errs.values()) < 1e-3
        nd = Tensor(rng.normal(size=(2,) + ndc.array_shape), requires_grad=True, name="ndc")
        errs = check_gradients(
            lambda: tsum(mul(ndc_resample_to_target(LiftedVolume(nd, "ndc", ndc, np.ones(ndc.array_shape, bool)), target, k, e).features, flo_probe)),
            [nd],
        )
        assert max(errs.values()) < 1e-3


# footprint -------------------------------------------------------------------


@pytest.mark.parametrize("name", ["indoor", "outdoor", "desk"])
def test_footprint_ndc_is_uniform(name):
    p = presets.get(name)
    fp = conv_footprint(p.ndc, p.camera.intrinsics, p.camera.extrinsics, K=1, with_spread=False)
    s = fp.summary
    assert s["cv"] == 0.0
    assert s["pixels_hit"] == s["pixels_total"]


@pytest.mark.parametrize("name", ["indoor", "outdoor"])
def test_footprint_target_and_camera_are_imbalanced(name):
    p = presets.get(name)
    k, e = p.camera.intrinsics, p.camera.extrinsics
    for spec in (p.target, p.camera_grid):
        assert conv_footprint(spec, k, e, K=1, stride=p.ndc.stride, with_spread=False).summary["cv"] > 0


def test_footprint_outdoor_target_regression():
    # frozen from the centre-anchored footprint at the decoder stride
    p = presets.outdoor()
    s = conv_footprint(p.target, p.camera.intrinsics, p.camera.extrinsics, K=1, stride=p.ndc.stride, with_spread=False).summary
    assert s["min"] == 27 and s["max"] == 22842
    assert s["max_min_ratio"] > 2
    assert s["cv"] == pytest.approx(1.2604579963162295, rel=1e-9)


@pytest.mark.parametrize("K2", [2, 3])
def test_footprint_scales_with_kernel(K2):
    p = presets.desk()
    base = conv_footprint(p.ndc, p.camera.intrinsics, None, K=1, with_spread=False).counts
    big = conv_footprint(p.ndc, p.camera.intrinsics, None, K=K2, with_spread=False).counts
    np.testing.assert_array_equal(big * 27, base * (2 * K2 + 1) ** 3)


def test_footprint_rejects_bad_K():
    p = presets.desk()
    with pytest.raises(ValueError):
        conv_footprint(p.ndc, p.camera.intrinsics, None, K=0)


def test_footprint_rows_cover_grid():
    p = presets.desk()
    fp = conv_footprint(p.ndc, p.camera.intrinsics, None, with_spread=False)
    rows = list(fp.rows())
    assert len(rows) == fp.counts.size
    assert rows[0] == (1.0, 1.0, int(fp.counts[0, 0]))
