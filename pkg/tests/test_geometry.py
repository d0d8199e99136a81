import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndcscene import presets
from ndcscene.geometry import (
    CameraGridSpec,
    Extrinsics,
    Intrinsics,
    NdcGridSpec,
    TargetGridSpec,
    axis_angle_matrix,
    camera_to_pixel,
    ndc_cell_center,
    ndc_centers,
    ndc_to_target,
    rotate_extrinsics,
    target_to_camera,
    target_to_ndc,
)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def random_pose(rng):
    return Extrinsics(random_rotation(rng), rng.uniform(-2, 2, size=3))


UNIT_K = Intrinsics(1.0, 1.0, 0.0, 0.0, width=10, height=10)


def test_identity_transform():
    np.testing.assert_array_equal(target_to_camera([1, 2, 3], Extrinsics()), [1, 2, 3])


def test_translation_only():
    e = Extrinsics(np.eye(3), [0, 0, 5])
    np.testing.assert_array_equal(target_to_camera([1, 2, 3], e), [1, 2, 8])


def test_vertical_quarter_turn_matches_matrix_oracle():
    rng = np.random.default_rng(0)
    c, s = 0.0, 1.0
    R = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    e = Extrinsics(R, [0.5, -1.0, 2.0])
    p = rng.normal(size=3)
    expected = [sum(R[i, j] * p[j] for j in range(3)) + e.translation[i] for i in range(3)]
    np.testing.assert_allclose(target_to_camera(p, e), expected, rtol=0, atol=1e-15)


def test_extrinsics_validation():
    with pytest.raises(ValueError):
        Extrinsics(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        Extrinsics(np.eye(3) * 2)
    with pytest.raises(ValueError):
        Intrinsics(0.0, 1.0, 0, 0, 4, 4)


def test_projection_simple():
    uv, valid = camera_to_pixel([2.0, 4.0, 2.0], UNIT_K)
    np.testing.assert_array_equal(uv, [1.0, 2.0])
    assert bool(valid)


def test_projection_zero_depth_invalid():
    uv, valid = camera_to_pixel([1.0, 1.0, 0.0], UNIT_K)
    assert not bool(valid) and np.all(np.isfinite(uv))


def test_projection_outside_image_invalid():
    _, valid = camera_to_pixel([100.0, 1.0, 1.0], UNIT_K)
    assert not bool(valid)


def test_projection_random_double_precision():
    rng = np.random.default_rng(3)
    for _ in range(200):
        k = Intrinsics(*rng.uniform(50, 500, 2), *rng.uniform(0, 300, 2), width=640, height=480)
        p = rng.uniform(-3, 3, size=3)
        p[2] = abs(p[2]) + 0.1
        uv, _ = camera_to_pixel(p, k)
        assert uv[0] == k.fx * p[0] / p[2] + k.cx
        assert uv[1] == k.fy * p[1] / p[2] + k.cy


def test_ndc_cell_centers():
    spec = NdcGridSpec((4, 3, 2), stride=8, d_min=1.0, d_max=5.0)
    np.testing.assert_array_equal(ndc_cell_center(spec, 0, 0, [0, 1])[:, 2], [2.0, 4.0])
    np.testing.assert_array_equal(ndc_cell_center(spec, 0, 0, 0)[:2], [4.0, 4.0])
    with pytest.raises(IndexError):
        ndc_cell_center(spec, 4, 0, 0)


def test_ndc_centers_monotone():
    spec = NdcGridSpec((5, 4, 6), stride=2, d_min=0.5, d_max=3.0)
    c = ndc_centers(spec)  # (rows=v, cols=u, depth, 3)
    assert np.all(np.diff(c[..., 0], axis=1) > 0)
    assert np.all(np.diff(c[..., 1], axis=0) > 0)
    assert np.all(np.diff(c[..., 2], axis=2) > 0)


def test_ndc_to_target_simple():
    spec = NdcGridSpec((4, 4, 1), stride=2.0, d_min=1.5, d_max=2.5)
    p = ndc_to_target(spec, UNIT_K, Extrinsics(), 0, 0, 0)  # (u, v, d) = (1, 1, 2)
    np.testing.assert_allclose(p, [2.0, 2.0, 2.0])
    k = Intrinsics(1.0, 1.0, 0.0, -1.0, width=10, height=10)
    p = ndc_to_target(spec, k, Extrinsics(), 0, 0, 0)  # v - cy = 2
    np.testing.assert_allclose(p, [2.0, 4.0, 2.0])


def _round_trip_error(spec, k, e):
    centers = ndc_centers(spec)
    J, I, K = np.meshgrid(*(np.arange(n) for n in spec.array_shape), indexing="ij")
    world = ndc_to_target(spec, k, e, I, J, K)
    back = target_to_ndc(world, k, e)
    return np.max(np.abs(back - centers))


def test_round_trip_full_grid():
    p = presets.desk()
    assert _round_trip_error(p.ndc, p.camera.intrinsics, p.camera.extrinsics) < 1e-4


def test_round_trip_random_poses():
    rng = np.random.default_rng(7)
    spec = NdcGridSpec((16, 12, 10), stride=4.0, d_min=0.5, d_max=8.0)
    k = Intrinsics(60.0, 62.0, 31.0, 23.0, 64, 48)
    worst = 0.0
    for _ in range(1000 // 100):
        worst = max(worst, _round_trip_error(spec, k, random_pose(rng)))
    assert worst < 1e-3


def test_rotation_zero_is_identity():
    e = random_pose(np.random.default_rng(1))
    r = rotate_extrinsics(e, 0.0, [0, 1, 0])
    assert np.array_equal(r.rotation, e.rotation) and np.array_equal(r.translation, e.translation)


def test_rotation_group_property():
    e = random_pose(np.random.default_rng(2))
    pivot = np.array([1.0, 0.5, 2.0])
    twice = rotate_extrinsics(rotate_extrinsics(e, 45, [0, 1, 0], pivot), 45, [0, 1, 0], pivot)
    once = rotate_extrinsics(e, 90, [0, 1, 0], pivot)
    np.testing.assert_allclose(twice.rotation, once.rotation, atol=1e-12)
    np.testing.assert_allclose(twice.translation, once.translation, atol=1e-12)


def test_rotation_against_matrix_oracle():
    rng = np.random.default_rng(4)
    for _ in range(20):
        e = random_pose(rng)
        axis = rng.normal(size=3)
        angle = rng.uniform(-180, 180)
        # Rodrigues oracle written independently via the matrix exponential series
        a = axis / np.linalg.norm(axis)
        Kx = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]]) * np.deg2rad(angle)
        R = np.eye(3)
        term = np.eye(3)
        for n in range(1, 40):
            term = term @ Kx / n
            R = R + term
        q = rng.normal(size=3)
        out = rotate_extrinsics(e, angle, axis)
        np.testing.assert_allclose(target_to_camera(q, out), e.rotation @ (R @ q) + e.translation, atol=1e-9)


def test_rotation_zero_axis_rejected():
    with pytest.raises(ValueError):
        axis_angle_matrix(10.0, [0, 0, 0])


@settings(max_examples=50, deadline=None)
@given(st.floats(-360, 360), st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_rotation_preserves_orthonormality(angle, axis):
    e = random_pose(np.random.default_rng(0))
    out = e
    for _ in range(5):
        out = rotate_extrinsics(out, angle, axis)
    R = out.rotation
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-6)
    assert abs(np.linalg.det(R) - 1) < 1e-6


def _inside_frustum_planes(p_world, k, e):
    """Independent test: point inside the four side planes of the pyramid and in front."""
    c = e.camera_center
    R = e.rotation
    corners = [((0 - k.cx) / k.fx, (0 - k.cy) / k.fy), ((k.width - k.cx) / k.fx, (0 - k.cy) / k.fy),
               ((k.width - k.cx) / k.fx, (k.height - k.cy) / k.fy), ((0 - k.cx) / k.fx, (k.height - k.cy) / k.fy)]
    rays = [R.T @ np.array([x, y, 1.0]) for x, y in corners]
    fwd = R.T @ np.array([0, 0, 1.0])
    rel = p_world - c
    if rel @ fwd <= 1e-6:
        return False
    for a, b in zip(rays, rays[1:] + rays[:1]):
        n = np.cross(a, b)
        if rel @ n < 0:
            return False
    return True


def test_projection_inside_image_iff_inside_frustum():
    p = presets.desk()
    k, e = p.camera.intrinsics, p.camera.extrinsics
    centers = p.target.voxel_centers().reshape(-1, 3)
    _, valid = camera_to_pixel(target_to_camera(centers, e), k)
    rng = np.random.default_rng(0)
    sample = rng.choice(len(centers), size=3000, replace=False)
    for i in sample:
        assert bool(valid[i]) == _inside_frustum_planes(centers[i], k, e)


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        TargetGridSpec((0, 2, 2), 0.1)
    with pytest.raises(ValueError):
        NdcGridSpec((2, 2, 2), 1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        CameraGridSpec((2, 2, 2), (1, 0), (0, 1), (1, 2))


def test_camera_grid_cover_contains_frustum():
    p = presets.desk()
    cg = p.camera_grid
    assert cg.dims == p.ndc.dims
    assert cg.d_range == (p.ndc.d_min, p.ndc.d_max)
