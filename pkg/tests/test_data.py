import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndcscene import presets
from ndcscene.data import (
    FormatError,
    LabelGrid,
    ManifestError,
    SyntheticSceneSpec,
    build_manifest,
    generate_dataset,
    generate_scene,
    read_grid,
    read_manifest,
    split,
    write_grid,
)
from ndcscene.data.formats import grid_bytes, image_bytes, parse_grid, parse_image
from ndcscene.data.synthetic import BACKGROUND, FREE, Primitive, derive_seed, pixel_rays, splitmix64, voxelize
from ndcscene.geometry import TargetGridSpec


def desk_spec(**kw):
    p = presets.get("desk")
    return SyntheticSceneSpec(p.target, p.camera.intrinsics, eye=(2.4, 1.7, -0.4), look=(2.4, 2.9, 3.0), **kw)


def random_grid(rng, dims, ncls=6):
    return LabelGrid(rng.integers(0, ncls, dims), rng.random(dims) < 0.3, ncls)


# formats -----------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.tuples(*[st.integers(1, 9)] * 3), st.integers(0, 2**32 - 1))
def test_grid_round_trip_byte_exact(dims, seed):
    g = random_grid(np.random.default_rng(seed), dims)
    buf = grid_bytes(g)
    back = parse_grid(buf)
    assert np.array_equal(back.labels, g.labels)
    assert np.array_equal(back.unknown, g.unknown)
    assert back.num_classes == g.num_classes
    assert grid_bytes(back) == buf


def test_grid_layout_x_fastest():
    labels = np.zeros((3, 2, 2), np.uint8)
    labels[1, 0, 0] = 4
    unknown = np.zeros((3, 2, 2), bool)
    unknown[2, 0, 0] = True
    buf = grid_bytes(LabelGrid(labels, unknown, 5))
    assert buf[:4] == b"VXGD"
    assert buf[24:36] == bytes([0, 4] + [0] * 10)
    assert buf[36] == 0b100


def test_grid_file_round_trip(tmp_path):
    g = random_grid(np.random.default_rng(1), (7, 5, 3))
    write_grid(tmp_path / "a.vxgd", g)
    back = read_grid(tmp_path / "a.vxgd")
    assert np.array_equal(back.labels, g.labels) and np.array_equal(back.unknown, g.unknown)


def test_grid_nyu_shaped_size():
    X, Y, Z = 240, 144, 240
    n = X * Y * Z
    g = LabelGrid(np.zeros((X, Y, Z), np.uint8), np.zeros((X, Y, Z), bool), 12)
    assert len(grid_bytes(g)) == 24 + n + math.ceil(n / 8)


def test_grid_errors():
    buf = grid_bytes(random_grid(np.random.default_rng(2), (4, 4, 4)))
    with pytest.raises(FormatError, match="magic"):
        parse_grid(b"XXXX" + buf[4:])
    with pytest.raises(FormatError, match="truncated"):
        parse_grid(buf[:-1])
    with pytest.raises(FormatError, match="truncated"):
        parse_grid(buf[:10])
    with pytest.raises(FormatError, match="trailing"):
        parse_grid(buf + b"\0")
    bad = bytearray(buf)
    bad[24] = 200
    with pytest.raises(FormatError, match="overflow"):
        parse_grid(bytes(bad))
    bad = bytearray(buf)
    bad[4] = 9
    with pytest.raises(FormatError, match="version"):
        parse_grid(bytes(bad))


def test_label_grid_validation():
    with pytest.raises(ValueError):
        LabelGrid(np.full((2, 2, 2), 6), np.zeros((2, 2, 2), bool), 6)
    with pytest.raises(ValueError):
        LabelGrid(np.zeros((2, 2, 2)), np.zeros((2, 2, 1), bool), 6)


def test_image_round_trip_and_errors():
    img = np.random.default_rng(3).random((3, 5, 7)).astype(np.float32)
    buf = image_bytes(img)
    assert len(buf) == 16 + 4 * img.size
    assert np.array_equal(parse_image(buf), img)
    with pytest.raises(FormatError):
        parse_image(b"JUNK" + buf[4:])
    with pytest.raises(FormatError):
        parse_image(buf[:-4])


# generation --------------------------------------------------------------------


def test_splitmix_reference_values():
    # published first outputs of splitmix64 seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert derive_seed(7, 0) != derive_seed(7, 1)


def test_empty_room_all_free_and_background():
    s = generate_scene(desk_spec(structure=False, num_objects=(0, 0)), 5)
    assert not s.grid.labels.any()
    assert np.allclose(s.image, BACKGROUND.astype(np.float32)[:, None, None])
    assert (s.class_map == FREE).all()


def test_box_voxelization_matches_analytic_intersection():
    grid = TargetGridSpec((20, 16, 18), 0.1, (0.0, 0.0, 0.0))
    box = Primitive("box", 3, center=(0.93, 1.01), half=(0.37, 0.22), y_top=0.41, y_bottom=1.17)
    labels, _ = voxelize([box], grid)
    # voxel i is inside iff its center (i + 0.5) * 0.1 lies in the closed interval
    def axis(lo, hi, n):
        c = (np.arange(n) + 0.5) * 0.1
        return (c >= lo) & (c <= hi)

    expect = axis(0.56, 1.30, 20)[:, None, None] & axis(0.41, 1.17, 16)[None, :, None] & axis(0.79, 1.23, 18)[None, None, :]
    assert np.array_equal(labels == 3, expect)
    assert (labels[~expect] == 0).all()
    assert expect.sum() == 7 * 8 * 4


def test_cylinder_voxelization_matches_disk_count():
    grid = TargetGridSpec((30, 4, 30), 0.1)
    cyl = Primitive("cylinder", 4, center=(1.5, 1.5), half=(0.8, 0.8), y_top=0.0, y_bottom=0.4)
    labels, _ = voxelize([cyl], grid)
    c = (np.arange(30) + 0.5) * 0.1 - 1.5
    disk = (c[:, None] ** 2 + c[None, :] ** 2) <= 0.64
    assert np.array_equal(labels[:, 0, :] == 4, disk)
    assert (labels == 4).sum() == 4 * disk.sum()


def test_generation_deterministic():
    spec = desk_spec()
    a, b = generate_scene(spec, 11), generate_scene(spec, 11)
    assert np.array_equal(a.image, b.image)
    assert grid_bytes(a.grid) == grid_bytes(b.grid)
    assert a.camera.to_dict() == b.camera.to_dict()
    c = generate_scene(spec, 12)
    assert grid_bytes(c.grid) != grid_bytes(a.grid)


def test_scene_contents():
    s = generate_scene(desk_spec(), 3)
    assert s.image.shape == (3, 48, 64) and s.image.dtype == np.float32
    assert s.grid.dims == (48, 32, 48) and s.grid.num_classes == 6
    assert 0.0 <= s.image.min() and s.image.max() <= 1.0
    present = set(np.unique(s.grid.labels[s.grid.known]))
    assert {0, 1, 2} <= present
    assert present & {3, 4, 5}


def test_spec_validation():
    with pytest.raises(ValueError):
        generate_scene(desk_spec(num_semantic=1), 0)
    with pytest.raises(ValueError):
        generate_scene(desk_spec(primitives=("sphere",)), 0)
    with pytest.raises(ValueError):
        generate_scene(desk_spec(num_objects=(3, 1)), 0)


def _scalar_first_hit(labels, grid, o, d):
    """Independent per-ray voxel walk: sort all plane crossings, visit cells in order."""
    lo = np.asarray(grid.origin, float)
    hi = lo + np.asarray(grid.dims) * grid.voxel_size
    ts = [0.0]
    for a in range(3):
        if d[a] == 0:
            continue
        for plane in range(grid.dims[a] + 1):
            t = (lo[a] + plane * grid.voxel_size - o[a]) / d[a]
            if t > 0:
                ts.append(t)
    ts = sorted(ts)
    for t0, t1 in zip(ts, ts[1:]):
        if t1 - t0 < 1e-12:
            continue
        mid = o + d * (0.5 * (t0 + t1))
        if np.any(mid < lo) or np.any(mid >= hi):
            continue
        cell = np.floor((mid - lo) / grid.voxel_size).astype(int)
        if labels[tuple(cell)]:
            return int(labels[tuple(cell)])
    return 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_render_matches_scalar_ray_walk(seed):
    spec = desk_spec()
    s = generate_scene(spec, seed)
    origin, direction = pixel_rays(s.camera)
    H, W = s.class_map.shape
    rng = np.random.default_rng(seed)
    for v, u in zip(rng.integers(0, H, 60), rng.integers(0, W, 60)):
        expect = _scalar_first_hit(s.grid.labels, spec.grid, origin[v, u], direction[v, u])
        assert s.class_map[v, u] == expect, (v, u)


def test_rendered_classes_come_from_the_grid():
    s = generate_scene(desk_spec(), 4)
    assert (s.class_map > 0).mean() > 0.9
    assert set(np.unique(s.class_map)) - {0} <= set(np.unique(s.grid.labels))


# manifests ---------------------------------------------------------------------


def test_dataset_manifest_and_split(tmp_path):
    entries = generate_dataset(desk_spec(), tmp_path, 10, seed=9)
    assert len(entries) == 10
    assert read_manifest(tmp_path / "manifest.tsv") == entries
    line = (tmp_path / "manifest.tsv").read_text().splitlines()[0].split("\t")
    assert line[0].endswith(".imgf") and line[1].endswith(".vxgd")
    json.loads(line[2])
    train, test = split(entries, 0.8, seed=4)
    assert len(train) == 8 and len(test) == 2
    assert not {e.image_path for e in train} & {e.image_path for e in test}
    assert split(entries, 0.8, seed=4) == (train, test)
    assert build_manifest(tmp_path) == entries


def test_dataset_generation_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    generate_dataset(desk_spec(), a, 3, seed=2)
    generate_dataset(desk_spec(), b, 3, seed=2)
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_manifest_errors(tmp_path):
    with pytest.raises(ManifestError, match="no scenes"):
        build_manifest(tmp_path)
    generate_dataset(desk_spec(), tmp_path, 2, seed=1)
    (tmp_path / "scene_00001.vxgd").unlink()
    with pytest.raises(ManifestError, match="unpaired"):
        build_manifest(tmp_path)
    (tmp_path / "bad.tsv").write_text("a\tb\n")
    with pytest.raises(ManifestError):
        read_manifest(tmp_path / "bad.tsv")
