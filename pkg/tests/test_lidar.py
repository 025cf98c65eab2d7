import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semidepth.core import CameraRig, SparseDepthMap
from semidepth.errors import DomainError, FormatError, RangeError
from semidepth.lidar import (
    PointCloud,
    decode_depth_png,
    encode_depth_png,
    occlusion_filter,
    project_points,
    read_pointcloud_bin,
    write_pointcloud_bin,
)
from semidepth.synth import default_scene_spec, make_scene

RIG = CameraRig(10.0, 0.5, 9, 7)


def brute_projection(points, rig, offset):
    depth = np.zeros((rig.height, rig.width))
    for x, y, z, _ in points:
        x, y, z = x + offset[0], y + offset[1], z + offset[2]
        if z <= 0:
            continue
        u = int(np.rint(rig.focal_px * x / z + rig.cx))
        v = int(np.rint(rig.focal_px * y / z + rig.cy))
        if 0 <= u < rig.width and 0 <= v < rig.height and (depth[v, u] == 0 or z < depth[v, u]):
            depth[v, u] = z
    return depth


def test_axis_point_lands_on_centre():
    out = project_points(PointCloud(np.array([[0.0, 0.0, 10.0, 0.3]])), RIG)
    assert out.count == 1 and out.depth[3, 4] == 10.0


def test_zbuffer_keeps_nearest():
    pts = np.array([[1.0, 0.0, 9.0, 0.0], [5.0 / 9.0, 0.0, 5.0, 0.0]])
    out = project_points(PointCloud(pts), RIG)
    assert out.count == 1 and out.depth[3, 5] == 5.0


def test_random_cloud_matches_brute_force(rng):
    pts = np.column_stack([rng.uniform(-4, 4, (300, 2)), rng.uniform(-1, 12, 300), rng.random(300)])
    offset = (0.3, -0.1, 0.2)
    out = project_points(PointCloud(pts), RIG, offset)
    np.testing.assert_array_equal(out.depth, brute_projection(pts, RIG, offset))


def test_offset_only_matters_through_parallax(rng):
    pts = np.column_stack([rng.uniform(-5, 5, (400, 2)), np.full(400, 10.0), np.zeros(400)])
    a = project_points(PointCloud(pts), RIG)
    b = project_points(PointCloud(pts), RIG, (0.5, 0.15, 0.0))
    both = a.mask & b.mask
    assert both.any()
    np.testing.assert_array_equal(a.depth[both], b.depth[both])


def test_filter_examples():
    d = np.zeros((9, 9))
    d[4, 4] = 30.0
    assert occlusion_filter(SparseDepthMap(d)).count == 1
    d[4, 5] = 5.0  # a pole in front of a far wall
    out = occlusion_filter(SparseDepthMap(d))
    assert out.mask[4, 5] and not out.mask[4, 4]
    with pytest.raises(DomainError):
        occlusion_filter(SparseDepthMap(d), window=4)
    with pytest.raises(DomainError):
        occlusion_filter(SparseDepthMap(d), rel_tol=-0.1)


@given(arrays(np.float64, (8, 10), elements=st.one_of(st.just(0.0), st.floats(0.5, 80))))
def test_filter_only_removes(depth):
    raw = SparseDepthMap(depth)
    out = occlusion_filter(raw)
    assert np.all(out.mask <= raw.mask)
    np.testing.assert_array_equal(out.depth[out.mask], raw.depth[out.mask])


def test_filter_on_labeled_scene():
    scene = make_scene(default_scene_spec())
    out = occlusion_filter(scene.gt_raw)
    art = scene.artifact_labels
    clean = scene.gt_raw.mask & ~art
    assert art.sum() > 5
    assert (~out.mask[art]).mean() >= 0.9
    assert (~out.mask[clean]).mean() <= 0.02


def test_depth_png_examples():
    s = encode_depth_png(np.array([[1.0, 0.0]]))
    assert s.dtype == np.uint16 and s[0, 0] == 256 and s[0, 1] == 0
    d = decode_depth_png(s)
    assert d.depth[0, 0] == 1.0 and not d.mask[0, 1]
    assert encode_depth_png(SparseDepthMap(np.array([[1e-3]])))[0, 0] == 1
    with pytest.raises(RangeError):
        encode_depth_png(np.array([[300.0]]))
    with pytest.raises(FormatError):
        decode_depth_png(np.zeros((2, 2, 2), dtype=np.uint16))


@given(arrays(np.float64, (6, 7), elements=st.one_of(st.just(0.0), st.floats(0.01, 255.0))))
def test_depth_png_roundtrip_bound(depth):
    back = decode_depth_png(encode_depth_png(depth))
    valid = depth > 0
    np.testing.assert_array_equal(back.mask, valid)
    assert np.all(np.abs(back.depth[valid] - depth[valid]) <= 1 / 512 + 1e-12)


def test_pointcloud_fixtures():
    c = read_pointcloud_bin(bytes(16))
    assert len(c) == 1 and np.all(c.points == 0)
    c = read_pointcloud_bin(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5))
    np.testing.assert_array_equal(c.points, [[1.0, 2.0, 3.0, 0.5]])
    two = struct.pack("<8f", 1.5, -2.25, 30.0, 0.0, 0.0, 0.0, 1.0, 1.0)
    np.testing.assert_array_equal(read_pointcloud_bin(two).points, [[1.5, -2.25, 30.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
    assert read_pointcloud_bin(write_pointcloud_bin(c)).points.tolist() == c.points.tolist()
    with pytest.raises(FormatError):
        read_pointcloud_bin(struct.pack("<4f", np.nan, 0, 0, 0))


@given(st.binary(max_size=200))
def test_pointcloud_fuzz_never_crashes(data):
    try:
        cloud = read_pointcloud_bin(data)
    except FormatError:
        assert len(data) % 16 or not np.all(np.isfinite(np.frombuffer(data, "<f4")))
    else:
        assert len(cloud) == len(data) // 16
