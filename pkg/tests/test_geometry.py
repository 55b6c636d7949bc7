"""Camera model, rigid transforms, and depth-map geometry."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilefusion import CameraIntrinsics, DepthFrame, OutOfFrustumError, Pose, VertexNormalMap
from tilefusion.geometry import (
    compute_normals,
    depth_to_vertices,
    project,
    rotation_angle,
    rotation_from_axis_angle,
    unproject,
)

finite_angle = st.floats(min_value=-np.pi, max_value=np.pi)
unit_axis = st.sampled_from(
    [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (0.6, 0.8, 0.0), (0.0, -0.6, 0.8)]
)
translation = st.tuples(
    st.floats(min_value=-5, max_value=5),
    st.floats(min_value=-5, max_value=5),
    st.floats(min_value=-5, max_value=5),
)


def make_pose(axis, angle, t):
    return Pose(rotation_from_axis_angle(np.array(axis), angle), np.array(t, dtype=np.float64))


def test_intrinsics_rejects_bad_focal():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=0.0, fy=100.0, cx=40.0, cy=30.0, width=80, height=60)


def test_intrinsics_scaled_halves_everything(small_intr):
    half = small_intr.scaled(0.5)
    assert half.fx == 50.0 and half.fy == 50.0
    assert half.cx == 20.0 and half.cy == 15.0
    assert (half.width, half.height) == (40, 30)


def test_unproject_oracle(small_intr):
    # x = (u - cx) / fx * d = (60 - 40) / 100 * 2 = 0.4, y likewise 0.3
    p = unproject(small_intr, 60.0, 45.0, 2.0)
    assert np.allclose(p, [0.4, 0.3, 2.0])


def test_project_center(small_intr):
    u, v = project(small_intr, np.array([0.0, 0.0, 1.7]))
    assert (u, v) == (40.0, 30.0)


def test_project_behind_camera_raises(small_intr):
    with pytest.raises(OutOfFrustumError):
        project(small_intr, np.array([0.0, 0.0, -1.0]))


@given(
    u=st.floats(min_value=0, max_value=79),
    v=st.floats(min_value=0, max_value=59),
    d=st.floats(min_value=0.1, max_value=10.0),
)
def test_project_unproject_roundtrip(u, v, d):
    intr = CameraIntrinsics(fx=100.0, fy=100.0, cx=40.0, cy=30.0, width=80, height=60)
    point = unproject(intr, u, v, d)
    uu, vv = project(intr, point)
    assert uu == pytest.approx(u, abs=1e-9)
    assert vv == pytest.approx(v, abs=1e-9)


def test_pixel_rays_center_and_shape(small_intr):
    rays = small_intr.pixel_rays()
    assert rays.shape == (60, 80, 3)
    assert np.allclose(rays[30, 40], [0.0, 0.0, 1.0])
    assert np.allclose(rays[30, 50], [0.1, 0.0, 1.0])


def test_quarter_turn_about_z():
    r = rotation_from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(r, expected, atol=1e-15)


def test_zero_angle_is_identity():
    r = rotation_from_axis_angle(np.array([0.0, 0.0, 0.0]), 0.0)
    assert np.allclose(r, np.eye(3))


@given(axis=unit_axis, angle=st.floats(min_value=1e-6, max_value=np.pi - 1e-6))
def test_rotation_angle_recovers_magnitude(axis, angle):
    r = rotation_from_axis_angle(np.array(axis), angle)
    assert rotation_angle(r) == pytest.approx(angle, abs=1e-9)


@given(axis=unit_axis, angle=finite_angle, t=translation)
def test_pose_compose_invert_is_identity(axis, angle, t):
    pose = make_pose(axis, angle, t)
    round_trip = pose.compose(pose.invert())
    assert np.allclose(round_trip.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(round_trip.translation, 0.0, atol=1e-12)


@given(axis=unit_axis, angle=finite_angle, t=translation)
def test_transform_points_matches_matrix(axis, angle, t):
    pose = make_pose(axis, angle, t)
    pts = np.array([[0.3, -0.2, 1.1], [0.0, 0.0, 0.0], [-1.0, 2.0, 0.5]])
    direct = pts @ pose.rotation.T + pose.translation
    assert np.allclose(pose.transform_points(pts), direct)


def test_quaternion_oracle_quarter_turn():
    pose = make_pose((0.0, 0.0, 1.0), np.pi / 2, (1.0, 2.0, 3.0))
    tx, ty, tz, qx, qy, qz, qw = (1.0, 2.0, 3.0) + pose.quaternion()
    # sin(45 deg) = cos(45 deg) = 0.7071067811865476
    assert (qx, qy) == (0.0, 0.0)
    assert qz == pytest.approx(0.7071067811865476, abs=1e-12)
    assert qw == pytest.approx(0.7071067811865476, abs=1e-12)


@given(axis=unit_axis, angle=finite_angle, t=translation)
def test_quaternion_roundtrip(axis, angle, t):
    pose = make_pose(axis, angle, t)
    qx, qy, qz, qw = pose.quaternion()
    assert qw >= 0.0
    back = Pose.from_quaternion(*t, qx, qy, qz, qw)
    assert np.allclose(back.rotation, pose.rotation, atol=1e-9)
    assert np.allclose(back.translation, pose.translation, atol=1e-12)


def test_orthonormalized_repairs_drift():
    # drift must stay inside the constructor's 1e-7 orthonormality gate
    r = rotation_from_axis_angle(np.array([0.6, 0.8, 0.0]), 0.7)
    dirty = Pose(r + 3e-9 * np.arange(9).reshape(3, 3), np.zeros(3))
    residual = np.abs(dirty.rotation.T @ dirty.rotation - np.eye(3)).max()
    clean = dirty.orthonormalized()
    cleaned = np.abs(clean.rotation.T @ clean.rotation - np.eye(3)).max()
    assert cleaned < 1e-13 < residual
    assert np.linalg.det(clean.rotation) == pytest.approx(1.0, abs=1e-12)


def test_pose_rejects_sheared_rotation():
    with pytest.raises(ValueError):
        Pose(np.eye(3) + 1e-3, np.zeros(3))


def test_depth_frame_validity_and_downsample():
    data = np.arange(24, dtype=np.float64).reshape(4, 6)
    data[0, 0] = 0.0
    frame = DepthFrame(data)
    assert not frame.valid[0, 0] and frame.valid[1, 1]
    half = frame.downsampled()
    assert half.data.shape == (2, 3)
    assert half.data[1, 1] == data[2, 2]


def test_depth_to_vertices_matches_unproject(small_intr):
    depth = np.full((60, 80), 2.0)
    depth[10, 10] = 0.0
    vertices, ok = depth_to_vertices(small_intr, depth)
    assert not ok[10, 10]
    assert np.allclose(vertices[30, 60], unproject(small_intr, 60.0, 30.0, 2.0))


def test_flat_wall_normals_face_camera(small_intr):
    depth = np.full((60, 80), 2.0)
    vertices, ok = depth_to_vertices(small_intr, depth)
    normals, nok = compute_normals(vertices, ok)
    inner = nok[:-1, :-1]
    assert inner.all()
    assert np.allclose(normals[:-1, :-1], [0.0, 0.0, -1.0], atol=1e-12)


def test_vertex_normal_map_from_depth(small_intr):
    depth = np.full((60, 80), 1.5)
    depth[:, 40:] = 0.0
    vmap = VertexNormalMap.from_depth(small_intr, DepthFrame(depth))
    assert not vmap.valid[:, 40:].any()
    lengths = np.linalg.norm(vmap.normals[vmap.valid], axis=-1)
    assert np.allclose(lengths, 1.0)


def test_vertex_normal_map_transform_rotates_normals(small_intr):
    depth = np.full((60, 80), 1.5)
    vmap = VertexNormalMap.from_depth(small_intr, DepthFrame(depth))
    pose = make_pose((0.0, 1.0, 0.0), np.pi / 2, (0.0, 0.0, 0.0))
    moved = vmap.transformed(pose)
    # wall normal (0,0,-1) swings onto -x under a quarter turn about y
    assert np.allclose(moved.normals[10, 10], [-1.0, 0.0, 0.0], atol=1e-12)
