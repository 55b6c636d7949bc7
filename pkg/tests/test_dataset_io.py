"""On-disk formats: 16-bit depth PNGs, sequence folders, PLY, stats CSV."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilefusion import DepthFrame, Pose
from tilefusion.dataset_io import (
    DEPTH_SCALE,
    load_ply,
    load_sequence,
    read_depth_png,
    read_stats_csv,
    save_ply,
    save_sequence,
    write_depth_png,
    write_stats_csv,
)
from tilefusion.geometry import rotation_from_axis_angle
from tilefusion.synth import orbit_trajectory


def test_depth_png_roundtrip_quantizes(tmp_path):
    depth = np.array([[0.0, 1.5, 2.0001], [0.12345, 13.1, 0.0002]])
    path = tmp_path / "d.png"
    write_depth_png(path, depth)
    back = read_depth_png(path)
    assert back.dtype == np.float32
    # 16-bit at 1/5000 m steps: half a step, plus f32 spacing at 13 m
    assert np.abs(back - depth).max() <= 0.5 / DEPTH_SCALE + 2e-6
    assert back[0, 0] == 0.0


def test_depth_png_exact_at_grid_values(tmp_path):
    depth = np.arange(12, dtype=np.float64).reshape(3, 4) / DEPTH_SCALE * 7
    path = tmp_path / "d.png"
    write_depth_png(path, depth)
    assert np.array_equal(read_depth_png(path), depth.astype(np.float32))


def test_depth_png_range_check(tmp_path):
    with pytest.raises(ValueError):
        write_depth_png(tmp_path / "far.png", np.array([[14.0]]))  # > 65535/5000
    with pytest.raises(ValueError):
        write_depth_png(tmp_path / "neg.png", np.array([[-0.1]]))


@settings(max_examples=25, deadline=None)
@given(
    counts=st.lists(st.integers(min_value=0, max_value=65535), min_size=6, max_size=6)
)
def test_depth_png_counts_roundtrip(tmp_path_factory, counts):
    depth = np.array(counts, dtype=np.float64).reshape(2, 3) / DEPTH_SCALE
    path = tmp_path_factory.mktemp("png") / "d.png"
    write_depth_png(path, depth)
    assert np.array_equal(read_depth_png(path), depth.astype(np.float32))


def test_sequence_roundtrip_with_poses(tmp_path):
    rng = np.random.default_rng(5)
    frames = [DepthFrame(rng.uniform(0.5, 3.0, size=(6, 8)).round(3)) for _ in range(3)]
    poses = orbit_trajectory(np.array([0.0, 0.0, 2.0]), 2.0, 3)
    save_sequence(tmp_path, frames, poses=poses, fps=10.0)

    seq = load_sequence(tmp_path)
    assert len(seq) == 3
    assert seq.has_poses
    for i in range(3):
        frame = seq.read_frame(i)
        assert np.abs(frame.data - frames[i].data).max() <= 0.5 / DEPTH_SCALE + 1e-9
        pose = seq.entries[i].pose
        assert np.allclose(pose.rotation, poses[i].rotation, atol=1e-12)
        assert np.allclose(pose.translation, poses[i].translation, atol=1e-12)


def test_sequence_without_trajectory(tmp_path):
    save_sequence(tmp_path, [DepthFrame(np.full((4, 4), 1.0))])
    seq = load_sequence(tmp_path)
    assert not seq.has_poses
    assert seq.entries[0].pose is None


def test_sequence_pose_association_respects_gap(tmp_path):
    save_sequence(tmp_path, [DepthFrame(np.full((4, 4), 1.0))], fps=30.0)
    # a trajectory sample 0.5 s away from the frame stamp must not attach
    pose = Pose(rotation_from_axis_angle(np.array([0.0, 0.0, 1.0]), 0.3), np.zeros(3))
    tx, ty, tz = pose.translation
    qx, qy, qz, qw = pose.quaternion()
    (tmp_path / "groundtruth.txt").write_text(
        f"0.500000 {tx} {ty} {tz} {qx} {qy} {qz} {qw}\n"
    )
    seq = load_sequence(tmp_path)
    assert seq.entries[0].pose is None
    assert load_sequence(tmp_path, max_gap=1.0).entries[0].pose is not None


def test_sequence_requires_increasing_stamps(tmp_path):
    (tmp_path / "depth").mkdir()
    write_depth_png(tmp_path / "depth" / "a.png", np.full((2, 2), 1.0))
    (tmp_path / "depth.txt").write_text(
        "1.0 depth/a.png\n0.5 depth/a.png\n"
    )
    with pytest.raises(ValueError, match="increasing"):
        load_sequence(tmp_path)


def test_ply_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(11)
    points = rng.normal(size=(17, 3)).astype(np.float32).astype(np.float64)
    normals = rng.normal(size=(17, 3)).astype(np.float32).astype(np.float64)
    path = tmp_path / "cloud.ply"
    save_ply(path, points, normals)
    back_p, back_n = load_ply(path)
    assert np.array_equal(back_p, points.astype(np.float32))
    assert np.array_equal(back_n, normals.astype(np.float32))


def test_ply_without_normals(tmp_path):
    path = tmp_path / "bare.ply"
    save_ply(path, np.zeros((4, 3)))
    points, normals = load_ply(path)
    assert len(points) == 4
    assert normals is None


def test_ply_rejects_foreign_format(tmp_path):
    path = tmp_path / "ascii.ply"
    path.write_text("ply\nformat ascii 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(ValueError):
        load_ply(path)


def test_stats_csv_roundtrip(tmp_path):
    header = ["frame", "tracked", "rms"]
    rows = [[0, True, 0.00125], [1, False, 2.5]]
    path = tmp_path / "stats.csv"
    write_stats_csv(path, header, rows)
    back_header, back_rows = read_stats_csv(path)
    assert back_header == header
    assert back_rows[0] == [0.0, 1.0, 0.00125]
    assert back_rows[1] == [1.0, 0.0, 2.5]
