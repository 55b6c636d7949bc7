"""Metrics and study helpers."""

import numpy as np
import pytest

from tilefusion import Scene, Sphere
from tilefusion.evaluation import (
    DEFAULT_INTRINSICS,
    cloud_to_surface_stats,
    equivalence_check,
    linear_fit,
    resolution_ratio,
)


def test_default_camera_shape():
    assert (DEFAULT_INTRINSICS.width, DEFAULT_INTRINSICS.height) == (160, 120)


def test_resolution_ratio_oracle():
    # (124 + 2)^3 voxels against (62 + 2)^3: 2000376 / 262144
    assert resolution_ratio(124, 62) == pytest.approx(7.63083, abs=1e-4)
    assert resolution_ratio(62, 62) == 1.0


def test_linear_fit_exact_line():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    slope, intercept, r2 = linear_fit(x, 3.0 * x + 2.0)
    assert slope == pytest.approx(3.0)
    assert intercept == pytest.approx(2.0)
    assert r2 == pytest.approx(1.0)


def test_linear_fit_reports_scatter():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([0.0, 1.0, 0.0, 1.0])
    _, _, r2 = linear_fit(x, y)
    assert r2 < 0.5


def test_cloud_stats_oracle():
    scene = Scene((Sphere(np.array([0.0, 0.0, 2.0]), 0.5),))
    points = np.array([[0.0, 0.0, 1.4], [0.0, 0.0, 1.5], [0.0, 0.0, 2.7]])
    stats = cloud_to_surface_stats(points, scene)
    # |signed distances| are 0.1, 0, 0.2
    assert stats.count == 3
    assert stats.mean == pytest.approx(0.1, abs=1e-12)
    assert stats.rms == pytest.approx(0.12909944, abs=1e-7)
    assert stats.std == pytest.approx(0.08164966, abs=1e-7)
    assert stats.max == pytest.approx(0.2, abs=1e-12)


def test_cloud_stats_empty():
    scene = Scene((Sphere(np.array([0.0, 0.0, 2.0]), 0.5),))
    stats = cloud_to_surface_stats(np.zeros((0, 3)), scene)
    assert stats.count == 0


def test_small_tiling_reproduces_single_volume():
    report = equivalence_check(
        side_length=1.8, resolution=28, resident_resolution=14, frames=3
    )
    assert report.valid_mismatches == 0
    assert report.max_tsdf_diff == 0.0
    assert report.max_weight_diff == 0.0
    assert report.max_distance_diff < 1e-9
    assert report.rays_checked == 3 * 160 * 120


def test_equivalence_check_rejects_bad_pose_count():
    with pytest.raises(ValueError):
        equivalence_check(frames=4, poses=[])
