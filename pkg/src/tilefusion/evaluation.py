"""Measurements the design claims are judged by.

Three claims matter: a tiling of small subvolumes reproduces the single
large volume, integration cost grows linearly with the number of tiles
touched, and a bounded resident set buys a larger addressable lattice
for the same fast-tier bytes.  The helpers here quantify each one, plus
surface accuracy of extracted point clouds against the synthetic scene
that generated the data.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, Pose
from .synth import Scene, Sphere, orbit_trajectory
from .tsdf import FusionParams, RayMap, TsdfSubvolume, integrate, raycast
from .volumes import init_grid

DEFAULT_INTRINSICS = CameraIntrinsics(
    fx=131.25, fy=131.25, cx=80.0, cy=60.0, width=160, height=120
)


@dataclass(frozen=True)
class SurfaceStats:
    """Unsigned point-to-surface distance statistics, in meters."""

    count: int
    mean: float
    rms: float
    std: float
    max: float


def cloud_to_surface_stats(points: np.ndarray, scene: Scene) -> SurfaceStats:
    """Distance statistics of a point set against the true scene surface.

    Population statistics: std is computed with ddof=0.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] == 0:
        return SurfaceStats(count=0, mean=float("nan"), rms=float("nan"),
                            std=float("nan"), max=float("nan"))
    d = np.abs(scene.signed_distance(points))
    return SurfaceStats(
        count=int(d.size),
        mean=float(d.mean()),
        rms=float(np.sqrt(np.mean(d * d))),
        std=float(d.std(ddof=0)),
        max=float(d.max()),
    )


def resolution_ratio(resolution: int, resident_resolution: int) -> float:
    """Addressable-voxel gain of tiling over one resident-sized volume.

    Both configurations spend the same fast-tier bytes (one tile); the
    tiled lattice spans resolution + 2 voxels per axis while the single
    volume spans resident_resolution + 2.  The two-voxel overlap is why
    the gain falls short of the cube of the resolution quotient.
    """
    if resident_resolution > resolution:
        raise ValueError("resident_resolution cannot exceed resolution")
    return float((resolution + 2) ** 3) / float((resident_resolution + 2) ** 3)


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line fit. Returns (slope, intercept, r_squared)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least two points")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


@dataclass(frozen=True)
class BenchResult:
    volume_counts: tuple[int, ...]
    seconds_per_frame: tuple[float, ...]
    slope: float
    intercept: float
    r_squared: float


def _tile_dims(count: int) -> tuple[int, int, int]:
    dims = [1, 1, 1]
    axis = 0
    while dims[0] * dims[1] * dims[2] < count:
        dims[axis] *= 2
        axis = (axis + 1) % 3
    if dims[0] * dims[1] * dims[2] != count:
        raise ValueError(f"volume count {count} is not a power of two")
    return dims[0], dims[1], dims[2]


def runtime_bench(
    volume_counts: tuple[int, ...] = (1, 2, 4, 8),
    frames: int = 5,
    voxels_per_side: int = 64,
    voxel_size: float = 3.0 / 124.0,
    intr: CameraIntrinsics = DEFAULT_INTRINSICS,
) -> BenchResult:
    """Time per-frame integration against the number of tiles touched.

    Every configuration uses identical tiles, so the per-frame cost model
    is linear in the count; the first frame is discarded because it pays
    one-time compilation.  Returns the measured points and the line fit.
    """
    if frames < 3:
        raise ValueError("need at least 3 frames, the first is discarded")
    spacing = voxels_per_side - 2
    scene = Scene((Sphere(np.array([0.0, 0.0, 1.5]), 0.5),))
    poses = orbit_trajectory(np.array([0.0, 0.0, 1.5]), 1.5, frames)
    params = FusionParams.for_voxel_size(voxel_size)
    times = []
    for count in volume_counts:
        nx, ny, nz = _tile_dims(count)
        corner = np.array(
            [
                -((nx * spacing + 2) // 2),
                -((ny * spacing + 2) // 2),
                0,
            ],
            dtype=np.int64,
        )
        vols = []
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    origin = corner + np.array([i, j, k], dtype=np.int64) * spacing
                    vols.append(
                        TsdfSubvolume.empty(
                            origin, voxels_per_side, voxels_per_side * voxel_size
                        )
                    )
        per_frame = []
        for idx, pose in enumerate(poses):
            frame = scene.render_depth(pose, intr)
            start = time.perf_counter()
            for vol in vols:
                integrate(vol, frame, pose, intr, params)
            per_frame.append(time.perf_counter() - start)
        times.append(float(np.mean(per_frame[1:])))
    slope, intercept, r2 = linear_fit(volume_counts, times)
    return BenchResult(
        volume_counts=tuple(volume_counts),
        seconds_per_frame=tuple(times),
        slope=slope,
        intercept=intercept,
        r_squared=r2,
    )


@dataclass(frozen=True)
class EquivalenceReport:
    frames: int
    rays_checked: int
    valid_mismatches: int
    max_distance_diff: float
    max_vertex_diff: float
    max_tsdf_diff: float
    max_weight_diff: float


def equivalence_check(
    side_length: float = 3.0,
    resolution: int = 124,
    resident_resolution: int = 62,
    frames: int = 20,
    intr: CameraIntrinsics = DEFAULT_INTRINSICS,
    scene: Scene | None = None,
    poses: list[Pose] | None = None,
) -> EquivalenceReport:
    """Fuse and raycast the same stream into one volume and into a tiling.

    The single-volume reference is the degenerate grid with
    resident_resolution == resolution.  Differences are taken per frame
    over the rendered views and at the end over every overlapping voxel.
    """
    if scene is None:
        scene = Scene((Sphere(np.array([0.0, 0.0, side_length / 2.0]), 0.5),))
    if poses is None:
        center = np.array([0.0, 0.0, side_length / 2.0])
        poses = orbit_trajectory(center, side_length / 2.0, frames)
    if len(poses) != frames:
        raise ValueError("poses length must match frames")

    single_spec = init_grid(side_length, resolution, resolution)
    tiled_spec = init_grid(side_length, resolution, resident_resolution)
    params = FusionParams.for_voxel_size(single_spec.voxel_size)

    def build(spec):
        return [
            TsdfSubvolume.empty(
                np.array(k, dtype=np.int64),
                spec.voxels_per_side,
                spec.subvolume_side_length,
            )
            for k in spec.keys
        ]

    single = build(single_spec)
    tiled = build(tiled_spec)

    rays = 0
    mismatches = 0
    max_dist = 0.0
    max_vert = 0.0
    for pose in poses:
        frame = scene.render_depth(pose, intr)
        for vol in single + tiled:
            integrate(vol, frame, pose, intr, params)
        map_s = RayMap.empty(intr)
        for vol in single:
            raycast(vol, pose, intr, map_s, params)
        map_t = RayMap.empty(intr)
        for vol in tiled:
            raycast(vol, pose, intr, map_t, params)
        vs, vt = map_s.valid, map_t.valid
        rays += vs.size
        mismatches += int(np.count_nonzero(vs != vt))
        both = vs & vt
        if np.any(both):
            dd = np.abs(map_s.distance[both] - map_t.distance[both])
            max_dist = max(max_dist, float(dd.max()))
            dv = np.abs(map_s.vertices[both] - map_t.vertices[both])
            max_vert = max(max_vert, float(dv.max()))

    # A non-divisible tiling covers more voxels than the reference; compare
    # only the intersection.
    ref = single[0]
    ref_origin = np.array(single_spec.keys[0], dtype=np.int64)
    ref_n = single_spec.voxels_per_side
    max_tsdf = 0.0
    max_weight = 0.0
    for vol in tiled:
        lo = vol.origin_voxel - ref_origin
        hi = lo + vol.voxels_per_side
        clo = np.maximum(lo, 0)
        chi = np.minimum(hi, ref_n)
        if np.any(chi <= clo):
            continue
        slo = clo - lo
        shi = chi - lo
        ref_ix = (slice(clo[2], chi[2]), slice(clo[1], chi[1]), slice(clo[0], chi[0]))
        vol_ix = (slice(slo[2], shi[2]), slice(slo[1], shi[1]), slice(slo[0], shi[0]))
        sub_t = ref.tsdf[ref_ix]
        sub_w = ref.weight[ref_ix]
        max_tsdf = max(max_tsdf, float(np.abs(sub_t - vol.tsdf[vol_ix]).max()))
        max_weight = max(max_weight, float(np.abs(sub_w - vol.weight[vol_ix]).max()))

    return EquivalenceReport(
        frames=frames,
        rays_checked=rays,
        valid_mismatches=mismatches,
        max_distance_diff=max_dist,
        max_vertex_diff=max_vert,
        max_tsdf_diff=max_tsdf,
        max_weight_diff=max_weight,
    )
