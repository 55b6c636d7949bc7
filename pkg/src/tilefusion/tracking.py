"""Frame-to-model camera tracking.

Each new depth frame is aligned against the surface prediction rendered
from the previous camera pose (a world-space vertex/normal map).  The
alignment is projective point-to-plane ICP: frame points are moved by the
current pose estimate, projected into the reference view to pick a model
point, and the pose update minimizes the point-to-plane error of the
accepted pairs.  A coarse-to-fine pyramid keeps the basin of attraction
wide without paying full resolution for every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    CameraIntrinsics,
    DepthFrame,
    Pose,
    VertexNormalMap,
    rotation_from_axis_angle,
)
from .tsdf import RayMap


@dataclass(frozen=True)
class TrackingParams:
    """Knobs for projective point-to-plane ICP.

    ``iterations`` is indexed by pyramid level (0 = full resolution); the
    levels run coarsest first.  ``min_correspondences`` applies at full
    resolution and is divided by 4 per level above it.
    """

    max_distance: float = 0.10
    max_angle_deg: float = 20.0
    iterations: tuple[int, ...] = (10, 5, 4)
    min_correspondences: int = 1000
    step_eps: float = 1.0e-10

    def __post_init__(self) -> None:
        if self.max_distance <= 0.0:
            raise ValueError("max_distance must be positive")
        if not 0.0 < self.max_angle_deg < 90.0:
            raise ValueError("max_angle_deg must be in (0, 90)")
        if len(self.iterations) == 0 or any(i < 1 for i in self.iterations):
            raise ValueError("iterations must be a non-empty tuple of >= 1")
        if self.min_correspondences < 6:
            raise ValueError("min_correspondences must be at least 6")


@dataclass(frozen=True)
class TrackResult:
    pose: Pose
    lost: bool
    correspondences: int
    residual_rms: float


def _solve_step(
    src_pts: np.ndarray,
    src_nrm: np.ndarray,
    src_valid: np.ndarray,
    model_pts: np.ndarray,
    model_nrm: np.ndarray,
    model_valid: np.ndarray,
    estimate: Pose,
    ref_inv: Pose,
    intr: CameraIntrinsics,
    params: TrackingParams,
    min_pairs: int,
):
    """One linearized update. Returns (delta, count, rms) or None if lost."""
    p_w = estimate.transform_points(src_pts.reshape(-1, 3)).reshape(src_pts.shape)
    n_w = src_nrm.reshape(-1, 3) @ estimate.rotation.T
    n_w = n_w.reshape(src_nrm.shape)

    p_ref = ref_inv.transform_points(p_w.reshape(-1, 3)).reshape(p_w.shape)
    z = p_ref[..., 2]
    ok = src_valid & (z > 1.0e-9)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(ok, intr.fx * p_ref[..., 0] / z + intr.cx, -1.0)
        v = np.where(ok, intr.fy * p_ref[..., 1] / z + intr.cy, -1.0)
    ui = np.floor(u + 0.5).astype(np.int64)
    vi = np.floor(v + 0.5).astype(np.int64)
    ok &= (ui >= 0) & (ui < intr.width) & (vi >= 0) & (vi < intr.height)
    ui = np.where(ok, ui, 0)
    vi = np.where(ok, vi, 0)
    ok &= model_valid[vi, ui]

    q = model_pts[vi, ui]
    n = model_nrm[vi, ui]
    diff = p_w - q
    ok &= np.einsum("...i,...i->...", diff, diff) <= params.max_distance**2
    cos_min = np.cos(np.deg2rad(params.max_angle_deg))
    ok &= np.einsum("...i,...i->...", n, n_w) >= cos_min

    count = int(np.count_nonzero(ok))
    if count < min_pairs:
        return None
    p_sel = p_w[ok]
    n_sel = n[ok]
    r = np.einsum("ij,ij->i", n_sel, q[ok] - p_sel)
    a = np.concatenate([np.cross(p_sel, n_sel), n_sel], axis=1)
    ata = a.T @ a
    atb = a.T @ r
    # degenerate geometry (a lone plane or sphere) leaves unobservable
    # motion components; treat the frame as lost instead of guessing
    if np.linalg.cond(ata) > 1.0e12:
        return None
    try:
        delta = np.linalg.solve(ata, atb)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(delta)):
        return None
    rms = float(np.sqrt(np.mean(r * r)))
    return delta, count, rms


def track(
    frame: DepthFrame,
    intr: CameraIntrinsics,
    model: RayMap,
    ref_pose: Pose,
    params: TrackingParams = TrackingParams(),
    init: Pose | None = None,
) -> TrackResult:
    """Align a depth frame against a rendered model view.

    ``model`` holds world-space vertices and normals as seen from
    ``ref_pose``; ``init`` seeds the estimate (defaults to ``ref_pose``).
    Returns the refined camera-to-world pose, or the seed flagged lost
    when too few pairs survive the gates or the normal system is
    degenerate.
    """
    levels = len(params.iterations)
    frames = [frame]
    intrs = [intr]
    models = [model]
    for _ in range(levels - 1):
        frames.append(frames[-1].downsampled())
        intrs.append(intrs[-1].scaled(0.5))
        models.append(models[-1].downsampled())
    maps = [VertexNormalMap.from_depth(i, f) for f, i in zip(frames, intrs)]

    ref_inv = ref_pose.invert()
    estimate = init if init is not None else ref_pose
    lost = False
    count = 0
    rms = float("inf")
    for level in range(levels - 1, -1, -1):
        vmap = maps[level]
        mdl = models[level]
        model_valid = mdl.valid
        src_valid = vmap.valid & np.all(np.isfinite(vmap.normals), axis=-1)
        min_pairs = max(6, params.min_correspondences // 4**level)
        for _ in range(params.iterations[level]):
            step = _solve_step(
                vmap.vertices,
                vmap.normals,
                src_valid,
                mdl.vertices,
                mdl.normals,
                model_valid,
                estimate,
                ref_inv,
                intrs[level],
                params,
                min_pairs,
            )
            if step is None:
                lost = True
                break
            delta, count, rms = step
            rot = rotation_from_axis_angle(delta[:3], float(np.linalg.norm(delta[:3])))
            estimate = Pose(
                rot @ estimate.rotation, rot @ estimate.translation + delta[3:]
            ).orthonormalized()
            if float(np.linalg.norm(delta)) < params.step_eps:
                break
        if lost:
            break

    if lost:
        return TrackResult(
            pose=init if init is not None else ref_pose,
            lost=True,
            correspondences=count,
            residual_rms=rms,
        )
    return TrackResult(
        pose=estimate, lost=False, correspondences=count, residual_rms=rms
    )
