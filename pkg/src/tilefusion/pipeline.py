"""The per-frame fusion loop.

Each depth frame is tracked against the surface rendered from the
previous pose, the tile set is updated to follow the observed endpoints
(dynamic mode only), and every allocated tile is then brought resident,
fused, and rendered in one acquire/release bracket.  The bracket is what
bounds fast-tier memory: a frame touches each tile exactly once, so the
transfer counters directly reflect the schedule.

Tiles evicted by the placement policy are not lost; their surface is
extracted first and kept in an archive that the final cloud includes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .geometry import DepthFrame, Pose
from .tracking import TrackResult, track
from .tsdf import PointCloud, RayMap, extract_points, integrate, raycast
from .volumes import VolumeSet, bin_endpoints, init_grid, update_allocation

STATS_HEADER = [
    "frame",
    "tracked",
    "correspondences",
    "residual_rms",
    "volumes",
    "resident",
    "files_read",
    "files_written",
    "bytes_read",
    "bytes_written",
]


@dataclass(frozen=True)
class FrameRecord:
    frame: int
    tracked: bool
    correspondences: int
    residual_rms: float
    volumes: int
    resident: int
    files_read: int
    files_written: int
    bytes_read: int
    bytes_written: int

    def as_row(self) -> list:
        return [
            self.frame,
            self.tracked,
            self.correspondences,
            self.residual_rms,
            self.volumes,
            self.resident,
            self.files_read,
            self.files_written,
            self.bytes_read,
            self.bytes_written,
        ]


@dataclass(frozen=True)
class FusionResult:
    poses: list[Pose]
    records: list[FrameRecord]
    cloud: PointCloud
    lost_frames: int


class FusionPipeline:
    """Stateful frame loop; drive it with ``step`` or use ``run_fusion``."""

    def __init__(self, config: RunConfig, spill_dir) -> None:
        errors = config.validate()
        if errors:
            raise ValueError("invalid config:\n  " + "\n  ".join(errors))
        self.config = config
        self.intr = config.intrinsics()
        if config.dynamic:
            self.spacing = config.block_voxels - 2
            self.voxel_size = config.block_side_length / self.spacing
            voxels_per_side = config.block_voxels
            keys = ()
        else:
            spec = init_grid(
                config.side_length, config.resolution, config.resident_resolution
            )
            self.spacing = spec.spacing
            self.voxel_size = spec.voxel_size
            voxels_per_side = spec.voxels_per_side
            keys = spec.keys
        self.params = config.fusion_params(self.voxel_size)
        self.volumes = VolumeSet(
            self.params,
            voxels_per_side=voxels_per_side,
            voxel_size=self.voxel_size,
            max_resident=config.max_resident,
            spill_dir=spill_dir,
        )
        for key in keys:
            self.volumes.add(key)
        self.policy = config.allocation_policy()
        self.tracking_params = config.tracking_params()
        self.poses: list[Pose] = []
        self.records: list[FrameRecord] = []
        self.lost_frames = 0
        self._archive: list[PointCloud] = []
        self._model: RayMap | None = None
        self._model_pose: Pose | None = None

    def step(self, frame: DepthFrame, gt_pose: Pose | None = None) -> FrameRecord:
        """Process one frame; returns its stats record."""
        index = len(self.poses)
        reads0 = self.volumes.files_read
        writes0 = self.volumes.files_written
        bytes_r0 = self.volumes.bytes_read
        bytes_w0 = self.volumes.bytes_written

        pose, result = self._track(frame, gt_pose)
        if self.config.dynamic:
            self._update_placement(frame, pose)

        raymap = RayMap.empty(self.intr)
        for key in self.volumes.keys():
            vol = self.volumes.acquire(key)
            integrate(vol, frame, pose, self.intr, self.params)
            raycast(vol, pose, self.intr, raymap, self.params)
            self.volumes.release(key)
        self._model = raymap
        self._model_pose = pose

        self.poses.append(pose)
        record = FrameRecord(
            frame=index,
            tracked=result is None or not result.lost,
            correspondences=0 if result is None else result.correspondences,
            residual_rms=float("nan") if result is None else result.residual_rms,
            volumes=len(self.volumes),
            resident=self.volumes.resident_count,
            files_read=self.volumes.files_read - reads0,
            files_written=self.volumes.files_written - writes0,
            bytes_read=self.volumes.bytes_read - bytes_r0,
            bytes_written=self.volumes.bytes_written - bytes_w0,
        )
        self.records.append(record)
        if result is not None and result.lost:
            self.lost_frames += 1
        return record

    def _track(self, frame, gt_pose) -> tuple[Pose, TrackResult | None]:
        if self.config.use_groundtruth:
            if gt_pose is None:
                raise ValueError("use_groundtruth is set but no pose was given")
            return gt_pose, None
        if self._model is None:
            # nothing fused yet; the first camera defines the world frame
            return (gt_pose if gt_pose is not None else Pose.identity()), None
        result = track(
            frame,
            self.intr,
            self._model,
            self._model_pose,
            self.tracking_params,
        )
        if result.lost:
            return self._model_pose, result
        return result.pose, result

    def _update_placement(self, frame, pose) -> None:
        counts = bin_endpoints(frame, self.intr, pose, self.spacing, self.voxel_size)
        added, removed = update_allocation(self.volumes.keys(), counts, self.policy)
        for key in removed:
            vol = self.volumes.remove(key)
            cloud = extract_points(vol)
            if len(cloud):
                self._archive.append(cloud)
        for key in added:
            self.volumes.add(key)

    def extract_cloud(self) -> PointCloud:
        """Surface points from every tile, archived tiles included."""
        clouds = list(self._archive)
        for key in self.volumes.keys():
            vol = self.volumes.acquire(key)
            cloud = extract_points(vol)
            self.volumes.release(key)
            if len(cloud):
                clouds.append(cloud)
        if not clouds:
            return PointCloud.empty()
        return PointCloud.concatenate(clouds)

    def finish(self) -> FusionResult:
        return FusionResult(
            poses=list(self.poses),
            records=list(self.records),
            cloud=self.extract_cloud(),
            lost_frames=self.lost_frames,
        )


def run_fusion(
    frames,
    config: RunConfig,
    spill_dir,
    gt_poses=None,
) -> FusionResult:
    """Fuse a whole sequence. ``frames`` is any iterable of DepthFrame."""
    pipeline = FusionPipeline(config, spill_dir)
    for i, frame in enumerate(frames):
        gt = None if gt_poses is None else gt_poses[i]
        pipeline.step(frame, gt)
    return pipeline.finish()
