"""Depth fusion over many small, streamed TSDF subvolumes.

The package fuses depth-frame sequences into a signed-distance field
that is tiled into equal subvolumes on one shared voxel lattice.  Only a
bounded resident set of tiles is held in fast memory; the rest spill to
disk.  The tiling is constructed so that fusing and rendering through
the tiles reproduces a single large volume, which `evaluation` can
verify directly.
"""

from .config import RunConfig, load_config, save_config
from .geometry import (
    CameraIntrinsics,
    DepthFrame,
    OutOfFrustumError,
    Pose,
    VertexNormalMap,
)
from .pipeline import FrameRecord, FusionPipeline, FusionResult, run_fusion
from .synth import Box, NoiseModel, Plane, Scene, Sphere, corridor_trajectory, load_scene, orbit_trajectory, save_scene
from .tracking import TrackingParams, TrackResult, track
from .tsdf import (
    FusionParams,
    PointCloud,
    RayMap,
    TsdfSubvolume,
    extract_points,
    integrate,
    raycast,
    trilinear_sample,
)
from .volumes import (
    AllocationPolicy,
    GridSpec,
    VolumeSet,
    bin_endpoints,
    init_grid,
    load_subvolume,
    save_subvolume,
    update_allocation,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationPolicy",
    "Box",
    "CameraIntrinsics",
    "DepthFrame",
    "FrameRecord",
    "FusionParams",
    "FusionPipeline",
    "FusionResult",
    "GridSpec",
    "NoiseModel",
    "OutOfFrustumError",
    "Plane",
    "PointCloud",
    "Pose",
    "RayMap",
    "RunConfig",
    "Scene",
    "Sphere",
    "TrackResult",
    "TrackingParams",
    "TsdfSubvolume",
    "VertexNormalMap",
    "VolumeSet",
    "bin_endpoints",
    "corridor_trajectory",
    "extract_points",
    "init_grid",
    "integrate",
    "load_config",
    "load_scene",
    "load_subvolume",
    "orbit_trajectory",
    "raycast",
    "run_fusion",
    "save_config",
    "save_scene",
    "save_subvolume",
    "track",
    "trilinear_sample",
    "update_allocation",
]
