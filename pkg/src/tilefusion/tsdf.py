"""Truncated signed distance subvolumes: fusion, raycasting, extraction.

A subvolume is a small dense voxel grid placed on the global voxel
lattice by an integer origin translation.  Many subvolumes tile a scene;
each stores per-voxel (tsdf, weight) as float32 with values clamped to
the truncation band and weights capped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import Array, CameraIntrinsics, DepthFrame, Pose


@dataclass(frozen=True)
class FusionParams:
    """Integration and raycast knobs shared by all subvolumes of a run."""

    truncation: float
    max_weight: float = 128.0
    sample_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.truncation <= 0:
            raise ValueError(f"truncation must be positive, got {self.truncation}")
        if self.max_weight < self.sample_weight or self.sample_weight <= 0:
            raise ValueError("weights must satisfy 0 < sample_weight <= max_weight")

    @classmethod
    def for_voxel_size(cls, voxel_size: float, truncation_scale: float = 4.0,
                       max_weight: float = 128.0, sample_weight: float = 1.0) -> "FusionParams":
        return cls(truncation=truncation_scale * voxel_size,
                   max_weight=max_weight, sample_weight=sample_weight)


@dataclass
class TsdfSubvolume:
    """One dense TSDF grid on the global voxel lattice.

    ``origin_voxel`` translates local voxel (0, 0, 0) onto the global
    lattice; world position of local voxel (x, y, z) is
    ``voxel_size * (origin_voxel + (x, y, z))``.  Arrays are [z, y, x].
    """

    origin_voxel: Array
    voxels_per_side: int
    side_length: float
    tsdf: Array = field(repr=False)
    weight: Array = field(repr=False)

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin_voxel, dtype=np.int64)
        if origin.shape != (3,):
            raise ValueError("origin_voxel must be an integer 3-vector")
        if self.voxels_per_side < 2:
            raise ValueError("a subvolume needs at least 2 voxels per side")
        if self.side_length <= 0:
            raise ValueError("side_length must be positive")
        shape = (self.voxels_per_side,) * 3
        if self.tsdf.shape != shape or self.weight.shape != shape:
            raise ValueError(f"voxel arrays must have shape {shape}")
        self.origin_voxel = origin

    @classmethod
    def empty(cls, origin_voxel, voxels_per_side: int, side_length: float) -> "TsdfSubvolume":
        shape = (voxels_per_side,) * 3
        return cls(
            origin_voxel=np.asarray(origin_voxel, dtype=np.int64),
            voxels_per_side=voxels_per_side,
            side_length=side_length,
            tsdf=np.zeros(shape, dtype=np.float32),
            weight=np.zeros(shape, dtype=np.float32),
        )

    @property
    def voxel_size(self) -> float:
        return self.side_length / self.voxels_per_side

    @property
    def world_min(self) -> Array:
        """World position of the first voxel center (sampleable box corner)."""
        return self.origin_voxel * self.voxel_size

    @property
    def world_max(self) -> Array:
        return (self.origin_voxel + self.voxels_per_side - 1) * self.voxel_size

    def payload_bytes(self) -> int:
        """Size of the voxel data when transferred between memory tiers."""
        return self.voxels_per_side**3 * 8  # f32 tsdf + f32 weight per voxel

    def observed_count(self) -> int:
        return int((self.weight > 0).sum())

    def copy(self) -> "TsdfSubvolume":
        return TsdfSubvolume(
            origin_voxel=self.origin_voxel.copy(),
            voxels_per_side=self.voxels_per_side,
            side_length=self.side_length,
            tsdf=self.tsdf.copy(),
            weight=self.weight.copy(),
        )


def integrate(
    subvolume: TsdfSubvolume,
    frame: DepthFrame,
    pose: Pose,
    intr: CameraIntrinsics,
    params: FusionParams,
) -> TsdfSubvolume:
    """Fuse one depth frame into the subvolume in place; returns it.

    The per-voxel signed distance is measured against the depth sample at
    the voxel's projection, corrected from z-depth to distance along the
    pixel ray; samples more than one truncation behind the surface leave
    the voxel untouched.
    """
    if frame.data.shape != (intr.height, intr.width):
        raise ValueError("frame size does not match intrinsics")
    inverse = pose.invert()
    _kernels.integrate_kernel(
        subvolume.tsdf,
        subvolume.weight,
        subvolume.origin_voxel,
        subvolume.voxel_size,
        frame.data,
        np.ascontiguousarray(inverse.rotation),
        np.ascontiguousarray(inverse.translation),
        np.ascontiguousarray(pose.translation),
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        params.truncation,
        params.max_weight,
        params.sample_weight,
    )
    return subvolume


def trilinear_sample(subvolume: TsdfSubvolume, point: Array) -> float | None:
    """TSDF value at a world point, or None where not fully observed."""
    q = np.asarray(point, dtype=np.float64) / subvolume.voxel_size - subvolume.origin_voxel
    valid, value = _kernels._sample(
        subvolume.tsdf, subvolume.weight, subvolume.voxels_per_side, q[0], q[1], q[2]
    )
    return value if valid else None


@dataclass
class RayMap:
    """Per-pixel surface prediction merged across subvolumes.

    ``distance`` holds the Euclidean hit distance from the camera center
    (+inf where no surface was found); vertices and normals are in world
    coordinates.
    """

    vertices: Array
    normals: Array
    distance: Array

    @classmethod
    def empty(cls, intr: CameraIntrinsics) -> "RayMap":
        shape = (intr.height, intr.width)
        return cls(
            vertices=np.zeros(shape + (3,), dtype=np.float64),
            normals=np.zeros(shape + (3,), dtype=np.float64),
            distance=np.full(shape, np.inf, dtype=np.float64),
        )

    @property
    def valid(self) -> Array:
        return np.isfinite(self.distance)

    def copy(self) -> "RayMap":
        return RayMap(self.vertices.copy(), self.normals.copy(), self.distance.copy())

    def downsampled(self) -> "RayMap":
        return RayMap(
            vertices=self.vertices[::2, ::2].copy(),
            normals=self.normals[::2, ::2].copy(),
            distance=self.distance[::2, ::2].copy(),
        )


def raycast(
    subvolume: TsdfSubvolume,
    pose: Pose,
    intr: CameraIntrinsics,
    raymap: RayMap,
    params: FusionParams,
) -> RayMap:
    """Render the subvolume's zero surface into ``raymap`` (min-distance merge).

    Marching is restricted to the subvolume's bounding box.  Because the
    sample lattice along each ray is anchored at the camera rather than
    the box entry point, raycasting commutes across subvolumes and a
    tiling reproduces the equivalent single volume exactly.
    """
    coarse = max(2, int(round(0.5 * params.truncation / subvolume.voxel_size)))
    _kernels.raycast_kernel(
        subvolume.tsdf,
        subvolume.weight,
        subvolume.origin_voxel,
        subvolume.voxel_size,
        params.truncation,
        coarse,
        np.ascontiguousarray(pose.rotation),
        np.ascontiguousarray(pose.translation),
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        raymap.distance,
        raymap.vertices,
        raymap.normals,
    )
    return raymap


@dataclass(frozen=True)
class PointCloud:
    """Vertices with unit normals, both (N, 3) float arrays."""

    vertices: Array
    normals: Array

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if len(vertices) != len(normals):
            raise ValueError("vertex and normal counts differ")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "normals", normals)

    def __len__(self) -> int:
        return len(self.vertices)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)))

    @classmethod
    def concatenate(cls, clouds) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return cls.empty()
        return cls(
            np.concatenate([c.vertices for c in clouds]),
            np.concatenate([c.normals for c in clouds]),
        )


def extract_points(subvolume: TsdfSubvolume) -> PointCloud:
    """One vertex per voxel straddling the zero surface.

    Each observed voxel whose sign differs from an observed +x/+y/+z
    neighbor contributes the linearly interpolated crossing on its
    closest such axis, with the finite-difference gradient as normal.
    The vertex count is therefore bounded by the voxel count.
    """
    bound = _kernels.extract_bound(subvolume.tsdf, subvolume.weight)
    verts = np.empty((bound, 3), dtype=np.float64)
    norms = np.empty((bound, 3), dtype=np.float64)
    count = _kernels.extract_kernel(
        subvolume.tsdf,
        subvolume.weight,
        subvolume.origin_voxel,
        subvolume.voxel_size,
        verts,
        norms,
    )
    return PointCloud(verts[:count].copy(), norms[:count].copy())
