"""Camera model, rigid poses, and per-pixel geometry maps.

Conventions used throughout the package:

* Camera frame: right-handed, x right, y down, z forward along the
  optical axis.  A point is in front of the camera iff z > 0.
* Depth images store z-depth in meters as (height, width) arrays,
  row-major, with 0 marking an invalid pixel.
* A ``Pose`` maps camera coordinates to world coordinates,
  ``p_world = R @ p_cam + t``; ``translation`` is therefore the camera
  center expressed in world coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Array = np.ndarray

# Constructor guard; composition drift is repaired with orthonormalized().
_ROTATION_ATOL = 1e-7


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics for one pyramid level."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Intrinsics of the same camera at ``factor`` times the resolution.

        Exact for stride subsampling: pixel (u, v) at the scaled level sees
        the same ray as pixel (u / factor, v / factor) at the original one.
        """
        return CameraIntrinsics(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
            width=max(1, int(round(self.width * factor))),
            height=max(1, int(round(self.height * factor))),
        )

    def pixel_rays(self) -> Array:
        """(H, W, 3) camera-frame ray directions with z = 1 (not normalized)."""
        u = np.arange(self.width, dtype=np.float64)
        v = np.arange(self.height, dtype=np.float64)
        uu, vv = np.meshgrid(u, v)
        rays = np.empty((self.height, self.width, 3), dtype=np.float64)
        rays[..., 0] = (uu - self.cx) / self.fx
        rays[..., 1] = (vv - self.cy) / self.fy
        rays[..., 2] = 1.0
        return rays


class OutOfFrustumError(ValueError):
    """Raised when projecting a point at or behind the camera plane."""


def unproject(intr: CameraIntrinsics, x: float, y: float, depth: float) -> Array:
    """Back-project pixel (x, y) at z-depth ``depth`` into the camera frame."""
    return np.array(
        [
            (x - intr.cx) / intr.fx * depth,
            (y - intr.cy) / intr.fy * depth,
            depth,
        ]
    )


def project(intr: CameraIntrinsics, point: Array) -> tuple[float, float]:
    """Project a camera-frame point to continuous pixel coordinates."""
    z = point[2]
    if z <= 0:
        raise OutOfFrustumError(f"point has non-positive depth z={z}")
    return (
        intr.fx * point[0] / z + intr.cx,
        intr.fy * point[1] / z + intr.cy,
    )


@dataclass(frozen=True)
class Pose:
    """Rigid camera-to-world transform."""

    rotation: Array
    translation: Array

    def __post_init__(self) -> None:
        rotation = np.asarray(self.rotation, dtype=np.float64)
        translation = np.asarray(self.translation, dtype=np.float64)
        if rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rotation.shape}")
        if translation.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {translation.shape}")
        err = np.abs(rotation.T @ rotation - np.eye(3)).max()
        if err > _ROTATION_ATOL:
            raise ValueError(f"rotation is not orthonormal (|R^T R - I|_max = {err:.3e})")
        if np.linalg.det(rotation) < 0:
            raise ValueError("rotation must be proper (det +1), got a reflection")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: Array) -> "Pose":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(matrix[:3, :3], matrix[:3, 3])

    @classmethod
    def from_quaternion(cls, tx: float, ty: float, tz: float,
                        qx: float, qy: float, qz: float, qw: float) -> "Pose":
        """Build from a translation and an (x, y, z, w) unit quaternion."""
        norm = math.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
        if norm == 0.0:
            raise ValueError("zero quaternion")
        qx, qy, qz, qw = qx / norm, qy / norm, qz / norm, qw / norm
        rotation = np.array(
            [
                [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)],
                [2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)],
                [2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)],
            ]
        )
        return cls(rotation, np.array([tx, ty, tz], dtype=np.float64))

    @property
    def matrix(self) -> Array:
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def compose(self, other: "Pose") -> "Pose":
        """Apply ``other`` first, then self: (self.compose(other))(p) = self(other(p))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def invert(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def transform_points(self, points: Array) -> Array:
        """Apply to an (..., 3) array of points."""
        return points @ self.rotation.T + self.translation

    def rotate(self, directions: Array) -> Array:
        """Apply the rotation only to an (..., 3) array of directions."""
        return directions @ self.rotation.T

    def orthonormalized(self) -> "Pose":
        """Re-project the rotation onto SO(3) via SVD."""
        u, _, vt = np.linalg.svd(self.rotation)
        rotation = u @ vt
        if np.linalg.det(rotation) < 0:
            u[:, -1] = -u[:, -1]
            rotation = u @ vt
        return Pose(rotation, self.translation)

    def quaternion(self) -> tuple[float, float, float, float]:
        """Rotation as an (x, y, z, w) unit quaternion with qw >= 0."""
        r = self.rotation
        trace = r[0, 0] + r[1, 1] + r[2, 2]
        if trace > 0:
            s = math.sqrt(trace + 1.0) * 2
            qw = 0.25 * s
            qx = (r[2, 1] - r[1, 2]) / s
            qy = (r[0, 2] - r[2, 0]) / s
            qz = (r[1, 0] - r[0, 1]) / s
        elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
            qw = (r[2, 1] - r[1, 2]) / s
            qx = 0.25 * s
            qy = (r[0, 1] + r[1, 0]) / s
            qz = (r[0, 2] + r[2, 0]) / s
        elif r[1, 1] > r[2, 2]:
            s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
            qw = (r[0, 2] - r[2, 0]) / s
            qx = (r[0, 1] + r[1, 0]) / s
            qy = 0.25 * s
            qz = (r[1, 2] + r[2, 1]) / s
        else:
            s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
            qw = (r[1, 0] - r[0, 1]) / s
            qx = (r[0, 2] + r[2, 0]) / s
            qy = (r[1, 2] + r[2, 1]) / s
            qz = 0.25 * s
        if qw < 0:
            qx, qy, qz, qw = -qx, -qy, -qz, -qw
        return (qx, qy, qz, qw)


def rotation_from_axis_angle(axis: Array, angle: float) -> Array:
    """Rodrigues formula; ``axis`` need not be unit length."""
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm == 0.0 or angle == 0.0:
        return np.eye(3)
    x, y, z = axis / norm
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rotation_angle(rotation: Array) -> float:
    """Geodesic angle of a rotation matrix, in radians."""
    cos_angle = (np.trace(rotation) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, cos_angle)))


@dataclass(frozen=True)
class DepthFrame:
    """One z-depth image in meters; 0 marks invalid pixels."""

    data: Array

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"depth data must be 2-D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("depth data contains non-finite values")
        if (data < 0).any():
            raise ValueError("depth values must be non-negative")
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def valid(self) -> Array:
        return self.data > 0

    def downsampled(self) -> "DepthFrame":
        """Stride-2 subsampling, aligned with CameraIntrinsics.scaled(0.5)."""
        return DepthFrame(self.data[::2, ::2].copy())


def depth_to_vertices(intr: CameraIntrinsics, depth: Array) -> tuple[Array, Array]:
    """Back-project a depth image; returns ((H, W, 3) vertices, (H, W) validity)."""
    if depth.shape != (intr.height, intr.width):
        raise ValueError(
            f"depth shape {depth.shape} does not match intrinsics "
            f"{intr.height}x{intr.width}"
        )
    rays = intr.pixel_rays()
    vertices = rays * depth[..., None]
    valid = depth > 0
    vertices[~valid] = 0.0
    return vertices, valid


def compute_normals(vertices: Array, valid: Array) -> tuple[Array, Array]:
    """Per-pixel normals from forward differences of a vertex map.

    Normals are unit length and oriented toward the camera
    (dot(normal, vertex) <= 0 in the frame of the vertices).  A pixel gets
    a normal only if itself and its +x / +y neighbors are valid.
    """
    h, w = valid.shape
    normals = np.zeros_like(vertices)
    ok = np.zeros_like(valid)
    dx = vertices[:, 1:, :] - vertices[:, :-1, :]
    dy = vertices[1:, :, :] - vertices[:-1, :, :]
    cross = np.cross(dx[:-1, :, :], dy[:, :-1, :])
    norm = np.linalg.norm(cross, axis=-1)
    good = (
        valid[:-1, :-1]
        & valid[:-1, 1:]
        & valid[1:, :-1]
        & (norm > 0)
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = cross / norm[..., None]
    # flip so normals face the viewpoint
    toward = np.einsum("ijk,ijk->ij", unit, vertices[:-1, :-1, :])
    unit[toward > 0] = -unit[toward > 0]
    normals[:-1, :-1][good] = unit[good]
    ok[:-1, :-1] = good
    return normals, ok


@dataclass
class VertexNormalMap:
    """Per-pixel vertices and normals with a joint validity mask."""

    vertices: Array
    normals: Array
    valid: Array

    @classmethod
    def from_depth(cls, intr: CameraIntrinsics, frame: DepthFrame) -> "VertexNormalMap":
        vertices, vertex_ok = depth_to_vertices(intr, frame.data)
        normals, normal_ok = compute_normals(vertices, vertex_ok)
        return cls(vertices=vertices, normals=normals, valid=vertex_ok & normal_ok)

    def transformed(self, pose: Pose) -> "VertexNormalMap":
        vertices = pose.transform_points(self.vertices)
        normals = self.normals @ pose.rotation.T
        vertices[~self.valid] = 0.0
        normals[~self.valid] = 0.0
        return VertexNormalMap(vertices=vertices, normals=normals, valid=self.valid.copy())

    def downsampled(self) -> "VertexNormalMap":
        """Stride-2 subsampling for pyramid levels."""
        return VertexNormalMap(
            vertices=self.vertices[::2, ::2].copy(),
            normals=self.normals[::2, ::2].copy(),
            valid=self.valid[::2, ::2].copy(),
        )
