"""Analytic test scenes: exact signed distances, exact depth renders.

Depth images are rendered by solving each primitive's ray intersection in
closed form, parameterized so the solution *is* the z-depth: a pixel ray is
``o + s * d`` with ``d = R @ ((u - cx)/fx, (v - cy)/fy, 1)``, so the camera
z of the hit equals ``s`` exactly and no normalization error enters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Array, CameraIntrinsics, DepthFrame, Pose


class ScenePrimitive:
    """Interface: exact signed distance and exact ray intersection."""

    def signed_distance(self, points: Array) -> Array:
        raise NotImplementedError

    def intersect(self, origin: Array, dirs: Array) -> Array:
        """Smallest positive ray parameter per direction, inf for a miss."""
        raise NotImplementedError


@dataclass(frozen=True)
class Sphere(ScenePrimitive):
    center: Array
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if self.radius <= 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")

    def signed_distance(self, points: Array) -> Array:
        return np.linalg.norm(points - self.center, axis=-1) - self.radius

    def intersect(self, origin: Array, dirs: Array) -> Array:
        oc = origin - self.center
        a = np.einsum("...k,...k->...", dirs, dirs)
        b = 2.0 * (dirs @ oc)
        c = oc @ oc - self.radius**2
        disc = b * b - 4.0 * a * c
        out = np.full(dirs.shape[:-1], np.inf)
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        s_near = (-b - sq) / (2.0 * a)
        s_far = (-b + sq) / (2.0 * a)
        # nearest strictly positive root: inside the sphere the far root counts
        s = np.where(s_near > 1e-12, s_near, s_far)
        ok = hit & (s > 1e-12)
        out[ok] = s[ok]
        return out


@dataclass(frozen=True)
class Plane(ScenePrimitive):
    """Infinite plane through ``point`` with unit ``normal``.

    The signed distance is positive on the side the normal points to.
    """

    point: Array
    normal: Array

    def __post_init__(self) -> None:
        point = np.asarray(self.point, dtype=np.float64)
        normal = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(normal)
        if norm == 0:
            raise ValueError("plane normal must be nonzero")
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "normal", normal / norm)

    def signed_distance(self, points: Array) -> Array:
        return (points - self.point) @ self.normal

    def intersect(self, origin: Array, dirs: Array) -> Array:
        denom = dirs @ self.normal
        num = (self.point - origin) @ self.normal
        out = np.full(dirs.shape[:-1], np.inf)
        ok = np.abs(denom) > 1e-15
        s = np.where(ok, num / np.where(ok, denom, 1.0), np.inf)
        ok &= s > 1e-12
        out[ok] = s[ok]
        return out


@dataclass(frozen=True)
class Box(ScenePrimitive):
    """Axis-aligned box given by its two extreme corners."""

    minimum: Array
    maximum: Array

    def __post_init__(self) -> None:
        minimum = np.asarray(self.minimum, dtype=np.float64)
        maximum = np.asarray(self.maximum, dtype=np.float64)
        if (minimum >= maximum).any():
            raise ValueError("box minimum must be strictly below maximum on every axis")
        object.__setattr__(self, "minimum", minimum)
        object.__setattr__(self, "maximum", maximum)

    def signed_distance(self, points: Array) -> Array:
        lo = self.minimum - points
        hi = points - self.maximum
        outside = np.maximum(lo, hi)
        outside_dist = np.linalg.norm(np.maximum(outside, 0.0), axis=-1)
        inside_dist = np.minimum(outside.max(axis=-1), 0.0)  # negative inside
        return outside_dist + inside_dist

    def intersect(self, origin: Array, dirs: Array) -> Array:
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (self.minimum - origin) * inv
            t2 = (self.maximum - origin) * inv
        # rays parallel to a slab: inside iff the origin is within that slab
        lo = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
        hi = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
        parallel = dirs == 0
        inside = (origin >= self.minimum) & (origin <= self.maximum)
        lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
        entry = lo.max(axis=-1)
        exit_ = hi.min(axis=-1)
        out = np.full(dirs.shape[:-1], np.inf)
        hit = (entry <= exit_) & (exit_ > 1e-12)
        s = np.where(entry > 1e-12, entry, exit_)
        out[hit] = s[hit]
        return out


@dataclass(frozen=True)
class Scene:
    primitives: tuple[ScenePrimitive, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def signed_distance(self, points: Array) -> Array:
        """Union signed distance: minimum over the primitives."""
        if not self.primitives:
            raise ValueError("empty scene has no signed distance")
        points = np.asarray(points, dtype=np.float64)
        dists = np.stack([p.signed_distance(points) for p in self.primitives])
        return dists.min(axis=0)

    def render_depth(self, pose: Pose, intr: CameraIntrinsics) -> DepthFrame:
        """Exact z-depth image of the scene from ``pose``; misses are 0."""
        dirs = pose.rotate(intr.pixel_rays())
        origin = pose.translation
        if self.primitives:
            s = np.stack([p.intersect(origin, dirs) for p in self.primitives]).min(axis=0)
        else:
            s = np.full((intr.height, intr.width), np.inf)
        depth = np.where(np.isfinite(s), s, 0.0)
        return DepthFrame(depth)


def parse_scene(text: str) -> Scene:
    """Parse the plain-text scene format.

    One primitive per line, '#' comments allowed::

        sphere cx cy cz radius
        plane  px py pz nx ny nz
        box    minx miny minz maxx maxy maxz
    """
    primitives: list[ScenePrimitive] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, values = parts[0].lower(), parts[1:]
        try:
            numbers = [float(v) for v in values]
        except ValueError as exc:
            raise ValueError(f"scene line {lineno}: non-numeric field in {line!r}") from exc
        if kind == "sphere" and len(numbers) == 4:
            primitives.append(Sphere(np.array(numbers[:3]), numbers[3]))
        elif kind == "plane" and len(numbers) == 6:
            primitives.append(Plane(np.array(numbers[:3]), np.array(numbers[3:])))
        elif kind == "box" and len(numbers) == 6:
            primitives.append(Box(np.array(numbers[:3]), np.array(numbers[3:])))
        else:
            raise ValueError(f"scene line {lineno}: unrecognized primitive {line!r}")
    if not primitives:
        raise ValueError("scene file defines no primitives")
    return Scene(tuple(primitives))


def format_scene(scene: Scene) -> str:
    lines = []
    for p in scene.primitives:
        if isinstance(p, Sphere):
            lines.append("sphere %g %g %g %g" % (*p.center, p.radius))
        elif isinstance(p, Plane):
            lines.append("plane %g %g %g %g %g %g" % (*p.point, *p.normal))
        elif isinstance(p, Box):
            lines.append("box %g %g %g %g %g %g" % (*p.minimum, *p.maximum))
        else:
            raise TypeError(f"cannot serialize primitive {type(p).__name__}")
    return "\n".join(lines) + "\n"


def load_scene(path) -> Scene:
    with open(path, "r", encoding="ascii") as fh:
        return parse_scene(fh.read())


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_scene(scene))


@dataclass(frozen=True)
class NoiseModel:
    """Seeded depth corruption: Gaussian noise plus pixel dropout.

    The noise standard deviation at depth d is ``sigma + sigma_quad * d**2``,
    matching how structured-light sensor error grows with range.  Each frame
    index derives its own RNG stream, so sequences are reproducible while
    frames stay independent.
    """

    sigma: float = 0.0
    sigma_quad: float = 0.0
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma < 0 or self.sigma_quad < 0:
            raise ValueError("noise magnitudes must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    def apply(self, frame: DepthFrame, frame_index: int = 0) -> DepthFrame:
        rng = np.random.default_rng([self.seed, frame_index])
        data = frame.data.copy()
        valid = frame.valid
        if self.sigma > 0 or self.sigma_quad > 0:
            std = self.sigma + self.sigma_quad * data**2
            noise = rng.normal(0.0, 1.0, size=data.shape) * std
            data[valid] = np.maximum(data[valid] + noise[valid], 0.0)
        if self.dropout > 0:
            drop = rng.random(size=data.shape) < self.dropout
            data[drop] = 0.0
        return DepthFrame(data)


def add_noise(frame: DepthFrame, model: NoiseModel, frame_index: int = 0) -> DepthFrame:
    return model.apply(frame, frame_index)


def orbit_trajectory(center: Array, radius: float, frames: int) -> list[Pose]:
    """Poses circling ``center`` in its horizontal plane, always facing it.

    Pose 0 sits at center - (0, 0, radius) looking down +z, so a scene
    whose focus is at (0, 0, radius) starts from the identity pose.
    """
    if frames < 1:
        raise ValueError("trajectory needs at least one frame")
    if radius <= 0:
        raise ValueError("orbit radius must be positive")
    center = np.asarray(center, dtype=np.float64)
    poses = []
    for k in range(frames):
        angle = 2.0 * np.pi * k / frames
        c, s = np.cos(angle), np.sin(angle)
        rotation = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        translation = center + rotation @ np.array([0.0, 0.0, -radius])
        poses.append(Pose(rotation, translation))
    return poses


def corridor_trajectory(length: float, frames: int) -> list[Pose]:
    """Straight walk down +z with identity orientation, from z=0 to z=length."""
    if frames < 1:
        raise ValueError("trajectory needs at least one frame")
    step = length / (frames - 1) if frames > 1 else 0.0
    return [Pose(np.eye(3), np.array([0.0, 0.0, k * step])) for k in range(frames)]
