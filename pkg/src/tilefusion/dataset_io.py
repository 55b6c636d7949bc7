"""On-disk formats: depth sequences, point clouds, and run statistics.

A sequence is a directory with 16-bit depth PNGs, an index file listing
``timestamp filename`` per line, and optionally a trajectory file listing
``timestamp tx ty tz qx qy qz qw``.  Depth is stored in 1/5000 meter
units; zero means no measurement.  Timestamps associate depth frames to
trajectory entries by nearest match within a tolerance.

Point clouds are written as little-endian binary PLY so external viewers
open them directly; the reader handles the files this module writes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import DepthFrame, Pose

DEPTH_SCALE = 5000.0
MAX_ASSOCIATION_GAP = 0.02  # seconds

INDEX_NAME = "depth.txt"
TRAJECTORY_NAME = "groundtruth.txt"


def write_depth_png(path, depth_m: np.ndarray, scale: float = DEPTH_SCALE) -> None:
    """Store a metric depth image as 16-bit grayscale PNG."""
    depth_m = np.asarray(depth_m, dtype=np.float64)
    counts = np.round(depth_m * scale)
    if np.any(counts > 65535):
        raise ValueError("depth exceeds the 16-bit range at this scale")
    if np.any(counts < 0):
        raise ValueError("negative depth")
    img = Image.fromarray(counts.astype(np.uint16))
    img.save(Path(path))


def read_depth_png(path, scale: float = DEPTH_SCALE) -> np.ndarray:
    """Load a 16-bit depth PNG back to float32 meters."""
    img = Image.open(Path(path))
    if img.mode not in ("I;16", "I;16B", "I"):
        raise ValueError(f"{path}: unsupported PNG mode {img.mode}")
    counts = np.asarray(img, dtype=np.uint32)
    return (counts.astype(np.float64) / scale).astype(np.float32)


def _read_indexed_lines(path: Path) -> list[list[str]]:
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        rows.append(stripped.split())
    return rows


@dataclass(frozen=True)
class SequenceEntry:
    timestamp: float
    depth_path: Path
    pose: Pose | None


class DepthSequence:
    """Lazy reader over a sequence directory."""

    def __init__(self, entries: list[SequenceEntry], scale: float = DEPTH_SCALE):
        self.entries = entries
        self.scale = scale

    def __len__(self) -> int:
        return len(self.entries)

    def read_frame(self, index: int) -> DepthFrame:
        return DepthFrame(read_depth_png(self.entries[index].depth_path, self.scale))

    @property
    def has_poses(self) -> bool:
        return all(e.pose is not None for e in self.entries)


def load_sequence(
    directory,
    scale: float = DEPTH_SCALE,
    max_gap: float = MAX_ASSOCIATION_GAP,
) -> DepthSequence:
    """Open a sequence directory, associating poses where available.

    Frame timestamps must be strictly increasing.  A frame gets the
    trajectory pose nearest in time, or none when the gap exceeds
    ``max_gap`` seconds.
    """
    directory = Path(directory)
    index = directory / INDEX_NAME
    if not index.is_file():
        raise FileNotFoundError(f"{index} not found")
    frame_rows = _read_indexed_lines(index)
    if not frame_rows:
        raise ValueError(f"{index}: no frames listed")
    stamps = []
    paths = []
    for row in frame_rows:
        if len(row) != 2:
            raise ValueError(f"{index}: expected 'timestamp filename', got {row!r}")
        stamps.append(float(row[0]))
        paths.append(directory / row[1])
    for a, b in zip(stamps, stamps[1:]):
        if b <= a:
            raise ValueError(f"{index}: timestamps not strictly increasing at {b}")

    poses: list[Pose | None] = [None] * len(stamps)
    trajectory = directory / TRAJECTORY_NAME
    if trajectory.is_file():
        traj_rows = _read_indexed_lines(trajectory)
        t_stamps = []
        t_poses = []
        for row in traj_rows:
            if len(row) != 8:
                raise ValueError(
                    f"{trajectory}: expected 'timestamp tx ty tz qx qy qz qw', got {row!r}"
                )
            vals = [float(v) for v in row]
            t_stamps.append(vals[0])
            t_poses.append(Pose.from_quaternion(*vals[1:]))
        for a, b in zip(t_stamps, t_stamps[1:]):
            if b <= a:
                raise ValueError(
                    f"{trajectory}: timestamps not strictly increasing at {b}"
                )
        t_arr = np.array(t_stamps)
        for i, s in enumerate(stamps):
            j = int(np.argmin(np.abs(t_arr - s)))
            if abs(t_arr[j] - s) <= max_gap:
                poses[i] = t_poses[j]

    entries = [
        SequenceEntry(timestamp=s, depth_path=p, pose=q)
        for s, p, q in zip(stamps, paths, poses)
    ]
    return DepthSequence(entries, scale=scale)


def save_sequence(
    directory,
    frames,
    poses=None,
    fps: float = 30.0,
    scale: float = DEPTH_SCALE,
) -> None:
    """Write depth frames (and optionally their poses) as a sequence dir."""
    directory = Path(directory)
    depth_dir = directory / "depth"
    depth_dir.mkdir(parents=True, exist_ok=True)
    if poses is not None and len(poses) != len(frames):
        raise ValueError("poses must match frames")
    index_lines = ["# timestamp filename"]
    traj_lines = ["# timestamp tx ty tz qx qy qz qw"]
    for i, frame in enumerate(frames):
        stamp = i / fps
        name = f"depth/{i:06d}.png"
        data = frame.data if isinstance(frame, DepthFrame) else frame
        write_depth_png(directory / name, data, scale)
        index_lines.append(f"{stamp:.6f} {name}")
        if poses is not None:
            t = poses[i].translation
            qx, qy, qz, qw = poses[i].quaternion()
            traj_lines.append(
                f"{stamp:.6f} {t[0]:.9f} {t[1]:.9f} {t[2]:.9f} "
                f"{qx:.9f} {qy:.9f} {qz:.9f} {qw:.9f}"
            )
    (directory / INDEX_NAME).write_text("\n".join(index_lines) + "\n")
    if poses is not None:
        (directory / TRAJECTORY_NAME).write_text("\n".join(traj_lines) + "\n")


def save_ply(path, points: np.ndarray, normals: np.ndarray | None = None) -> None:
    """Write a point cloud as binary little-endian PLY."""
    points = np.asarray(points, dtype="<f4").reshape(-1, 3)
    props = ["property float x", "property float y", "property float z"]
    columns = [points]
    if normals is not None:
        normals = np.asarray(normals, dtype="<f4").reshape(-1, 3)
        if normals.shape[0] != points.shape[0]:
            raise ValueError("normals must match points")
        props += ["property float nx", "property float ny", "property float nz"]
        columns.append(normals)
    header = "\n".join(
        [
            "ply",
            "format binary_little_endian 1.0",
            f"element vertex {points.shape[0]}",
            *props,
            "end_header",
        ]
    )
    body = np.concatenate(columns, axis=1).astype("<f4")
    with open(Path(path), "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(body.tobytes())


def load_ply(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a binary little-endian PLY with float x y z [nx ny nz]."""
    blob = Path(path).read_bytes()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply\n") or end < 0:
        raise ValueError(f"{path}: not a PLY file")
    header = blob[:end].decode("ascii").splitlines()
    count = None
    names = []
    for line in header[1:]:
        parts = line.split()
        if parts[0] == "format":
            if parts[1] != "binary_little_endian":
                raise ValueError(f"{path}: only binary little-endian supported")
        elif parts[0] == "element":
            if parts[1] != "vertex":
                raise ValueError(f"{path}: unexpected element {parts[1]}")
            count = int(parts[2])
        elif parts[0] == "property":
            if parts[1] != "float":
                raise ValueError(f"{path}: only float properties supported")
            names.append(parts[2])
    if count is None:
        raise ValueError(f"{path}: missing vertex element")
    if names[:3] != ["x", "y", "z"]:
        raise ValueError(f"{path}: vertex properties must start with x y z")
    data = np.frombuffer(
        blob, dtype="<f4", count=count * len(names), offset=end + len(b"end_header\n")
    ).reshape(count, len(names))
    points = data[:, :3].astype(np.float32)
    normals = None
    if names[3:6] == ["nx", "ny", "nz"]:
        normals = data[:, 3:6].astype(np.float32)
    return points, normals


def write_stats_csv(path, header: list[str], rows) -> None:
    """Write per-frame run statistics; floats use six significant digits."""

    def fmt(value):
        if isinstance(value, bool):
            return "1" if value else "0"
        if isinstance(value, float):
            return "%.6g" % value
        return str(value)

    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_stats_csv(path) -> tuple[list[str], list[list[float]]]:
    """Read a stats CSV back; every cell is parsed as float."""
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(cell) for cell in row] for row in reader]
    return header, rows
