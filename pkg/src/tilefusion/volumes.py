"""Subvolume placement, residency, and disk spill.

The reconstruction domain is tiled by small equal TSDF subvolumes that
share one global voxel lattice.  Neighbors overlap by two voxels, so any
trilinear window, and any pair of adjacent ray samples, fits entirely
inside at least one tile; that is what lets a tiling stand in for a
single large volume.

A VolumeSet emulates a two-tier memory.  At most ``max_resident`` tiles
have their arrays in the fast tier at a time; the rest are spill files on
disk.  Acquire loads (or creates) a tile, release returns it to the
eviction pool, and least-recently-used tiles are written out when space
is needed.  Byte and file counters record the traffic a schedule causes,
which is the quantity the streaming design is meant to bound.
"""

from __future__ import annotations

import struct
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, DepthFrame, Pose
from .tsdf import FusionParams, TsdfSubvolume

Key = tuple[int, int, int]

SPILL_MAGIC = b"TSDV"
SPILL_VERSION = 1
# magic, version, voxels per side, side length, origin voxel, max weight, truncation
_SPILL_HEADER = struct.Struct("<4sIId3qff")


def spill_file_size(voxels_per_side: int) -> int:
    """On-disk size of one spilled subvolume, in bytes."""
    return _SPILL_HEADER.size + voxels_per_side**3 * 8


def save_subvolume(path, subvolume: TsdfSubvolume, params: FusionParams) -> int:
    """Write a subvolume to ``path``; returns the bytes written.

    The payload interleaves (tsdf, weight) float32 pairs per voxel with x
    fastest, matching the in-memory [z, y, x] layout.
    """
    header = _SPILL_HEADER.pack(
        SPILL_MAGIC,
        SPILL_VERSION,
        subvolume.voxels_per_side,
        subvolume.side_length,
        int(subvolume.origin_voxel[0]),
        int(subvolume.origin_voxel[1]),
        int(subvolume.origin_voxel[2]),
        params.max_weight,
        params.truncation,
    )
    payload = np.stack([subvolume.tsdf, subvolume.weight], axis=-1)
    raw = payload.astype("<f4", copy=False).tobytes()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(raw)
    return len(header) + len(raw)


def load_subvolume(path) -> tuple[TsdfSubvolume, FusionParams]:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _SPILL_HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, side, ox, oy, oz, max_weight, tau = _SPILL_HEADER.unpack_from(
        blob
    )
    if magic != SPILL_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != SPILL_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expect = spill_file_size(n)
    if len(blob) != expect:
        raise ValueError(f"{path}: expected {expect} bytes, found {len(blob)}")
    flat = np.frombuffer(blob, dtype="<f4", offset=_SPILL_HEADER.size)
    pairs = flat.reshape(n, n, n, 2).astype(np.float32)
    subvolume = TsdfSubvolume(
        origin_voxel=np.array([ox, oy, oz], dtype=np.int64),
        voxels_per_side=n,
        side_length=side,
        tsdf=np.ascontiguousarray(pairs[..., 0]),
        weight=np.ascontiguousarray(pairs[..., 1]),
    )
    params = FusionParams(truncation=float(tau), max_weight=float(max_weight))
    return subvolume, params


@dataclass(frozen=True)
class GridSpec:
    """A static tiling of a cubic domain.

    ``spacing`` is the origin step between neighboring tiles in voxels;
    tiles have ``spacing + 2`` voxels per side, so each pair of neighbors
    shares a two-voxel band.  The composite lattice spans resolution + 2
    voxels per axis, centered in x and y, starting at z = 0.
    """

    voxels_per_side: int
    voxel_size: float
    spacing: int
    keys: tuple[Key, ...]

    @property
    def subvolume_side_length(self) -> float:
        return self.voxels_per_side * self.voxel_size


def init_grid(side_length: float, resolution: int, resident_resolution: int) -> GridSpec:
    """Tile a cube of ``side_length`` meters at ``resolution`` voxels.

    ``resident_resolution`` sets the interior voxels per tile and axis.
    When it does not divide ``resolution`` the tile count is rounded up
    and the covered region grows past the requested cube.  With
    ``resident_resolution == resolution`` this degenerates to a single
    tile, which is the reference configuration the tiled one is checked
    against.
    """
    if resolution < 1 or resident_resolution < 1:
        raise ValueError("resolutions must be positive")
    if resident_resolution > resolution:
        raise ValueError("resident_resolution cannot exceed resolution")
    tiles, rem = divmod(resolution, resident_resolution)
    if rem:
        tiles += 1
        warnings.warn(
            f"resolution {resolution} is not a multiple of {resident_resolution}; "
            f"covering {tiles * resident_resolution} voxels per axis",
            stacklevel=2,
        )
    voxel_size = side_length / resolution
    cover = resolution + 2
    corner = np.array([-(cover // 2), -(cover // 2), 0], dtype=np.int64)
    keys = []
    for i in range(tiles):
        for j in range(tiles):
            for k in range(tiles):
                origin = corner + np.array([i, j, k], dtype=np.int64) * resident_resolution
                keys.append((int(origin[0]), int(origin[1]), int(origin[2])))
    return GridSpec(
        voxels_per_side=resident_resolution + 2,
        voxel_size=voxel_size,
        spacing=resident_resolution,
        keys=tuple(keys),
    )


class VolumeSet:
    """Allocated subvolumes behind an emulated two-tier memory.

    Keys are tile origin voxels.  ``acquire`` makes a tile's arrays
    addressable and pins it; ``release`` unpins.  Unpinned residents are
    spilled least-recently-used when a new tile needs space.  All tiles
    share one shape and one set of fusion parameters.

    The counters accumulate whole-file transfers: a tile is always read
    or written in full, header included.
    """

    def __init__(
        self,
        params: FusionParams,
        voxels_per_side: int,
        voxel_size: float,
        max_resident: int,
        spill_dir,
    ) -> None:
        if max_resident < 1:
            raise ValueError("max_resident must be at least 1")
        if voxels_per_side < 2:
            raise ValueError("voxels_per_side must be at least 2")
        self.params = params
        self.voxels_per_side = int(voxels_per_side)
        self.voxel_size = float(voxel_size)
        self.side_length = self.voxels_per_side * self.voxel_size
        self.max_resident = int(max_resident)
        self.spill_dir = Path(spill_dir)
        self.spill_dir.mkdir(parents=True, exist_ok=True)
        self._order: list[Key] = []
        self._resident: OrderedDict[Key, TsdfSubvolume] = OrderedDict()
        self._spilled: set[Key] = set()
        self._live: set[Key] = set()
        self.bytes_read = 0
        self.bytes_written = 0
        self.files_read = 0
        self.files_written = 0

    def __len__(self) -> int:
        return len(self._order)

    def __contains__(self, key: Key) -> bool:
        return key in self._order

    def keys(self) -> tuple[Key, ...]:
        """Allocated keys, in allocation order."""
        return tuple(self._order)

    @property
    def live_count(self) -> int:
        return len(self._live)

    @property
    def resident_count(self) -> int:
        return len(self._resident)

    def spill_path(self, key: Key) -> Path:
        x, y, z = key
        return self.spill_dir / f"vol_{x}_{y}_{z}.tsdv"

    def add(self, key: Key) -> None:
        """Allocate a tile slot; arrays appear on first acquire."""
        key = (int(key[0]), int(key[1]), int(key[2]))
        if key in self._order:
            raise ValueError(f"{key} already allocated")
        self._order.append(key)

    def remove(self, key: Key) -> TsdfSubvolume:
        """Drop a tile, returning its final state for archival.

        Reads the spill file when the tile is not resident, so removal
        traffic shows up in the counters like any other load.
        """
        if key not in self._order:
            raise KeyError(key)
        if key in self._live:
            raise RuntimeError(f"{key} is live")
        if key in self._resident:
            vol = self._resident.pop(key)
        elif key in self._spilled:
            vol, _ = load_subvolume(self.spill_path(key))
            self.bytes_read += spill_file_size(self.voxels_per_side)
            self.files_read += 1
        else:
            vol = self._fresh(key)
        if key in self._spilled:
            self.spill_path(key).unlink()
            self._spilled.discard(key)
        self._order.remove(key)
        return vol

    def acquire(self, key: Key) -> TsdfSubvolume:
        """Pin a tile's arrays into the fast tier and return them."""
        if key not in self._order:
            raise KeyError(key)
        if key in self._live:
            raise RuntimeError(f"{key} acquired twice")
        if key in self._resident:
            self._resident.move_to_end(key)
        else:
            self._evict_for_space()
            if key in self._spilled:
                vol, _ = load_subvolume(self.spill_path(key))
                self.bytes_read += spill_file_size(self.voxels_per_side)
                self.files_read += 1
            else:
                vol = self._fresh(key)
            self._resident[key] = vol
        self._live.add(key)
        return self._resident[key]

    def release(self, key: Key) -> None:
        if key not in self._live:
            raise RuntimeError(f"{key} is not live")
        self._live.discard(key)

    def flush(self) -> None:
        """Persist every resident tile without evicting it."""
        for key, vol in self._resident.items():
            self.bytes_written += save_subvolume(self.spill_path(key), vol, self.params)
            self.files_written += 1
            self._spilled.add(key)

    def _fresh(self, key: Key) -> TsdfSubvolume:
        return TsdfSubvolume.empty(
            np.array(key, dtype=np.int64), self.voxels_per_side, self.side_length
        )

    def _evict_for_space(self) -> None:
        # live tiles are never victims; if everything is live the budget
        # is allowed to overflow rather than deadlock
        while len(self._resident) >= self.max_resident:
            victim = None
            for key in self._resident:
                if key not in self._live:
                    victim = key
                    break
            if victim is None:
                return
            vol = self._resident.pop(victim)
            self.bytes_written += save_subvolume(
                self.spill_path(victim), vol, self.params
            )
            self.files_written += 1
            self._spilled.add(victim)


def bin_endpoints(
    frame: DepthFrame,
    intr: CameraIntrinsics,
    pose: Pose,
    spacing: int,
    voxel_size: float,
) -> dict[Key, int]:
    """Histogram depth endpoints over the tile lattice.

    Each valid pixel contributes the point at its measured range along
    the unit viewing ray.  The returned keys are tile origin voxels; the
    counts drive dynamic tile placement.
    """
    rays = intr.pixel_rays() @ pose.rotation.T
    rays = rays / np.linalg.norm(rays, axis=-1, keepdims=True)
    depth = frame.data
    valid = depth > 0.0
    if not np.any(valid):
        return {}
    points = pose.translation + depth[valid, None] * rays[valid]
    block_side = spacing * voxel_size
    cells = np.floor(points / block_side).astype(np.int64)
    uniq, counts = np.unique(cells, axis=0, return_counts=True)
    return {
        (int(c[0] * spacing), int(c[1] * spacing), int(c[2] * spacing)): int(n)
        for c, n in zip(uniq, counts)
    }


@dataclass(frozen=True)
class AllocationPolicy:
    """Bounds and stickiness for dynamic tile placement.

    A candidate tile displaces the weakest allocated one only when its
    endpoint count exceeds the incumbent's by the hysteresis factor, so
    the set does not thrash when two tiles trade places at the margin.
    """

    max_volumes: int
    hysteresis: float = 1.5

    def __post_init__(self) -> None:
        if self.max_volumes < 1:
            raise ValueError("max_volumes must be at least 1")
        if self.hysteresis < 1.0:
            raise ValueError("hysteresis must be >= 1")


def update_allocation(
    current: tuple[Key, ...] | list[Key],
    counts: dict[Key, int],
    policy: AllocationPolicy,
) -> tuple[list[Key], list[Key]]:
    """Choose tiles to add and to retire given this frame's endpoint counts.

    Free slots are filled by the strongest unallocated candidates; after
    that, candidates displace incumbents weakest-first under the policy's
    hysteresis.  Ties break lexicographically so the outcome never
    depends on dict order.  Returns (added, removed).
    """
    current = list(current)
    candidates = sorted(
        ((c, k) for k, c in counts.items() if k not in current and c > 0),
        key=lambda item: (-item[0], item[1]),
    )
    added: list[Key] = []
    removed: list[Key] = []
    free = policy.max_volumes - len(current)
    while free > 0 and candidates:
        added.append(candidates.pop(0)[1])
        free -= 1
    if not candidates:
        return added, removed
    incumbents = sorted((counts.get(k, 0), k) for k in current)
    for count, key in candidates:
        if not incumbents:
            break
        low_count, low_key = incumbents[0]
        if count > policy.hysteresis * low_count:
            removed.append(low_key)
            added.append(key)
            incumbents.pop(0)
        else:
            break
    return added, removed
