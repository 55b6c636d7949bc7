"""Run configuration: one dataclass, an INI loader, and whole-file validation.

Validation gathers every problem before raising so a config file can be
fixed in one pass.  Placement has two modes: a static grid fixed at
startup, or dynamic tiles that follow the depth endpoints.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .geometry import CameraIntrinsics
from .tracking import TrackingParams
from .tsdf import FusionParams
from .volumes import AllocationPolicy


@dataclass
class RunConfig:
    # camera
    fx: float = 525.0
    fy: float = 525.0
    cx: float = 319.5
    cy: float = 239.5
    width: int = 640
    height: int = 480
    depth_scale: float = 5000.0

    # static grid: a cube of side_length meters at resolution voxels,
    # tiled by resident_resolution interior voxels per tile
    side_length: float = 3.0
    resolution: int = 124
    resident_resolution: int = 62

    # dynamic placement: equal tiles of block_voxels per side whose
    # interiors span block_side_length meters
    dynamic: bool = False
    block_voxels: int = 32
    block_side_length: float = 1.0
    max_volumes: int = 8
    hysteresis: float = 1.5

    # fusion
    truncation_scale: float = 4.0
    max_weight: float = 128.0

    # residency
    max_resident: int = 8

    # tracking
    use_groundtruth: bool = False
    max_distance: float = 0.10
    max_angle_deg: float = 20.0
    iterations: tuple[int, ...] = (10, 5, 4)
    min_correspondences: int = 1000

    seed: int = 0

    def validate(self) -> list[str]:
        """Collect every invalid field; empty list means usable."""
        errors = []
        if self.fx <= 0 or self.fy <= 0:
            errors.append("camera: focal lengths must be positive")
        if self.width < 2 or self.height < 2:
            errors.append("camera: image must be at least 2x2")
        if self.depth_scale <= 0:
            errors.append("camera: depth_scale must be positive")
        if self.side_length <= 0:
            errors.append("volume: side_length must be positive")
        if self.resolution < 1:
            errors.append("volume: resolution must be positive")
        if not 1 <= self.resident_resolution <= self.resolution:
            errors.append(
                "volume: resident_resolution must be in [1, resolution]"
            )
        if self.block_voxels < 4:
            errors.append("placement: block_voxels must be at least 4")
        if self.block_side_length <= 0:
            errors.append("placement: block_side_length must be positive")
        if self.max_volumes < 1:
            errors.append("placement: max_volumes must be at least 1")
        if self.hysteresis < 1.0:
            errors.append("placement: hysteresis must be >= 1")
        if self.truncation_scale <= 0:
            errors.append("fusion: truncation_scale must be positive")
        if self.max_weight <= 0:
            errors.append("fusion: max_weight must be positive")
        if self.max_resident < 1:
            errors.append("residency: max_resident must be at least 1")
        if self.max_distance <= 0:
            errors.append("tracking: max_distance must be positive")
        if not 0 < self.max_angle_deg < 90:
            errors.append("tracking: max_angle_deg must be in (0, 90)")
        if not self.iterations or any(i < 1 for i in self.iterations):
            errors.append("tracking: iterations must all be >= 1")
        if self.min_correspondences < 6:
            errors.append("tracking: min_correspondences must be at least 6")
        return errors

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy,
            width=self.width, height=self.height,
        )

    def fusion_params(self, voxel_size: float) -> FusionParams:
        return FusionParams.for_voxel_size(
            voxel_size, truncation_scale=self.truncation_scale,
            max_weight=self.max_weight,
        )

    def tracking_params(self) -> TrackingParams:
        return TrackingParams(
            max_distance=self.max_distance,
            max_angle_deg=self.max_angle_deg,
            iterations=tuple(self.iterations),
            min_correspondences=self.min_correspondences,
        )

    def allocation_policy(self) -> AllocationPolicy:
        return AllocationPolicy(
            max_volumes=self.max_volumes, hysteresis=self.hysteresis
        )


_SECTIONS = {
    "camera": ("fx", "fy", "cx", "cy", "width", "height", "depth_scale"),
    "volume": ("side_length", "resolution", "resident_resolution"),
    "placement": (
        "dynamic", "block_voxels", "block_side_length", "max_volumes", "hysteresis",
    ),
    "fusion": ("truncation_scale", "max_weight"),
    "residency": ("max_resident",),
    "tracking": (
        "use_groundtruth", "max_distance", "max_angle_deg",
        "iterations", "min_correspondences",
    ),
    "run": ("seed",),
}


def _parse_value(name: str, text: str, kind, errors: list[str]):
    try:
        if kind is bool:
            lowered = text.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(int(part) for part in text.replace(",", " ").split())
        raise AssertionError(kind)
    except ValueError:
        errors.append(f"{name}: cannot parse {text!r} as {kind.__name__}")
        return None


def load_config(path) -> RunConfig:
    """Read an INI file into a RunConfig; unknown keys are errors too."""
    path = Path(path)
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)

    config = RunConfig()
    kinds = {f.name: (tuple if f.name == "iterations" else type(getattr(config, f.name)))
             for f in fields(RunConfig)}
    errors: list[str] = []
    for section in parser.sections():
        if section not in _SECTIONS:
            errors.append(f"unknown section [{section}]")
            continue
        allowed = _SECTIONS[section]
        for key, text in parser.items(section):
            if key not in allowed:
                errors.append(f"[{section}] unknown key {key!r}")
                continue
            value = _parse_value(f"[{section}] {key}", text, kinds[key], errors)
            if value is not None:
                setattr(config, key, value)
    errors.extend(config.validate())
    if errors:
        raise ValueError(f"{path}:\n  " + "\n  ".join(errors))
    return config


def save_config(path, config: RunConfig) -> None:
    """Write a RunConfig as INI, one section per concern."""
    parser = configparser.ConfigParser()
    for section, keys in _SECTIONS.items():
        parser[section] = {}
        for key in keys:
            value = getattr(config, key)
            if isinstance(value, tuple):
                parser[section][key] = ",".join(str(v) for v in value)
            else:
                parser[section][key] = str(value)
    with open(Path(path), "w") as fh:
        parser.write(fh)
