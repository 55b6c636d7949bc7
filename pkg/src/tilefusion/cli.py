"""Command-line entry points.

Subcommands cover the full loop: synthesize a depth sequence, fuse one
into a surface cloud, benchmark integration scaling, check the tiled
against the single-volume pipeline, and score a cloud against the scene
that generated it.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .dataset_io import (
    load_sequence,
    save_ply,
    save_sequence,
    load_ply,
    write_stats_csv,
)
from .evaluation import (
    cloud_to_surface_stats,
    equivalence_check,
    runtime_bench,
)
from .geometry import DepthFrame, Pose
from .pipeline import STATS_HEADER, FusionPipeline
from .synth import (
    Box,
    NoiseModel,
    Plane,
    Scene,
    Sphere,
    corridor_trajectory,
    load_scene,
    orbit_trajectory,
)


def _demo_scene() -> Scene:
    return Scene(
        (
            Sphere(np.array([0.1, 0.05, 1.5]), 0.35),
            Plane(np.array([0.0, 0.5, 0.0]), np.array([0.0, -1.0, 0.0])),
            Box(np.array([-0.75, 0.1, 1.3]), np.array([-0.35, 0.5, 1.75])),
        )
    )


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "static_grid", False):
        config.dynamic = False
    if getattr(args, "dynamic", False):
        config.dynamic = True
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    errors = config.validate()
    if errors:
        raise SystemExit("invalid config:\n  " + "\n  ".join(errors))
    return config


def _cmd_run(args) -> int:
    config = _load_run_config(args)
    if args.groundtruth:
        config.use_groundtruth = True
    sequence = load_sequence(args.input, scale=config.depth_scale)
    if config.use_groundtruth and not sequence.has_poses:
        raise SystemExit(f"{args.input}: missing poses but tracking is disabled")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline = FusionPipeline(config, out / "spill")
    start = time.perf_counter()
    for i in range(len(sequence)):
        frame = sequence.read_frame(i)
        record = pipeline.step(frame, sequence.entries[i].pose)
        if args.verbose:
            print(
                f"frame {record.frame}: tracked={int(record.tracked)} "
                f"pairs={record.correspondences} volumes={record.volumes} "
                f"read={record.files_read} wrote={record.files_written}"
            )
    result = pipeline.finish()
    elapsed = time.perf_counter() - start

    save_ply(out / "cloud.ply", result.cloud.vertices, result.cloud.normals)
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for entry, pose in zip(sequence.entries, result.poses):
        t = pose.translation
        qx, qy, qz, qw = pose.quaternion()
        lines.append(
            f"{entry.timestamp:.6f} {t[0]:.9f} {t[1]:.9f} {t[2]:.9f} "
            f"{qx:.9f} {qy:.9f} {qz:.9f} {qw:.9f}"
        )
    (out / "trajectory.txt").write_text("\n".join(lines) + "\n")
    write_stats_csv(
        out / "stats.csv", STATS_HEADER, [r.as_row() for r in result.records]
    )

    print(
        f"fused {len(sequence)} frames in {elapsed:.1f}s "
        f"({len(sequence) / elapsed:.1f} fps)"
    )
    print(f"lost frames: {result.lost_frames}")
    print(f"surface points: {len(result.cloud)}")
    print(f"outputs in {out}")
    return 0


def _cmd_synth(args) -> int:
    config = _load_run_config(args)
    intr = config.intrinsics()
    scene = load_scene(args.scene) if args.scene else _demo_scene()
    if args.trajectory == "orbit":
        center = np.array([0.0, 0.0, args.orbit_radius])
        poses = orbit_trajectory(center, args.orbit_radius, args.frames)
        if args.arc < 360.0:
            full = max(args.frames, int(round(args.frames * 360.0 / args.arc)))
            poses = orbit_trajectory(center, args.orbit_radius, full)[: args.frames]
    else:
        poses = corridor_trajectory(args.length, args.frames)
    noise = None
    if args.noise_sigma > 0 or args.dropout > 0:
        noise = NoiseModel(
            sigma=args.noise_sigma,
            sigma_quad=args.noise_quad,
            dropout=args.dropout,
            seed=config.seed,
        )
    frames = []
    for i, pose in enumerate(poses):
        frame = scene.render_depth(pose, intr)
        data = frame.data.copy()
        data[data > args.max_range] = 0.0
        frame = DepthFrame(data)
        if noise is not None:
            frame = noise.apply(frame, i)
        frames.append(frame)
    save_sequence(args.out, frames, poses, fps=args.fps, scale=config.depth_scale)
    print(f"wrote {len(frames)} frames to {args.out}")
    return 0


def _cmd_bench(args) -> int:
    counts = tuple(int(c) for c in args.counts.split(","))
    result = runtime_bench(
        volume_counts=counts,
        frames=args.frames,
        voxels_per_side=args.voxels,
    )
    for count, seconds in zip(result.volume_counts, result.seconds_per_frame):
        print(f"{count:3d} volumes: {seconds * 1e3:9.3f} ms/frame")
    print(
        f"fit: {result.slope * 1e3:.3f} ms/volume + {result.intercept * 1e3:.3f} ms, "
        f"r^2 = {result.r_squared:.4f}"
    )
    if args.csv:
        write_stats_csv(
            args.csv,
            ["volumes", "seconds_per_frame"],
            list(zip(result.volume_counts, result.seconds_per_frame)),
        )
    return 0


def _cmd_equiv(args) -> int:
    report = equivalence_check(
        side_length=args.side_length,
        resolution=args.resolution,
        resident_resolution=args.resident_resolution,
        frames=args.frames,
    )
    print(f"frames checked: {report.frames} ({report.rays_checked} rays)")
    print(f"hit/miss mismatches: {report.valid_mismatches}")
    print(f"max ray distance diff: {report.max_distance_diff:.3e}")
    print(f"max tsdf diff: {report.max_tsdf_diff:.3e}")
    print(f"max weight diff: {report.max_weight_diff:.3e}")
    ok = (
        report.valid_mismatches == 0
        and report.max_distance_diff <= 1.0e-5
        and report.max_tsdf_diff <= 1.0e-6
    )
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_eval(args) -> int:
    points, _ = load_ply(args.cloud)
    scene = load_scene(args.scene) if args.scene else _demo_scene()
    stats = cloud_to_surface_stats(points, scene)
    print(f"points: {stats.count}")
    print(f"mean |distance|: {stats.mean * 1e3:.3f} mm")
    print(f"rms: {stats.rms * 1e3:.3f} mm")
    print(f"std: {stats.std * 1e3:.3f} mm")
    print(f"max: {stats.max * 1e3:.3f} mm")
    if args.csv:
        write_stats_csv(
            args.csv,
            ["count", "mean", "rms", "std", "max"],
            [[stats.count, stats.mean, stats.rms, stats.std, stats.max]],
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tilefusion",
        description="depth fusion over streamed TSDF subvolumes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="fuse a depth sequence directory")
    run.add_argument("--input", required=True, help="sequence directory")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--config", help="INI config file")
    mode = run.add_mutually_exclusive_group()
    mode.add_argument(
        "--static-grid", action="store_true", help="fixed tile grid around the origin"
    )
    mode.add_argument(
        "--dynamic", action="store_true", help="tiles follow the depth endpoints"
    )
    run.add_argument(
        "--groundtruth",
        action="store_true",
        help="use sequence poses instead of tracking",
    )
    run.add_argument("--seed", type=int, help="override config seed")
    run.add_argument("--verbose", action="store_true")
    run.set_defaults(func=_cmd_run)

    synth = sub.add_parser("synth", help="render a synthetic depth sequence")
    synth.add_argument("--out", required=True, help="sequence directory to create")
    synth.add_argument("--scene", help="scene file (default: built-in demo scene)")
    synth.add_argument("--config", help="INI config file (camera section)")
    synth.add_argument("--frames", type=int, default=60)
    synth.add_argument("--fps", type=float, default=30.0)
    synth.add_argument(
        "--trajectory", choices=("orbit", "corridor"), default="orbit"
    )
    synth.add_argument("--orbit-radius", type=float, default=1.5)
    synth.add_argument("--arc", type=float, default=360.0, help="orbit arc, degrees")
    synth.add_argument("--length", type=float, default=6.0, help="corridor length")
    synth.add_argument("--noise-sigma", type=float, default=0.0, help="meters")
    synth.add_argument(
        "--noise-quad", type=float, default=0.0, help="meters per depth^2"
    )
    synth.add_argument("--dropout", type=float, default=0.0)
    synth.add_argument(
        "--max-range", type=float, default=10.0,
        help="drop depth beyond this range, meters"
    )
    synth.add_argument("--seed", type=int)
    synth.set_defaults(func=_cmd_synth)

    bench = sub.add_parser("bench", help="integration runtime vs volume count")
    bench.add_argument("--counts", default="1,2,4,8")
    bench.add_argument("--frames", type=int, default=5)
    bench.add_argument("--voxels", type=int, default=64, help="tile voxels per side")
    bench.add_argument("--csv", help="also write measurements to CSV")
    bench.set_defaults(func=_cmd_bench)

    equiv = sub.add_parser(
        "equiv", help="tiled pipeline against the single-volume reference"
    )
    equiv.add_argument("--side-length", type=float, default=3.0)
    equiv.add_argument("--resolution", type=int, default=124)
    equiv.add_argument("--resident-resolution", type=int, default=62)
    equiv.add_argument("--frames", type=int, default=20)
    equiv.set_defaults(func=_cmd_equiv)

    ev = sub.add_parser("eval", help="score a cloud against a scene")
    ev.add_argument("--cloud", required=True, help="PLY file")
    ev.add_argument("--scene", help="scene file (default: built-in demo scene)")
    ev.add_argument("--csv", help="also write stats to CSV")
    ev.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
