"""Per-frame integration cost against the number of tiles touched."""

import argparse

from tilefusion.dataset_io import write_stats_csv
from tilefusion.evaluation import runtime_bench


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--counts", default="1,2,4,8,16")
    parser.add_argument("--frames", type=int, default=8)
    parser.add_argument("--voxels", type=int, default=64)
    parser.add_argument("--csv", help="write the measured points here")
    args = parser.parse_args()

    counts = tuple(int(c) for c in args.counts.split(","))
    result = runtime_bench(
        volume_counts=counts, frames=args.frames, voxels_per_side=args.voxels
    )
    for count, sec in zip(result.volume_counts, result.seconds_per_frame):
        bar = "#" * int(round(sec / max(result.seconds_per_frame) * 40))
        print(f"{count:4d} tiles {sec * 1e3:9.2f} ms/frame  {bar}")
    print(f"\nlinear fit: {result.slope * 1e3:.3f} ms per tile "
          f"+ {result.intercept * 1e3:.3f} ms, r^2 = {result.r_squared:.4f}")
    if args.csv:
        write_stats_csv(
            args.csv,
            ["volumes", "seconds_per_frame"],
            list(zip(result.volume_counts, result.seconds_per_frame)),
        )
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
