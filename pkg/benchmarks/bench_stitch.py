"""Benchmark the panorama reprojection kernel: numba @njit vs pure numpy.

The reprojection loop is the engine's hot path: every refresh cycle walks
each tile's canvas footprint, casts rays, bilinear-samples, and feather-
accumulates. This script captures a full 63-tile simulated scan and times
composition through both kernel implementations, then checks they agree.

Run:  python benchmarks/bench_stitch.py [--students N] [--px-per-deg F]
(NAMEMO_NUMBA=0 makes the packaged default the numpy path; this benchmark
imports both implementations explicitly regardless.)
"""

import argparse
import time

import numpy as np

from namemo import _kernels
from namemo.capture import Simulator, generate_scene
from namemo.config import FEASIBILITY_TEST as PROFILE
from namemo.geometry import plan_scan
from namemo.stitcher import compose_panorama


def time_kernel(tiles, plan, kernel, px_per_deg, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        pano = compose_panorama(tiles, plan, PROFILE.intrinsics,
                                px_per_deg=px_per_deg, reproject=kernel)
        times.append(time.perf_counter() - start)
    return pano, min(times), np.mean(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--students", type=int, default=161)
    parser.add_argument("--px-per-deg", type=float, default=12.0)
    parser.add_argument("--repeats", type=int, default=10)
    args = parser.parse_args()

    plan = plan_scan(PROFILE.room, PROFILE.intrinsics, PROFILE.mount,
                     PROFILE.overlap)
    scene = generate_scene(args.students, PROFILE.room, seed=1)
    sim = Simulator(scene, PROFILE.room, PROFILE.intrinsics, PROFILE.mount)
    tiles = [sim.capture_tile(pose) for pose in plan.tiles]
    mpx = (PROFILE.intrinsics.image_width_px * PROFILE.intrinsics.image_height_px
           * len(tiles) / 1e6)
    print(f"{len(tiles)} tiles ({mpx:.1f} Mpx in), "
          f"canvas at {args.px_per_deg} px/deg")

    if _kernels.reproject_tile_numba is None:
        print("numba unavailable; benchmarking numpy only")
        _, best, mean = time_kernel(tiles, plan, _kernels.reproject_tile_numpy,
                                    args.px_per_deg, args.repeats)
        print(f"numpy : best {best * 1e3:7.1f} ms   mean {mean * 1e3:7.1f} ms")
        return

    # warm the JIT before timing
    compose_panorama(tiles[:1], plan, PROFILE.intrinsics,
                     px_per_deg=args.px_per_deg,
                     reproject=_kernels.reproject_tile_numba)

    pano_nb, best_nb, mean_nb = time_kernel(
        tiles, plan, _kernels.reproject_tile_numba, args.px_per_deg, args.repeats)
    pano_np, best_np, mean_np = time_kernel(
        tiles, plan, _kernels.reproject_tile_numpy, args.px_per_deg, args.repeats)

    diff = np.abs(pano_nb.pixels.astype(int) - pano_np.pixels.astype(int)).max()
    print(f"numba : best {best_nb * 1e3:7.1f} ms   mean {mean_nb * 1e3:7.1f} ms")
    print(f"numpy : best {best_np * 1e3:7.1f} ms   mean {mean_np * 1e3:7.1f} ms")
    print(f"speedup (best/best): {best_np / best_nb:.2f}x")
    print(f"max |numba - numpy| over uint8 canvas: {diff}")
    if diff > 1:
        raise SystemExit("kernel outputs diverged beyond quantization")


if __name__ == "__main__":
    main()
