"""Benchmark the mixture-update kernel: numba @njit vs pure numpy.

Runs the same frame sequence through both implementations and reports
per-frame timings plus the speedup. The first numba call includes JIT
compilation and is timed separately.

Usage:
    python benchmarks/bench_kernels.py [--frames 60] [--size 960x540]
"""

import argparse
import time

import numpy as np

from shadowpipe.kernels import (
    HAS_NUMBA, gmm_update_numba, gmm_update_numpy, make_gmm_state,
)

PARAMS = dict(alpha=0.02, var_threshold=16.0, background_ratio=0.9,
              init_variance=225.0, min_variance=4.0)


def make_frames(n, height, width, seed=0):
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n):
        frame = 128 + rng.normal(0, 2, (height, width, 1))
        x = (17 * i) % max(1, width - 80)
        frame[height // 3:height // 3 + 60, x:x + 80] = 250
        frames.append(frame.astype(np.float32))
    return frames


def run(update, frames, k_modes=5):
    height, width = frames[0].shape[:2]
    state = make_gmm_state(height, width, k_modes, 1)
    timings = []
    total_fg = 0
    for frame in frames:
        t0 = time.perf_counter()
        fg = update(*state, frame, **PARAMS)
        timings.append(time.perf_counter() - t0)
        total_fg += int(fg.sum())
    return timings, total_fg, state


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=60)
    parser.add_argument("--size", default="960x540")
    args = parser.parse_args()
    width, height = (int(v) for v in args.size.split("x"))

    frames = make_frames(args.frames, height, width)
    print(f"{args.frames} frames at {width}x{height}, K=5 modes")

    np_times, np_fg, np_state = run(gmm_update_numpy, frames)
    print(f"numpy : {1000 * np.mean(np_times):8.2f} ms/frame "
          f"(total {sum(np_times):.2f}s)")

    if not HAS_NUMBA:
        print("numba : not installed, skipping")
        return

    nb_times, nb_fg, nb_state = run(gmm_update_numba, frames)
    print(f"numba : {1000 * np.mean(nb_times[1:]):8.2f} ms/frame "
          f"(total {sum(nb_times[1:]):.2f}s, first call "
          f"{nb_times[0]:.2f}s incl. JIT)")
    print(f"speedup (steady state): "
          f"{np.mean(np_times) / np.mean(nb_times[1:]):.1f}x")

    assert np_fg == nb_fg, "backends disagree on foreground pixels"
    for a, b in zip(np_state, nb_state):
        assert np.allclose(a, b, atol=1e-5), "backends diverged"
    print(f"agreement check: identical masks ({np_fg} fg pixels), "
          f"states match to 1e-5")


if __name__ == "__main__":
    main()
