"""Benchmark the numba kernels against the pure-numpy fallback.

Run with ``python -m gazechair.kernels.bench [--batch N] [--repeat R]``.
Reports per-call wall time for each kernel on shapes matching the gaze
pipeline (64x64x3 input, 16/12-filter conv layers, 64x64 frames for the
image kernels).
"""

import argparse
import time

import numpy as np

from . import numba_impl, numpy_impl


def _time(fn, *args, repeat=5):
    fn(*args)  # warm-up (also triggers JIT compilation)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run(batch=64, repeat=5, dtype=np.float64):
    rng = np.random.default_rng(0)
    x1 = rng.standard_normal((batch, 64, 64, 3)).astype(dtype)
    w1 = rng.standard_normal((3, 3, 3, 16)).astype(dtype)
    b1 = rng.standard_normal(16).astype(dtype)
    z1 = numpy_impl.conv2d_forward(x1, w1, b1)
    dz1 = rng.standard_normal(z1.shape).astype(dtype)
    frame = rng.standard_normal((64, 64))
    patch = rng.standard_normal((16, 16))
    gray = rng.integers(0, 256, size=(64, 64)).astype(np.uint8)

    y1, idx1 = numpy_impl.maxpool_forward(z1, 4)
    dy1 = rng.standard_normal(y1.shape).astype(dtype)

    cases = [
        ("conv2d_forward", (x1, w1, b1)),
        ("conv2d_backward", (x1, w1, dz1)),
        ("maxpool_forward", (z1, 4)),
        ("maxpool_backward", (dy1, idx1, z1.shape, 4)),
        ("lbp_codes", (gray,)),
        ("zncc_sliding", (frame, patch)),
    ]
    print(f"batch={batch} dtype={np.dtype(dtype).name} repeat={repeat}")
    print(f"{'kernel':<18}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, args in cases:
        t_np = _time(getattr(numpy_impl, name), *args, repeat=repeat)
        t_nb = _time(getattr(numba_impl, name), *args, repeat=repeat)
        print(f"{name:<18}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms{t_np / t_nb:>9.2f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--float32", action="store_true")
    args = ap.parse_args()
    run(batch=args.batch, repeat=args.repeat, dtype=np.float32 if args.float32 else np.float64)


if __name__ == "__main__":
    main()
