"""Benchmark the numba kernel lane against the pure-numpy fallback.

Run twice to compare:

    python3 benchmarks/bench_kernels.py
    SPOCKMIP_NO_NUMBA=1 python3 benchmarks/bench_kernels.py

The active lane is chosen at import time from the SPOCKMIP_NO_NUMBA env flag,
so a single process can only measure one lane.
"""

from __future__ import annotations

import time

import numpy as np

from spockmip import kernels


def timeit(fn, *args, repeat: int = 5, warmup: int = 2) -> float:
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    lane = "numba" if kernels.USE_NUMBA else "numpy"
    print(f"kernel lane: {lane}")
    rng = np.random.default_rng(0)

    vol = rng.random((128, 128, 128)).astype(np.float32)
    for axis in (0, 1, 2):
        dt = timeit(kernels.mip_project, vol, axis)
        print(f"mip_project 128^3 axis={axis}: {dt * 1e3:8.2f} ms")

    dt = timeit(kernels.maxpool3d_blocks, vol, 2)
    print(f"maxpool3d_blocks 128^3 k=2:  {dt * 1e3:8.2f} ms")

    img = rng.random((1024, 1024)).astype(np.float32)
    dt = timeit(kernels.maxpool2d_blocks, img, 2)
    print(f"maxpool2d_blocks 1024^2 k=2: {dt * 1e3:8.2f} ms")

    mask = np.zeros((96, 96, 96), dtype=np.uint8)
    t = np.linspace(0.0, 1.0, 400)
    points = np.stack([8 + 80 * t, 8 + 80 * t**2, 48 + 30 * np.sin(4 * t)], axis=1)
    radii = np.full(len(points), 2.5)

    def stamp():
        mask[:] = 0
        kernels.stamp_tube(mask, points, radii)

    dt = timeit(stamp)
    print(f"stamp_tube 400 pts r=2.5:    {dt * 1e3:8.2f} ms")


if __name__ == "__main__":
    main()
