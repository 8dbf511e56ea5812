"""Benchmark the jitted kernels against their pure-numpy fallbacks.

Run: python3 scripts/bench_kernels.py [n_points]
The jitted path is what ships by default; ACTIVEST_NO_NUMBA=1 selects the
numpy fallbacks at import time. This script times both in one process.
"""

import sys
import time

import numpy as np

from activest import _kernels
from activest.cloud import knn_indices

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def timeit(fn, *args, repeat=20):
    fn(*args)  # warm-up / compile
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 8000
    rng = np.random.default_rng(0)
    positions = rng.uniform(0, 7, (n, 3))
    positions[:, 2] *= 0.3
    neighbors, distances = knn_indices(positions, 16)
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    colors = rng.random((n, 3))
    cov = _kernels._local_covariances_numpy(positions, neighbors)
    probs = rng.random((n, 6))
    seg = rng.integers(0, n // 40, n)

    cases = [
        ("local_covariances", _kernels._local_covariances_loop,
         _kernels._local_covariances_numpy, (positions, neighbors)),
        ("shape_descriptors", _kernels._shape_descriptors_loop,
         _kernels._shape_descriptors_numpy, (positions, neighbors)),
        ("eigvals_sym3_batch", _kernels._eigvals_sym3_batch_loop,
         _kernels._eigvals_sym3_batch_numpy, (cov,)),
        ("segment_sums", _kernels._segment_sums_loop,
         _kernels._segment_sums_numpy, (probs, seg, n // 40)),
        ("region_grow", _kernels._region_grow_loop, _kernels._region_grow_loop,
         (neighbors, distances, normals, colors, 0.9, 0.03, 0.3)),
    ]

    print(f"n = {n} points, k = 16 neighbors; best of 20 runs")
    print(f"{'kernel':22s} {'numba (ms)':>12s} {'numpy (ms)':>12s} {'speedup':>9s}")
    for name, loop_fn, numpy_fn, args in cases:
        t_numpy = timeit(numpy_fn, *args, repeat=5 if name == "region_grow" else 20)
        if HAVE_NUMBA:
            jitted = njit(cache=True)(loop_fn)
            t_numba = timeit(jitted, *args)
            print(f"{name:22s} {1e3 * t_numba:12.3f} {1e3 * t_numpy:12.3f} "
                  f"{t_numpy / t_numba:8.1f}x")
        else:
            print(f"{name:22s} {'n/a':>12s} {1e3 * t_numpy:12.3f}")
    if not HAVE_NUMBA:
        print("numba unavailable; only the fallback path was timed")


if __name__ == "__main__":
    main()
