"""Benchmark the compiled kernels against their pure numpy fallbacks.

Covers the two hot loops: per-query CMC/mAP ranking and the k-means
assignment step. Run from the repository root:

    python3 benchmarks/bench_core.py [--queries 2000] [--gallery 8000]
"""

import argparse
import time

import numpy as np

from sctreid._core import compiled_kmeans_assign, compiled_rank
from sctreid.clustering import assign_points_pure
from sctreid.evaluation import _rank_pure, evaluate


def _timeit(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_rank(num_q, num_g, seed=0):
    rng = np.random.default_rng(seed)
    dist = rng.random((num_q, num_g))
    q_ids = rng.integers(0, 100, size=num_q)
    q_cams = rng.integers(0, 6, size=num_q)
    g_ids = np.concatenate([np.arange(100), rng.integers(0, 100, size=num_g - 100)])
    g_cams = rng.integers(0, 6, size=num_g)
    order = np.argsort(dist, axis=1, kind="stable").astype(np.int64)
    max_rank = 50

    kernel = compiled_rank()
    t_pure = _timeit(lambda: _rank_pure(order, q_ids, q_cams, g_ids, g_cams,
                                        max_rank))
    row = [f"rank      {num_q}x{num_g}", f"pure {t_pure * 1e3:9.1f} ms"]
    if kernel is not None:
        t_comp = _timeit(lambda: kernel(order, q_ids, q_cams, g_ids, g_cams,
                                        max_rank))
        row += [f"compiled {t_comp * 1e3:9.1f} ms",
                f"speedup {t_pure / t_comp:6.1f}x"]
        a = evaluate(dist, q_ids, q_cams, g_ids, g_cams, impl="pure")
        b = evaluate(dist, q_ids, q_cams, g_ids, g_cams, impl="compiled")
        assert abs(a.map - b.map) < 1e-12, "implementations disagree"
    else:
        row += ["compiled unavailable"]
    print("  ".join(row))


def bench_kmeans_assign(num_points, dim, k, seed=0):
    rng = np.random.default_rng(seed)
    points = rng.normal(size=(num_points, dim))
    centroids = rng.normal(size=(k, dim))

    kernel = compiled_kmeans_assign()
    t_pure = _timeit(lambda: assign_points_pure(points, centroids))
    row = [f"kmeans    {num_points}x{dim} k={k}", f"pure {t_pure * 1e3:9.1f} ms"]
    if kernel is not None:
        t_comp = _timeit(lambda: kernel(points, centroids))
        row += [f"compiled {t_comp * 1e3:9.1f} ms",
                f"speedup {t_pure / t_comp:6.1f}x"]
        l_pure, _ = assign_points_pure(points, centroids)
        l_comp, _ = kernel(points, centroids)
        assert np.array_equal(l_pure, l_comp), "implementations disagree"
    else:
        row += ["compiled unavailable"]
    print("  ".join(row))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--queries", type=int, default=2000)
    parser.add_argument("--gallery", type=int, default=8000)
    parser.add_argument("--points", type=int, default=20000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--clusters", type=int, default=100)
    args = parser.parse_args()
    print(f"compiled kernels available: rank={compiled_rank() is not None} "
          f"kmeans={compiled_kmeans_assign() is not None}")
    bench_rank(args.queries, args.gallery)
    bench_kmeans_assign(args.points, args.dim, args.clusters)


if __name__ == "__main__":
    main()
