"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run: python benchmarks/bench_kernels.py [--quick]

The same comparison can be made end to end by timing the test suite with
TEXTKNN_DISABLE_NUMBA=1, which forces the numpy paths everywhere.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from textknn import _kernels as K


def _time(fn, *args, warmup=1, runs=5):
    for _ in range(warmup):
        fn(*args)
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return np.mean(times), np.std(times)


def _report(label, numba_stats, numpy_stats):
    nb_mean, nb_std = numba_stats
    np_mean, np_std = numpy_stats
    speedup = np_mean / nb_mean if nb_mean > 0 else float("inf")
    print(f"{label}")
    print(f"  numba: {nb_mean * 1e3:8.2f} +- {nb_std * 1e3:.2f} ms")
    print(f"  numpy: {np_mean * 1e3:8.2f} +- {np_std * 1e3:.2f} ms")
    print(f"  speedup: {speedup:.2f}x\n")


def bench_knn(n, dim, k, runs):
    rng = np.random.default_rng(0)
    v = rng.normal(size=(n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v = np.ascontiguousarray(v)
    nb = _time(K.knn_topk_numba, v, k, runs=runs)
    base = _time(K.knn_topk_numpy, v, k, runs=runs)
    _report(f"knn_topk: n={n} dim={dim} k={k}", nb, base)


def bench_msd(n_items, raters_per_item, runs):
    rng = np.random.default_rng(1)
    sizes = rng.integers(2, raters_per_item, size=n_items)
    starts = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    users = np.concatenate(
        [np.sort(rng.choice(5000, size=s, replace=False)) for s in sizes]
    ).astype(np.int64)
    ratings = rng.integers(1, 6, size=int(sizes.sum())).astype(np.float64)
    nb = _time(K.msd_pairs_numba, starts, users, ratings, runs=runs)
    base = _time(K.msd_pairs_numpy, starts, users, ratings, runs=runs)
    total_pairs = int(np.sum(sizes * (sizes - 1) // 2))
    _report(f"msd_pairs: {n_items} items, {total_pairs} pairs", nb, base)


def bench_sgd(n_ratings, factors, epochs, runs):
    rng = np.random.default_rng(2)
    n_users, n_items = 800, 400
    u = rng.integers(0, n_users, size=n_ratings).astype(np.int64)
    i = rng.integers(0, n_items, size=n_ratings).astype(np.int64)
    r = rng.integers(1, 6, size=n_ratings).astype(np.float64)
    mu = float(r.mean())

    def run(impl):
        bu, bi = np.zeros(n_users), np.zeros(n_items)
        p = np.random.default_rng(3).normal(0, 0.1, size=(n_users, factors))
        q = np.random.default_rng(4).normal(0, 0.1, size=(n_items, factors))
        impl(u, i, r, bu, bi, p, q, mu, 0.005, 0.02, epochs)

    nb = _time(lambda: run(K.sgd_epochs_numba), runs=runs)
    base = _time(lambda: run(K.sgd_epochs_numpy), runs=max(1, runs // 2))
    _report(f"sgd_epochs: {n_ratings} ratings, f={factors}, {epochs} epochs", nb, base)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller sizes, fewer runs")
    args = parser.parse_args()
    if not K.HAS_NUMBA:
        print("numba is not importable; nothing to compare")
        return
    runs = 3 if args.quick else 5
    print(f"numba available: {K.HAS_NUMBA}; dispatch enabled: {K.NUMBA_ENABLED}\n")
    if args.quick:
        bench_knn(1500, 64, 10, runs)
        bench_msd(400, 30, runs)
        bench_sgd(20_000, 50, 5, runs)
    else:
        bench_knn(4000, 128, 10, runs)
        bench_msd(1000, 40, runs)
        bench_sgd(100_000, 100, 10, runs)


if __name__ == "__main__":
    main()
