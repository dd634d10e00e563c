"""Hot numeric kernels.

Each kernel has a numba @njit build and a pure-numpy fallback. The numba
build is used when numba imports cleanly and TEXTKNN_DISABLE_NUMBA is not
set; the env flag forces the numpy path (useful for debugging and for the
benchmark in benchmarks/bench_kernels.py). Both paths implement identical
tie rules, so graph and similarity outputs do not depend on the path.
"""

from __future__ import annotations

import os

import numpy as np


def _env_disabled() -> bool:
    return os.environ.get("TEXTKNN_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

NUMBA_ENABLED = HAS_NUMBA and not _env_disabled()

_KNN_BLOCK = 512


def knn_topk_numpy(vectors: np.ndarray, k: int):
    """Exact k nearest neighbors by cosine among unit vectors.

    Returns (neighbors, sims): int64 and float64 arrays of shape
    (n, min(k, n-1)), each row sorted by descending similarity with ties
    broken by ascending neighbor index. Self matches are excluded.
    """
    v = np.ascontiguousarray(vectors, dtype=np.float64)
    n = v.shape[0]
    kk = min(k, n - 1) if n > 0 else 0
    if kk <= 0:
        return np.empty((n, 0), np.int64), np.empty((n, 0), np.float64)
    nbr = np.empty((n, kk), np.int64)
    sim = np.empty((n, kk), np.float64)
    for lo in range(0, n, _KNN_BLOCK):
        hi = min(lo + _KNN_BLOCK, n)
        s = v[lo:hi] @ v.T
        np.clip(s, -1.0, 1.0, out=s)
        s[np.arange(hi - lo), np.arange(lo, hi)] = -np.inf
        # stable argsort of -s: descending similarity, ties by ascending id
        order = np.argsort(-s, axis=1, kind="stable")[:, :kk]
        nbr[lo:hi] = order
        sim[lo:hi] = np.take_along_axis(s, order, axis=1)
    return nbr, sim


def msd_pairs_numpy(starts: np.ndarray, users: np.ndarray, ratings: np.ndarray):
    """Emit (u, v, squared rating difference) for every pair of raters of
    every item. `users` must be sorted ascending within each item block so
    u < v holds per pair."""
    us, vs, sq = [], [], []
    for j in range(starts.size - 1):
        lo, hi = int(starts[j]), int(starts[j + 1])
        m = hi - lo
        if m < 2:
            continue
        iu, iv = np.triu_indices(m, 1)
        a = users[lo:hi]
        r = ratings[lo:hi]
        us.append(a[iu])
        vs.append(a[iv])
        d = r[iu] - r[iv]
        sq.append(d * d)
    if not us:
        e = np.empty(0, np.int64)
        return e, e.copy(), np.empty(0, np.float64)
    return (
        np.concatenate(us).astype(np.int64),
        np.concatenate(vs).astype(np.int64),
        np.concatenate(sq).astype(np.float64),
    )


def sgd_epochs_numpy(u_idx, i_idx, r, bu, bi, p, q, mu, lr, reg, epochs):
    """Funk-style SGD on mu + b_u + b_i + p_u.q_i, in-place, fixed order."""
    for _ in range(epochs):
        for t in range(r.size):
            uu = u_idx[t]
            ii = i_idx[t]
            err = r[t] - (mu + bu[uu] + bi[ii] + float(np.dot(p[uu], q[ii])))
            pu_old = p[uu].copy()
            bu[uu] += lr * (err - reg * bu[uu])
            bi[ii] += lr * (err - reg * bi[ii])
            p[uu] += lr * (err * q[ii] - reg * p[uu])
            q[ii] += lr * (err * pu_old - reg * q[ii])


if HAS_NUMBA:

    @njit(cache=True)
    def knn_topk_numba(vectors, k):  # pragma: no cover - exercised via dispatch
        n, d = vectors.shape
        kk = min(k, n - 1) if n > 0 else 0
        if kk <= 0:
            return np.empty((n, 0), np.int64), np.empty((n, 0), np.float64)
        nbr = np.empty((n, kk), np.int64)
        sim = np.empty((n, kk), np.float64)
        for h in range(n):
            hv = vectors[h]
            best_s = np.full(kk, -np.inf)
            best_i = np.full(kk, np.int64(n))
            for t in range(n):
                if t == h:
                    continue
                s = 0.0
                for j in range(d):
                    s += hv[j] * vectors[t, j]
                if s > 1.0:
                    s = 1.0
                elif s < -1.0:
                    s = -1.0
                last = kk - 1
                if s < best_s[last] or (s == best_s[last] and t > best_i[last]):
                    continue
                pos = last
                while pos > 0 and (
                    s > best_s[pos - 1] or (s == best_s[pos - 1] and t < best_i[pos - 1])
                ):
                    best_s[pos] = best_s[pos - 1]
                    best_i[pos] = best_i[pos - 1]
                    pos -= 1
                best_s[pos] = s
                best_i[pos] = t
            nbr[h] = best_i
            sim[h] = best_s
        return nbr, sim

    @njit(cache=True)
    def msd_pairs_numba(starts, users, ratings):  # pragma: no cover
        total = 0
        for j in range(starts.size - 1):
            m = starts[j + 1] - starts[j]
            total += m * (m - 1) // 2
        us = np.empty(total, np.int64)
        vs = np.empty(total, np.int64)
        sq = np.empty(total, np.float64)
        w = 0
        for j in range(starts.size - 1):
            lo = starts[j]
            hi = starts[j + 1]
            for a in range(lo, hi):
                for b in range(a + 1, hi):
                    us[w] = users[a]
                    vs[w] = users[b]
                    d = ratings[a] - ratings[b]
                    sq[w] = d * d
                    w += 1
        return us, vs, sq

    @njit(cache=True)
    def sgd_epochs_numba(u_idx, i_idx, r, bu, bi, p, q, mu, lr, reg, epochs):  # pragma: no cover
        f = p.shape[1]
        for _ in range(epochs):
            for t in range(r.size):
                uu = u_idx[t]
                ii = i_idx[t]
                dot = 0.0
                for j in range(f):
                    dot += p[uu, j] * q[ii, j]
                err = r[t] - (mu + bu[uu] + bi[ii] + dot)
                bu[uu] += lr * (err - reg * bu[uu])
                bi[ii] += lr * (err - reg * bi[ii])
                for j in range(f):
                    puj = p[uu, j]
                    p[uu, j] += lr * (err * q[ii, j] - reg * puj)
                    q[ii, j] += lr * (err * puj - reg * q[ii, j])


if NUMBA_ENABLED:
    knn_topk = knn_topk_numba
    msd_pairs = msd_pairs_numba
    sgd_epochs = sgd_epochs_numba
else:
    knn_topk = knn_topk_numpy
    msd_pairs = msd_pairs_numpy
    sgd_epochs = sgd_epochs_numpy


def warmup() -> None:
    """Trigger JIT compilation of the dispatched kernels on tiny inputs."""
    v = np.eye(3, dtype=np.float64)
    knn_topk(v, 2)
    starts = np.array([0, 2], dtype=np.int64)
    msd_pairs(starts, np.array([0, 1], dtype=np.int64), np.array([1.0, 2.0]))
    sgd_epochs(
        np.array([0], dtype=np.int64),
        np.array([0], dtype=np.int64),
        np.array([3.0]),
        np.zeros(1),
        np.zeros(1),
        np.zeros((1, 2)),
        np.zeros((1, 2)),
        3.0,
        0.005,
        0.02,
        1,
    )
