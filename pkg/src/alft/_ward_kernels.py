"""Merge-loop kernels for Ward agglomerative clustering.

Two interchangeable implementations of the same greedy merge sequence:
a numba ``@njit`` kernel (default) and a vectorized numpy twin. Select
with the environment variable ``ALFT_NO_NUMBA=1`` (or automatically if
numba is unavailable). Both produce identical merges: the pair with the
smallest Ward increment wins, ties broken by the lexicographically
smallest (i, j) index pair, and the merged cluster keeps the smaller
index. ``benchmarks/bench_ward.py`` compares the two.

The kernels consume a dense symmetric matrix of pairwise Ward increments
(0.5 * squared Euclidean distance for singletons) and return a parent
array encoding the merge forest; row i's nearest neighbor among columns
j > i is cached so a merge step costs O(n) plus occasional row rescans.
"""

from __future__ import annotations

import os

import numpy as np

_INF = np.inf


def _merge_numpy(d: np.ndarray, size: np.ndarray, k: int) -> np.ndarray:
    n = d.shape[0]
    active = np.ones(n, dtype=bool)
    parent = np.full(n, -1, dtype=np.int64)
    nn_dist = np.full(n, _INF)
    nn_idx = np.full(n, -1, dtype=np.int64)

    def recompute(i: int) -> None:
        row = np.where(active[i + 1 :], d[i, i + 1 :], _INF)
        if row.size:
            rel = int(np.argmin(row))
            if row[rel] < _INF:
                nn_dist[i], nn_idx[i] = row[rel], i + 1 + rel
                return
        nn_dist[i], nn_idx[i] = _INF, -1

    for i in range(n - 1):
        recompute(i)

    for _ in range(n - k):
        i = int(np.argmin(nn_dist))
        j = int(nn_idx[i])
        dij = nn_dist[i]

        others = np.flatnonzero(active)
        others = others[(others != i) & (others != j)]
        szi, szj = float(size[i]), float(size[j])
        szc = size[others].astype(np.float64)
        new = ((szi + szc) * d[i, others] + (szj + szc) * d[j, others] - szc * dij) / (
            szi + szj + szc
        )
        d[i, others] = new
        d[others, i] = new

        size[i] += size[j]
        active[j] = False
        parent[j] = i
        nn_dist[j], nn_idx[j] = _INF, -1

        stale = np.flatnonzero(active & ((nn_idx == i) | (nn_idx == j)))
        for c in stale:
            recompute(int(c))
        recompute(i)

        below = np.flatnonzero(active[:i])
        if below.size:
            cand = d[below, i]
            better = cand < nn_dist[below]
            tied = (cand == nn_dist[below]) & (i < nn_idx[below])
            take = better | tied
            nn_dist[below[better]] = cand[better]
            nn_idx[below[take]] = i
    return parent


try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag instead
    HAVE_NUMBA = False

if HAVE_NUMBA:

    @njit(cache=True)
    def _recompute_nb(d, active, nn_dist, nn_idx, i):
        n = d.shape[0]
        best = _INF
        best_j = -1
        for j in range(i + 1, n):
            if active[j] and d[i, j] < best:
                best = d[i, j]
                best_j = j
        nn_dist[i] = best
        nn_idx[i] = best_j

    @njit(cache=True)
    def _merge_numba(d, size, k):
        n = d.shape[0]
        active = np.ones(n, dtype=np.bool_)
        parent = np.full(n, -1, dtype=np.int64)
        nn_dist = np.full(n, _INF)
        nn_idx = np.full(n, -1, dtype=np.int64)

        for i in range(n - 1):
            _recompute_nb(d, active, nn_dist, nn_idx, i)

        for _ in range(n - k):
            i = 0
            best = _INF
            for c in range(n):
                if nn_dist[c] < best:
                    best = nn_dist[c]
                    i = c
            j = nn_idx[i]
            dij = nn_dist[i]

            szi = float(size[i])
            szj = float(size[j])
            for c in range(n):
                if active[c] and c != i and c != j:
                    szc = float(size[c])
                    new = (
                        (szi + szc) * d[i, c] + (szj + szc) * d[j, c] - szc * dij
                    ) / (szi + szj + szc)
                    d[i, c] = new
                    d[c, i] = new

            size[i] += size[j]
            active[j] = False
            parent[j] = i
            nn_dist[j] = _INF
            nn_idx[j] = -1

            for c in range(n):
                if active[c] and (nn_idx[c] == i or nn_idx[c] == j):
                    _recompute_nb(d, active, nn_dist, nn_idx, c)
            _recompute_nb(d, active, nn_dist, nn_idx, i)

            for c in range(i):
                if active[c]:
                    cand = d[c, i]
                    if cand < nn_dist[c]:
                        nn_dist[c] = cand
                        nn_idx[c] = i
                    elif cand == nn_dist[c] and i < nn_idx[c]:
                        nn_idx[c] = i
        return parent


def _use_numba() -> bool:
    flag = os.environ.get("ALFT_NO_NUMBA", "").strip()
    return HAVE_NUMBA and flag in ("", "0")


if _use_numba():
    merge_parents = _merge_numba
    BACKEND = "numba"
else:
    merge_parents = _merge_numpy
    BACKEND = "numpy"


def numpy_merge_parents(d: np.ndarray, size: np.ndarray, k: int) -> np.ndarray:
    """Fallback path, exposed directly for benchmarks and equivalence tests."""
    return _merge_numpy(d, size, k)
