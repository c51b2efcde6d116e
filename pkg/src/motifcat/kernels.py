"""Hot numeric kernels: core distances and the mutual-reachability MST.

Both kernels are O(n^2) in points and dominate clustering runtime at corpus
scale, so they carry numba-compiled implementations with pure-numpy
fallbacks. Selection: numba is used when importable unless the
MOTIFCAT_DISABLE_NUMBA environment variable is set to a non-empty value
other than "0". Both implementations are always importable so they can be
benchmarked against each other (see benchmarks/bench_kernels.py).

Distance conventions shared by both paths:

- core distance of a point = the k-th smallest euclidean distance in its
  row, counting the self-distance of zero (so k=1 gives 0 for every point);
  k is clamped to n for tiny inputs.
- mutual reachability of (i, j) = max(core_i, core_j, d_ij).
- MST edges are grown with Prim's algorithm from point 0, computing
  distance rows on the fly (O(n) memory); ties in the next-vertex choice
  resolve to the lowest point index.
- duplicate points are at distance exactly 0.0 on both paths. The numpy
  path computes squared distances via the ||a||^2 + ||b||^2 - 2ab
  expansion (BLAS), whose accumulation noise would otherwise leave
  duplicates at ~sqrt(eps)*|x| instead of 0; values below the expansion's
  own error floor are therefore snapped to zero. Downstream this matters:
  a zero merge distance means an infinite cluster lambda, and the two
  paths must agree on where infinities arise.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag instead
    numba = None
    HAS_NUMBA = False


def _numba_disabled_by_env() -> bool:
    return os.environ.get("MOTIFCAT_DISABLE_NUMBA", "") not in ("", "0")


USE_NUMBA = HAS_NUMBA and not _numba_disabled_by_env()

_CORE_BLOCK_ROWS = 1024  # bounds the numpy path's pairwise block to ~tens of MB

_EPS = np.finfo(np.float64).eps


def _expansion_floor(dim: int) -> float:
    """Relative error floor of the ||a||^2 + ||b||^2 - 2ab expansion.

    Squared distances measured below floor * (||a||^2 + ||b||^2) are
    indistinguishable from zero at double precision, so they are snapped
    to exact zero — keeping duplicate points at distance 0.0, identical
    to the compiled path's direct difference summation.
    """
    return 4.0 * (dim + 2) * _EPS


def core_distances_numpy(X: np.ndarray, k: int) -> np.ndarray:
    """k-th smallest distance per row (self included), blocked over rows."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    kk = min(k, n)
    sq = np.einsum("ij,ij->i", X, X)
    floor = _expansion_floor(X.shape[1]) if X.size else 0.0
    out = np.empty(n)
    for start in range(0, n, _CORE_BLOCK_ROWS):
        stop = min(start + _CORE_BLOCK_ROWS, n)
        scale = sq[start:stop, None] + sq[None, :]
        d2 = scale - 2.0 * (X[start:stop] @ X.T)
        d2[d2 < floor * scale] = 0.0
        d2[np.arange(stop - start), np.arange(start, stop)] = 0.0
        block = np.sqrt(d2)
        out[start:stop] = np.partition(block, kk - 1, axis=1)[:, kk - 1]
    return out


def prim_mst_numpy(X: np.ndarray, core: np.ndarray) -> np.ndarray:
    """MST over mutual reachability; returns (n-1, 3) rows [u, v, weight]."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    edges = np.empty((max(n - 1, 0), 3))
    if n <= 1:
        return edges
    sq = np.einsum("ij,ij->i", X, X)
    floor = _expansion_floor(X.shape[1])
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    in_tree[0] = True
    cur = 0
    for t in range(n - 1):
        scale = sq + sq[cur]
        d2 = scale - 2.0 * (X @ X[cur])
        d2[d2 < floor * scale] = 0.0
        d2[cur] = 0.0
        mreach = np.maximum(np.maximum(np.sqrt(d2), core), core[cur])
        upd = ~in_tree & (mreach < best)
        best[upd] = mreach[upd]
        parent[upd] = cur
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        edges[t, 0] = parent[nxt]
        edges[t, 1] = nxt
        edges[t, 2] = cand[nxt]
        in_tree[nxt] = True
        cur = nxt
    return edges


if HAS_NUMBA:

    @numba.njit(cache=True)
    def _core_distances_jit(X, k):  # pragma: no cover - compiled
        n, d = X.shape
        kk = min(k, n)
        out = np.empty(n)
        row = np.empty(n)
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for f in range(d):
                    diff = X[i, f] - X[j, f]
                    acc += diff * diff
                row[j] = np.sqrt(acc)
            out[i] = np.partition(row, kk - 1)[kk - 1]
        return out

    @numba.njit(cache=True)
    def _prim_mst_jit(X, core):  # pragma: no cover - compiled
        n, d = X.shape
        edges = np.empty((max(n - 1, 0), 3))
        if n <= 1:
            return edges
        in_tree = np.zeros(n, dtype=numba.boolean)
        best = np.full(n, np.inf)
        parent = np.full(n, -1, dtype=np.int64)
        in_tree[0] = True
        cur = 0
        for t in range(n - 1):
            ccore = core[cur]
            for j in range(n):
                if in_tree[j]:
                    continue
                acc = 0.0
                for f in range(d):
                    diff = X[cur, f] - X[j, f]
                    acc += diff * diff
                m = np.sqrt(acc)
                if ccore > m:
                    m = ccore
                if core[j] > m:
                    m = core[j]
                if m < best[j]:
                    best[j] = m
                    parent[j] = cur
            nxt = -1
            weight = np.inf
            for j in range(n):
                if not in_tree[j] and best[j] < weight:
                    weight = best[j]
                    nxt = j
            edges[t, 0] = parent[nxt]
            edges[t, 1] = nxt
            edges[t, 2] = weight
            in_tree[nxt] = True
            cur = nxt
        return edges

    def core_distances_numba(X: np.ndarray, k: int) -> np.ndarray:
        return _core_distances_jit(np.ascontiguousarray(X, dtype=np.float64), k)

    def prim_mst_numba(X: np.ndarray, core: np.ndarray) -> np.ndarray:
        return _prim_mst_jit(
            np.ascontiguousarray(X, dtype=np.float64),
            np.ascontiguousarray(core, dtype=np.float64),
        )

else:  # pragma: no cover - numba always present in CI; env flag covers the path
    core_distances_numba = None
    prim_mst_numba = None


def core_distances(X: np.ndarray, k: int) -> np.ndarray:
    if USE_NUMBA:
        return core_distances_numba(X, k)
    return core_distances_numpy(X, k)


def prim_mst(X: np.ndarray, core: np.ndarray) -> np.ndarray:
    if USE_NUMBA:
        return prim_mst_numba(X, core)
    return prim_mst_numpy(X, core)
