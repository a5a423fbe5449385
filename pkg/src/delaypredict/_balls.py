"""Exact open-ball aggregation over point sets via a uniform cell grid.

Points are binned into axis-aligned cells of side slightly above ``eps``;
every point of an open ``eps``-ball around ``q`` then lies in the 3**k cells
adjacent to the cell of ``q``.  Distances are still checked exactly, so the
result equals a linear scan (up to summation order).
"""

import itertools

import numba
import numpy as np

# the bundled TBB is too old for numba; avoid the warning it triggers
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .errors import InvalidInputError

_MAX_CELL_COORD = 2.0**52


def _offsets(k):
    return np.array(list(itertools.product((-1, 0, 1), repeat=k)), dtype=np.int64)


class CellGrid:
    """Cell-list index over a fixed point set for one radius."""

    def __init__(self, points, eps, extra=None):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2:
            raise InvalidInputError("points must be a 2-D array")
        if not eps > 0:
            raise InvalidInputError("radius must be positive")
        self.k = points.shape[1]
        lo = points.min(axis=0) if len(points) else np.zeros(self.k)
        hi = points.max(axis=0) if len(points) else np.zeros(self.k)
        if extra is not None and len(extra):
            lo = np.minimum(lo, extra.min(axis=0))
            hi = np.maximum(hi, extra.max(axis=0))
        extent = float(np.max(hi - lo)) if self.k else 0.0
        # slack keeps true neighbours within one cell despite rounding in the division
        slack = max(1e-9, 8e-16 * extent / eps)
        self.side = eps * (1.0 + slack)
        if extent / self.side > _MAX_CELL_COORD:
            raise InvalidInputError("radius too small relative to point spread")
        self.origin = lo
        self.eps = float(eps)
        cells = self.cell_of(points)
        order = np.lexsort(cells.T[::-1]) if len(points) else np.zeros(0, np.int64)
        cells = cells[order]
        if len(cells):
            new = np.ones(len(cells), dtype=bool)
            new[1:] = np.any(cells[1:] != cells[:-1], axis=1)
            first = np.flatnonzero(new)
        else:
            first = np.zeros(0, np.int64)
        self.order = order
        self.points = points[order]
        self.cells = np.ascontiguousarray(cells[first])
        self.starts = np.append(first, len(cells)).astype(np.int64)
        self.offsets = _offsets(self.k)

    def cell_of(self, x):
        return np.floor((x - self.origin) / self.side).astype(np.int64)


@numba.njit(cache=True, inline="always")
def _find_cell(cells, target):
    lo = 0
    hi = cells.shape[0]
    k = cells.shape[1]
    while lo < hi:
        mid = (lo + hi) // 2
        cmp = 0
        for d in range(k):
            if cells[mid, d] < target[d]:
                cmp = -1
                break
            if cells[mid, d] > target[d]:
                cmp = 1
                break
        if cmp == 0:
            return mid
        if cmp < 0:
            lo = mid + 1
        else:
            hi = mid
    return -1


@numba.njit(cache=True, parallel=True)
def _aggregate(qcells, queries, pts, w, u, ref, cells, starts, offsets, eps):
    nq, k = queries.shape
    d = u.shape[1]
    W = np.zeros(nq)
    S = np.zeros((nq, d))
    Q = np.zeros(nq)
    cnt = np.zeros(nq, dtype=np.int64)
    for i in numba.prange(nq):
        target = np.empty(k, dtype=np.int64)
        for o in range(offsets.shape[0]):
            for a in range(k):
                target[a] = qcells[i, a] + offsets[o, a]
            c = _find_cell(cells, target)
            if c < 0:
                continue
            for j in range(starts[c], starts[c + 1]):
                s = 0.0
                for a in range(k):
                    t = pts[j, a] - queries[i, a]
                    s += t * t
                if np.sqrt(s) < eps:
                    wj = w[j]
                    W[i] += wj
                    cnt[i] += 1
                    sq = 0.0
                    for b in range(d):
                        t = u[j, b] - ref[i, b]
                        S[i, b] += wj * t
                        sq += t * t
                    Q[i] += wj * sq
    return W, S, Q, cnt


def ball_moments(points, queries, eps, weights=None, images=None, ref=None):
    """Per-query weighted moments over the open ``eps``-ball.

    Returns ``(mass, first, second, count)`` where ``first`` and ``second``
    are the weighted sums of ``images - ref`` and ``|images - ref|**2``.
    ``ref`` defaults to zeros; passing the query's own image keeps the
    variance computation well conditioned.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    n = len(points)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    u = np.zeros((n, 0)) if images is None else np.asarray(images, dtype=np.float64)
    if ref is None:
        ref = np.zeros((len(queries), u.shape[1]))
    grid = CellGrid(points, eps, extra=queries)
    qcells = grid.cell_of(queries)
    return _aggregate(
        qcells,
        queries,
        grid.points,
        np.ascontiguousarray(w[grid.order]),
        np.ascontiguousarray(u[grid.order]),
        np.ascontiguousarray(ref, dtype=np.float64),
        grid.cells,
        grid.starts,
        grid.offsets,
        float(eps),
    )


def set_workers(n):
    """Cap the number of threads used by the parallel kernels."""
    if n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
