"""Delay vectors, point clouds and exact fixed-radius neighbour queries."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError


@dataclass(frozen=True)
class TimeSeries:
    """Consecutive readings ``h(x), h(Tx), ...`` of one observable."""

    values: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.size < 1:
            raise InvalidInputError("time series must have at least one value")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("time series contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class DelayParams:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidInputError(f"delay length must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite set of vectors in R^k.

    ``successor[i]`` is the index of the point following point ``i`` along a
    delay trajectory, or -1 when undefined.  For clouds built from a measure
    rather than a single trajectory, ``images[i]`` holds the vector
    ``phi(T x_i)`` directly.  ``weights``, when given, sum to one.
    """

    points: np.ndarray
    weights: np.ndarray | None = None
    successor: np.ndarray | None = None
    images: np.ndarray | None = None
    _tree: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise InvalidInputError("points must be a 2-D array (n, k)")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        n = pts.shape[0]
        if self.weights is not None:
            w = np.array(self.weights, dtype=np.float64).ravel()
            if w.shape != (n,) or np.any(w < 0):
                raise InvalidInputError("weights must be nonnegative, one per point")
            if abs(math.fsum(w) - 1.0) > 1e-12:
                raise InvalidInputError("weights must sum to 1")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        if self.successor is not None:
            s = np.array(self.successor, dtype=np.int64).ravel()
            if s.shape != (n,) or np.any((s < -1) | (s >= n)):
                raise InvalidInputError("successor must map indices into the cloud or -1")
            s.setflags(write=False)
            object.__setattr__(self, "successor", s)
        if self.images is not None:
            u = np.array(self.images, dtype=np.float64)
            if u.ndim == 1:
                u = u[:, None]
            if u.shape[0] != n or not np.all(np.isfinite(u)):
                raise InvalidInputError("images must be finite, one per point")
            u.setflags(write=False)
            object.__setattr__(self, "images", u)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def has_image(self) -> np.ndarray:
        """Boolean mask of points whose one-step image is known."""
        if self.images is not None:
            return np.ones(len(self), dtype=bool)
        if self.successor is not None:
            return self.successor >= 0
        return np.zeros(len(self), dtype=bool)

    def image_vectors(self) -> np.ndarray:
        """Images for every point; rows without an image are NaN."""
        if self.images is not None:
            return self.images
        out = np.full_like(self.points, np.nan)
        if self.successor is not None:
            ok = self.successor >= 0
            out[ok] = self.points[self.successor[ok]]
        return out

    def tree(self) -> cKDTree:
        if not self._tree:
            self._tree.append(cKDTree(self.points))
        return self._tree[0]


def delay_vectors(series: TimeSeries, params: DelayParams) -> PointCloud:
    """Windows ``(v[i], ..., v[i+k-1])`` of consecutive readings, linked i -> i+1."""
    k = params.k
    v = series.values
    if v.size < k:
        raise InvalidInputError(f"series of length {v.size} is shorter than k={k}")
    pts = np.lib.stride_tricks.sliding_window_view(v, k)
    n1 = pts.shape[0]
    succ = np.arange(1, n1 + 1, dtype=np.int64)
    succ[-1] = -1
    return PointCloud(points=pts, successor=succ)


def _as_query(cloud: PointCloud, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape != (cloud.dim,):
        raise InvalidInputError(f"query has dimension {y.size}, cloud has {cloud.dim}")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("query must be finite")
    return y


def radius_query(cloud: PointCloud, y, eps: float) -> np.ndarray:
    """Sorted indices ``i`` with ``|z_i - y| < eps`` among points that have an image."""
    y = _as_query(cloud, y)
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    cand = np.asarray(cloud.tree().query_ball_point(y, eps), dtype=np.int64)
    if cand.size:
        d = np.linalg.norm(cloud.points[cand] - y, axis=1)
        cand = cand[d < eps]
    cand = cand[cloud.has_image()[cand]]
    return np.sort(cand)


def linear_scan(cloud: PointCloud, y, eps: float) -> np.ndarray:
    """Reference implementation of :func:`radius_query` by brute force."""
    y = _as_query(cloud, y)
    d = np.linalg.norm(cloud.points - y, axis=1)
    return np.flatnonzero((d < eps) & cloud.has_image())


def nearest_index(tree: cKDTree, points: np.ndarray, queries: np.ndarray, exclude=None) -> tuple:
    """Nearest neighbour with ties broken toward the lowest index.

    ``exclude(i, j)`` (vectorised over candidate arrays) marks forbidden
    pairs, e.g. self matches.  Returns ``(index, distance)`` arrays; index is
    -1 where no admissible neighbour exists.
    """
    n = len(points)
    nq = len(queries)
    kk = min(n, 8)
    out_i = np.full(nq, -1, dtype=np.int64)
    out_d = np.full(nq, np.inf)
    if n == 0:
        return out_i, out_d
    d, idx = tree.query(queries, k=kk)
    d = d.reshape(nq, kk)
    idx = idx.reshape(nq, kk)
    qi = np.arange(nq)[:, None]
    ok = np.ones_like(idx, dtype=bool) if exclude is None else ~exclude(qi, idx)
    dm = np.where(ok, d, np.inf)
    best = dm.min(axis=1)
    # a tie or exclusion may extend past the kk fetched candidates
    redo = np.isinf(best) | (best >= d[:, -1])
    if kk == n:
        redo[:] = False
    tie = np.where(ok & (dm == best[:, None]), idx, n)
    out_i[:] = tie.min(axis=1)
    out_d[:] = best
    for q in np.flatnonzero(redo):
        dd = np.linalg.norm(points - queries[q], axis=1)
        allowed = np.ones(n, dtype=bool) if exclude is None else ~exclude(np.full(n, q), np.arange(n))
        if not allowed.any():
            out_i[q], out_d[q] = -1, np.inf
            continue
        dd = np.where(allowed, dd, np.inf)
        m = dd.min()
        out_i[q] = int(np.flatnonzero(dd == m)[0])
        out_d[q] = m
    out_i[~np.isfinite(out_d)] = -1
    return out_i, out_d


# ---------------------------------------------------------------- CSV I/O


def read_series_csv(path, header: bool | None = None, source_tag: str | None = None) -> TimeSeries:
    """Read a single-column CSV.

    ``header=None`` sniffs: a first row that does not parse as a float is
    treated as a header.
    """
    text = Path(path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise InvalidInputError(f"{path}: no data")
    if header is None:
        try:
            float(rows[0][0])
            header = False
        except ValueError:
            header = True
    if header:
        rows = rows[1:]
    try:
        vals = [float(r[0]) for r in rows]
    except ValueError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None
    return TimeSeries(np.array(vals), source_tag=source_tag or str(path))


def format_float(x: float) -> str:
    return repr(float(x))


def write_rows_csv(path, columns, rows, header: bool = True):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(columns)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_cloud_csv(path, cloud: PointCloud, header: bool = True):
    cols = [f"z{i}" for i in range(cloud.dim)]
    write_rows_csv(path, cols, (list(map(float, p)) for p in cloud.points), header=header)
