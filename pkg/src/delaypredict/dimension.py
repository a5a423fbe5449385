"""Box-counting, correlation and information dimension estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._balls import ball_moments
from .core import PointCloud, write_rows_csv
from .errors import InsufficientScalesError, InvalidInputError
from .systems import EmpiricalMeasure


@dataclass(frozen=True)
class DimensionEstimate:
    """Per-scale statistic plus fitted slopes.

    ``slope`` is the least-squares slope over ``fit_range``; ``lower_slope``
    and ``upper_slope`` are the liminf/limsup surrogates.
    """

    per_scale: tuple  # ((delta, statistic), ...), delta strictly decreasing
    slope: float
    lower_slope: float
    upper_slope: float
    fit_range: tuple
    method: str = ""

    def summary(self) -> dict:
        return {
            "method": self.method,
            "slope": self.slope,
            "lower_slope": self.lower_slope,
            "upper_slope": self.upper_slope,
            "fit_range": list(self.fit_range),
        }


def write_estimate_csv(path, est: DimensionEstimate, header: bool = True):
    write_rows_csv(path, ["delta", "statistic"], ([float(d), float(s)] for d, s in est.per_scale),
                   header=header)


def _check_grid(delta_grid) -> np.ndarray:
    g = np.asarray(delta_grid, dtype=np.float64).ravel()
    if g.size < 2:
        raise InsufficientScalesError("need at least two scales")
    if np.any(~np.isfinite(g)) or np.any(g <= 0) or np.any(np.diff(g) >= 0):
        raise InvalidInputError("scale grid must be positive and strictly decreasing")
    return g


def default_fit_mask(grid: np.ndarray, fraction: float = 0.6) -> np.ndarray:
    """Scales inside the central ``fraction`` of the grid's log range."""
    lg = np.log(grid)
    lo, hi = lg.min(), lg.max()
    trim = 0.5 * (1.0 - fraction) * (hi - lo)
    tol = 1e-12 * max(1.0, hi - lo)
    mask = (lg >= lo + trim - tol) & (lg <= hi - trim + tol)
    if mask.sum() < 2:
        mask[:] = True
    return mask


def _fit(x, y, mask, method) -> tuple:
    """Least-squares slope plus min/max of consecutive two-point slopes."""
    x, y = x[mask], y[mask]
    if x.size < 2:
        raise InsufficientScalesError(f"{method}: fewer than two usable scales")
    slope = float(np.polyfit(x, y, 1)[0]) if np.ptp(y) > 0 else 0.0
    inc = np.diff(y) / np.diff(x)
    return slope, float(inc.min()), float(inc.max())


def _fit_range(grid, mask):
    return (float(grid[mask].min()), float(grid[mask].max()))


def _resolve_mask(grid, fit_range):
    if fit_range is None:
        return default_fit_mask(grid)
    lo, hi = fit_range
    return (grid >= lo * (1 - 1e-12)) & (grid <= hi * (1 + 1e-12))


def _points(cloud) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) == 0:
        raise InvalidInputError("empty point set")
    return pts


def box_counts(points: np.ndarray, delta: float, shift=None) -> int:
    """Occupied axis-aligned boxes of side ``delta`` anchored at the origin (or ``-shift*delta``)."""
    z = points / delta
    if shift is not None:
        z = z + shift
    return int(np.unique(np.floor(z).astype(np.int64), axis=0).shape[0])


def box_counting_dim(cloud, delta_grid, fit_range=None, shift_average: bool = False,
                     seed: int = 0) -> DimensionEstimate:
    """Slope of ``log N(delta)`` against ``-log delta``.

    With ``shift_average`` the count is averaged over four random grid
    offsets.  Counts are made nonincreasing in ``delta`` by a running
    maximum toward small scales, which only matters where anchoring makes
    a coarser grid look busier than a finer one.
    """
    pts = _points(cloud)
    grid = _check_grid(delta_grid)
    if shift_average:
        shifts = np.random.default_rng(seed).random((4, pts.shape[1]))
        raw = np.array([np.mean([box_counts(pts, d, s) for s in shifts]) for d in grid])
    else:
        raw = np.array([box_counts(pts, d) for d in grid], dtype=np.float64)
    counts = np.maximum.accumulate(raw)
    mask = _resolve_mask(grid, fit_range)
    slope, lo, hi = _fit(-np.log(grid), np.log(counts), mask, "box counting")
    return DimensionEstimate(tuple(zip(grid.tolist(), counts.tolist())), slope, lo, hi,
                             _fit_range(grid, mask), "box_counting")


def correlation_sums(points: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Fraction of distinct pairs at distance strictly below each scale."""
    n = len(points)
    if n < 2:
        return np.zeros(grid.size)
    tree = cKDTree(points)
    radii = np.nextafter(grid, 0.0)
    # count_neighbors counts ordered pairs with d <= r, self pairs included
    cnt = np.asarray(tree.count_neighbors(tree, radii), dtype=np.float64)
    return (cnt - n) / (n * (n - 1.0))


def correlation_dim(cloud, delta_grid, fit_range=None) -> DimensionEstimate:
    pts = _points(cloud)
    grid = _check_grid(delta_grid)
    c = correlation_sums(pts, grid)
    mask = _resolve_mask(grid, fit_range) & (c > 0)
    slope, lo, hi = _fit(np.log(grid), np.log(np.where(c > 0, c, 1.0)), mask, "correlation")
    return DimensionEstimate(tuple(zip(grid.tolist(), c.tolist())), slope, lo, hi,
                             _fit_range(grid, mask), "correlation")


def mean_log_ball_mass(measure: EmpiricalMeasure, grid: np.ndarray) -> np.ndarray:
    """``sum_x m(x) log mu(B(x, eps))`` for each ``eps``."""
    out = np.empty(grid.size)
    for i, e in enumerate(grid):
        mass, _, _, _ = ball_moments(measure.atoms, measure.atoms, e, weights=measure.masses)
        out[i] = math.fsum(measure.masses * np.log(np.minimum(mass, 1.0)))
    return out


def information_dim(measure: EmpiricalMeasure, delta_grid, fit_range=None) -> DimensionEstimate:
    """Information dimension from open-ball masses around each atom.

    ``per_scale`` holds the ratio ``sum m log mu(B) / log eps``; ``slope``
    fits the numerator against ``log eps`` over the fit range, and the
    lower/upper values are the min/max ratio over the finer half of the grid.
    """
    grid = _check_grid(delta_grid)
    if np.any(grid >= 1.0):
        raise InvalidInputError("information dimension scales must lie below 1")
    num = mean_log_ball_mass(measure, grid)
    ratio = num / np.log(grid)
    mask = _resolve_mask(grid, fit_range)
    slope, _, _ = _fit(np.log(grid), num, mask, "information")
    fine = ratio[grid.size // 2:]
    return DimensionEstimate(tuple(zip(grid.tolist(), ratio.tolist())), slope,
                             float(fine.min()), float(fine.max()), _fit_range(grid, mask),
                             "information")


def geometric_grid(eps_max: float, eps_min: float, points: int) -> np.ndarray:
    """Decreasing geometric grid from ``eps_max`` to ``eps_min`` inclusive."""
    if not (eps_max > eps_min > 0) or points < 2:
        raise InvalidInputError("need eps_max > eps_min > 0 and at least two points")
    return np.geomspace(eps_max, eps_min, int(points))
