"""Nearest-neighbour prediction and ball-conditioned prediction error."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._balls import ball_moments
from .core import PointCloud, nearest_index, radius_query, write_rows_csv
from .errors import InvalidInputError, NoMassError, NoNeighborsError
from .systems import EmpiricalMeasure, MapSystem, Observable, delay_map


@dataclass(frozen=True)
class PredictionQuery:
    y: np.ndarray
    eps: float

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64).ravel()
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("query point must be finite")
        if not self.eps > 0:
            raise InvalidInputError("eps must be positive")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "eps", float(self.eps))


@dataclass(frozen=True)
class ErrorReport:
    delta: float
    epsilon: float
    fraction: float
    sample_size: int

    def row(self):
        return [self.delta, self.epsilon, self.fraction, self.sample_size]


ERROR_REPORT_COLUMNS = ["delta", "epsilon", "fraction", "sample_size"]


def write_error_reports(path, reports, header: bool = True):
    write_rows_csv(path, ERROR_REPORT_COLUMNS, (r.row() for r in reports), header=header)


# ------------------------------------------------- trajectory predictor


def _successors(cloud: PointCloud, query: PredictionQuery) -> np.ndarray:
    idx = radius_query(cloud, query.y, query.eps)
    if idx.size == 0:
        raise NoNeighborsError(f"no delay vector within {query.eps:g} of the query")
    return cloud.image_vectors()[idx]


def fs_predict(cloud: PointCloud, query: PredictionQuery) -> np.ndarray:
    """Average of the successors of all delay vectors in the open query ball."""
    return _successors(cloud, query).mean(axis=0)


def fs_variance(cloud: PointCloud, query: PredictionQuery) -> float:
    """Mean squared distance of those successors from their average."""
    succ = _successors(cloud, query)
    dev = succ - succ.mean(axis=0)
    return float(np.mean(np.sum(dev * dev, axis=1)))


# --------------------------------------------- measure-weighted statistics


def _weights(cloud: PointCloud) -> np.ndarray:
    """Atom weights, uniform over image-bearing points when none are stored."""
    if cloud.weights is not None:
        return cloud.weights
    ok = cloud.has_image()
    if not ok.any():
        raise NoMassError("cloud has no points with a known image")
    return ok / ok.sum()


def _ball(cloud: PointCloud, query: PredictionQuery):
    idx = radius_query(cloud, query.y, query.eps)
    w = _weights(cloud)[idx]
    mass = math.fsum(w)
    if not mass > 0:
        raise NoMassError(f"ball of radius {query.eps:g} carries no mass")
    return cloud.image_vectors()[idx], w, mass


def chi_eps(cloud: PointCloud, query: PredictionQuery) -> np.ndarray:
    """Weighted mean of the one-step images over the ball preimage."""
    u, w, mass = _ball(cloud, query)
    return (w @ u) / mass


def sigma_eps(cloud: PointCloud, query: PredictionQuery) -> float:
    """Weighted standard deviation of the one-step images over the ball preimage."""
    u, w, mass = _ball(cloud, query)
    dev = u - (w @ u) / mass
    return math.sqrt(float(w @ np.sum(dev * dev, axis=1)) / mass)


def sigma_all(cloud: PointCloud, eps: float) -> np.ndarray:
    """``sigma_eps(phi(x))`` for every image-bearing atom, NaN elsewhere.

    Atoms sharing a delay vector share a ball, so they are pooled first
    (mass, mean image, within-group sum of squares).  Moments are then
    accumulated about each group's mean image, which keeps the subtraction
    ``E|u-r|^2 - |E(u-r)|^2`` well conditioned for small balls.
    """
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    ok = cloud.has_image()
    pts = cloud.points[ok]
    u = cloud.image_vectors()[ok]
    w = _weights(cloud)[ok]
    out = np.full(len(cloud), np.nan)
    if pts.shape[0] == 0:
        return out
    upts, inv = np.unique(pts, axis=0, return_inverse=True)
    inv = inv.ravel()
    G = upts.shape[0]
    wg = np.bincount(inv, weights=w, minlength=G)
    safe = np.where(wg > 0, wg, 1.0)
    mg = np.column_stack([np.bincount(inv, weights=w * u[:, j], minlength=G) for j in range(u.shape[1])])
    mg /= safe[:, None]
    dev = u - mg[inv]
    vg = np.bincount(inv, weights=w * np.sum(dev * dev, axis=1), minlength=G)
    mass, first, second, _ = ball_moments(upts, upts, eps, weights=wg, images=mg, ref=mg)
    within, _, _, _ = ball_moments(upts, upts, eps, weights=vg)
    mean = first / mass[:, None]
    var = (second + within) / mass - np.sum(mean * mean, axis=1)
    out[ok] = np.sqrt(np.maximum(var, 0.0))[inv]
    return out


@dataclass(frozen=True)
class SigmaTrend:
    """``sigma_eps`` along a decreasing radius grid; no limit is extrapolated."""

    eps: tuple
    sigma: tuple
    estimate: float
    monotone_nonincreasing: bool
    complete: bool  # False when the grid was cut at the first empty ball


def sigma_limit_estimate(cloud: PointCloud, y, eps_grid) -> SigmaTrend:
    grid = [float(e) for e in eps_grid]
    if len(grid) < 3:
        raise InvalidInputError("need at least three radii")
    if any(not b < a for a, b in zip(grid, grid[1:])) or grid[-1] <= 0:
        raise InvalidInputError("radius grid must be positive and strictly decreasing")
    sig = []
    for e in grid:
        try:
            sig.append(sigma_eps(cloud, PredictionQuery(y, e)))
        except NoMassError:
            break
    if not sig:
        raise NoMassError("the largest ball is already empty")
    mono = all(b <= a + 1e-15 for a, b in zip(sig, sig[1:]))
    return SigmaTrend(eps=tuple(grid[: len(sig)]), sigma=tuple(sig), estimate=sig[-1],
                      monotone_nonincreasing=mono, complete=len(sig) == len(grid))


def error_fraction(cloud: PointCloud, delta: float, eps: float, strict: bool = True) -> ErrorReport:
    """Mass of atoms whose prediction error at scale ``eps`` exceeds ``delta``.

    ``strict=False`` counts ``sigma >= delta`` instead of ``sigma > delta``.
    """
    if not delta > 0:
        raise InvalidInputError("delta must be positive")
    sig = sigma_all(cloud, eps)
    w = _weights(cloud)
    ok = np.isfinite(sig)
    hit = ok & ((sig > delta) if strict else (sig >= delta))
    frac = min(1.0, math.fsum(w[hit]))
    return ErrorReport(float(delta), float(eps), frac, int(ok.sum()))


# --------------------------------------------------- measure-driven clouds


def measure_cloud(system: MapSystem, observable: Observable, k: int,
                  measure: EmpiricalMeasure) -> PointCloud:
    """Delay vectors of the atoms, weighted by their masses, with exact images."""
    phi, phi_t = delay_map(system, observable, k, measure.atoms)
    return PointCloud(points=phi, weights=measure.masses, images=phi_t)


@dataclass(frozen=True)
class Violation:
    i: int
    j: int
    dist_in: float
    dist_out: float


def deterministic_check(sample, system: MapSystem, observable: Observable, k: int,
                        tol_in: float = 1e-6, tol_out: float = 1e-2) -> list:
    """Pairs whose delay vectors agree to ``tol_in`` but whose images differ by more than ``tol_out``."""
    if not (tol_out > tol_in > 0):
        raise InvalidInputError("need tol_out > tol_in > 0")
    phi, phi_t = delay_map(system, observable, k, sample)
    pairs = cKDTree(phi).query_pairs(tol_in, output_type="ndarray")
    out = []
    if len(pairs):
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
        d_in = np.linalg.norm(phi[pairs[:, 0]] - phi[pairs[:, 1]], axis=1)
        d_out = np.linalg.norm(phi_t[pairs[:, 0]] - phi_t[pairs[:, 1]], axis=1)
        for (i, j), a, b in zip(pairs, d_in, d_out):
            if a <= tol_in and b > tol_out:
                out.append(Violation(int(i), int(j), float(a), float(b)))
    return out


class PredictionMap:
    """Lookup predictor: the image of the nearest training delay vector."""

    def __init__(self, training: PointCloud):
        ok = np.flatnonzero(training.has_image())
        if ok.size == 0:
            raise InvalidInputError("training set has no point with a successor")
        self._points = training.points[ok]
        self._images = training.image_vectors()[ok]
        self._tree = cKDTree(self._points)

    def __len__(self):
        return len(self._points)

    def nearest(self, y) -> tuple:
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if y.shape[1] != self._points.shape[1]:
            raise InvalidInputError("query dimension does not match training set")
        return nearest_index(self._tree, self._points, y)

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        idx, _ = self.nearest(y)
        out = self._images[idx]
        return out[0] if y.ndim == 1 else out


def build_prediction_map(training: PointCloud) -> PredictionMap:
    if len(training) == 0:
        raise InvalidInputError("empty training set")
    return PredictionMap(training)
