"""False nearest neighbours for choosing the delay length."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import TimeSeries, nearest_index, write_rows_csv
from .errors import InvalidInputError

DEFAULT_R_TOL = 10.0
THEILER_WINDOW = 1


@dataclass(frozen=True)
class FnnFraction:
    k: int
    fraction: float
    n_false: int
    m: int
    degenerate: bool

    def __float__(self):
        return self.fraction


@dataclass(frozen=True)
class FnnProfile:
    per_k: tuple  # ((k, fraction), ...) for k = 1..k_max
    r_tol: float
    rate: float
    chosen_k: int | None
    reached: bool
    degenerate: bool = False

    def summary(self) -> dict:
        return {
            "per_k": [[k, f] for k, f in self.per_k],
            "r_tol": self.r_tol,
            "rate": self.rate,
            "chosen_k": self.chosen_k,
            "reached": self.reached,
            "degenerate": self.degenerate,
        }


def _values(series) -> np.ndarray:
    return series.values if isinstance(series, TimeSeries) else TimeSeries(series).values


def _theiler(i, j):
    return np.abs(i - j) <= THEILER_WINDOW


def fnn_fraction(series, k: int, r_tol: float = DEFAULT_R_TOL) -> FnnFraction:
    """Share of delay vectors whose nearest neighbour in R^k is false.

    Neighbours within one time step (and the point itself) are ignored;
    ties go to the lowest index.  A neighbour is false when the next
    readings differ by more than ``r_tol`` times the delay-vector distance.
    """
    v = _values(series)
    if int(k) != k or k < 1:
        raise InvalidInputError("k must be a positive integer")
    if v.size < k + 2:
        raise InvalidInputError(f"series of length {v.size} too short for k={k}")
    if not r_tol > 0:
        raise InvalidInputError("r_tol must be positive")
    m = v.size - k
    if np.all(v == v[0]):
        return FnnFraction(k, 0.0, 0, m, True)
    pts = np.lib.stride_tricks.sliding_window_view(v, k)[:m]
    nxt = v[k:]
    j, d = nearest_index(cKDTree(pts), pts, pts, exclude=_theiler)
    ok = j >= 0
    i = np.flatnonzero(ok)
    jump = np.abs(nxt[i] - nxt[j[ok]])
    false = jump > r_tol * d[ok]
    n_false = int(false.sum())
    return FnnFraction(k, n_false / m, n_false, m, False)


def embedding_dimension(series, k_max: int, r_tol: float = DEFAULT_R_TOL,
                        rate: float = 0.01) -> FnnProfile:
    """Smallest ``k`` whose false-neighbour share drops below ``rate``."""
    if k_max < 1:
        raise InvalidInputError("k_max must be at least 1")
    if not 0 < rate < 1:
        raise InvalidInputError("rate must lie in (0, 1)")
    per_k, chosen, degenerate = [], None, False
    for k in range(1, k_max + 1):
        f = fnn_fraction(series, k, r_tol)
        degenerate |= f.degenerate
        per_k.append((k, f.fraction))
        if chosen is None and f.fraction < rate:
            chosen = k
    return FnnProfile(tuple(per_k), float(r_tol), float(rate), chosen, chosen is not None,
                      degenerate)


def write_profile_csv(path, prof: FnnProfile, header: bool = True):
    write_rows_csv(path, ["k", "fraction"], ([k, float(f)] for k, f in prof.per_k), header=header)
