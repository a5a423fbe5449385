"""Experiment harnesses: error scaling, the atomic two-interval example and supporting checks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, lsq_linear

from .core import PointCloud, radius_query
from .dimension import box_counting_dim, geometric_grid
from .errors import InvalidInputError, PreconditionError
from .orbitcomb import singular_values
from .predict import measure_cloud, sigma_all
from .systems import (
    GOLDEN_ANGLE,
    EmpiricalMeasure,
    MapSystem,
    Observable,
    ProbeFamily,
    builtin_system,
    coordinate,
    default_beta,
    dyadic_atomic_measure,
    natural_measure,
    perturb_observable,
    polynomial_probe_family,
    sample_alpha,
    uniform_interval_pair_measure,
)

MIN_EXCEEDANCE_ATOMS = 20
SLOPE_TOLERANCE = 0.2


# ------------------------------------------------------- error scaling


@dataclass(frozen=True)
class ScalingResult:
    rows: tuple  # ((eps, fraction, exceedance atoms), ...)
    fitted_slope: float
    theory_floor: float
    verdict: str
    degenerate: bool
    d_est: float
    fit_eps: tuple = ()
    k: int = 0
    delta: float = 0.0
    theta: float = 0.0

    def summary(self) -> dict:
        return {
            "fitted_slope": self.fitted_slope, "theory_floor": self.theory_floor,
            "verdict": self.verdict, "degenerate": self.degenerate, "d_est": self.d_est,
            "fit_eps": list(self.fit_eps), "k": self.k, "delta": self.delta, "theta": self.theta,
        }


def exceedance(cloud: PointCloud, delta: float, eps: float, strict: bool = True) -> tuple:
    """``(mass, atom count)`` of atoms whose prediction error exceeds ``delta``."""
    sig = sigma_all(cloud, eps)
    hit = np.isfinite(sig) & ((sig > delta) if strict else (sig >= delta))
    w = cloud.weights if cloud.weights is not None else np.full(len(cloud), 1.0 / len(cloud))
    return min(1.0, math.fsum(w[hit])), int(hit.sum())


def scaling_experiment(system: MapSystem, observable: Observable, k: int,
                       measure: EmpiricalMeasure, delta: float, eps_grid, theta: float = 0.1,
                       d_est: float | None = None) -> ScalingResult:
    """Exceedance mass across a radius grid and its log-log slope.

    Levels with fewer than 20 exceedance atoms are left out of the fit.
    The verdict passes when the slope clears ``k - D - theta - 0.2`` or when
    every fraction is zero.
    """
    grid = np.asarray(eps_grid, dtype=np.float64)
    if grid.size < 2 or np.any(np.diff(grid) >= 0) or grid[-1] <= 0:
        raise InvalidInputError("eps grid must be positive and strictly decreasing")
    if d_est is None:
        span = np.ptp(measure.atoms, axis=0).max() or 1.0
        d_est = box_counting_dim(measure.atoms, geometric_grid(span / 10, span / 1000, 9)).slope
    if k <= d_est:
        warnings.warn(f"k={k} does not exceed the estimated dimension {d_est:.3f}", stacklevel=2)
    cloud = measure_cloud(system, observable, k, measure)
    rows = []
    for e in grid:
        frac, cnt = exceedance(cloud, delta, e)
        rows.append((float(e), frac, cnt))
    fr = np.array([r[1] for r in rows])
    cnt = np.array([r[2] for r in rows])
    floor = k - d_est - theta
    if np.all(fr == 0):
        return ScalingResult(tuple(rows), math.nan, floor, "pass", True, float(d_est), (), k,
                             float(delta), theta)
    use = (fr > 0) & (cnt >= MIN_EXCEEDANCE_ATOMS)
    if use.sum() < 2:
        return ScalingResult(tuple(rows), math.nan, floor, "fail", False, float(d_est), (), k,
                             float(delta), theta)
    slope = float(np.polyfit(np.log(grid[use]), np.log(fr[use]), 1)[0])
    verdict = "pass" if slope >= floor - SLOPE_TOLERANCE else "fail"
    return ScalingResult(tuple(rows), slope, floor, verdict, False, float(d_est),
                         tuple(grid[use].tolist()), k, float(delta), theta)


def interval_pair_observable(alpha_seed: int | None, radius: float = 0.02, order: int = 4) -> Observable:
    """``h0(x, y) = y`` plus a small polynomial perturbation (none when ``alpha_seed`` is None)."""
    h0 = coordinate(1, "h0")
    if alpha_seed is None:
        return h0
    fam = polynomial_probe_family(2, order)
    return perturb_observable(h0, fam, sample_alpha(alpha_seed, len(fam), radius))


def self_intersection_scaling(n_atoms: int = 100_000, k: int = 2, delta: float = 0.1,
                              eps_grid=None, alpha_seed: int | None = 0, alpha_radius: float = 0.02,
                              theta: float = 0.1) -> ScalingResult:
    """The two-interval system under the stratified length measure (dimension one)."""
    if eps_grid is None:
        eps_grid = geometric_grid(1e-1, 1e-3, 9)
    system = builtin_system("interval_pair")
    h = interval_pair_observable(alpha_seed, alpha_radius, order=2 * k)
    measure = uniform_interval_pair_measure(n_atoms // 2)
    return scaling_experiment(system, h, k, measure, delta, eps_grid, theta, d_est=1.0)


def circle_observable(alpha_seed: int, k: int = 3, radius: float = 0.1) -> Observable:
    """First coordinate plus a random element of the degree ``< 2k`` monomials in the plane."""
    fam = polynomial_probe_family(2, 2 * k)
    return perturb_observable(coordinate(0, "cos"), fam, sample_alpha(alpha_seed, len(fam), radius))


def circle_zero_error(n_draws: int = 100, n_atoms: int = 10_000, k: int = 3, delta: float = 0.05,
                      eps: float = 1e-3, radius: float = 0.1, seed: int = 0,
                      theta: float = GOLDEN_ANGLE) -> dict:
    """Error mass at one small radius for many random perturbations of the first coordinate."""
    system = builtin_system("circle_rotation", {"theta": theta})
    measure = natural_measure(system, [1.0, 0.0], n_atoms)
    seeds = np.random.SeedSequence(seed).generate_state(n_draws)
    fractions = []
    for s in seeds:
        cloud = measure_cloud(system, circle_observable(int(s), k, radius), k, measure)
        fractions.append(exceedance(cloud, delta, eps)[0])
    zero = sum(f == 0 for f in fractions)
    return {"n_draws": n_draws, "zero_draws": int(zero), "fractions": fractions, "k": k,
            "delta": delta, "eps": eps, "n_atoms": n_atoms, "theta": theta}


# -------------------------------------------- atomic measure counterexample


J_INTERVAL = (1.0 / 8.0, 1.0 / 4.0)
TARGET_INTERVAL = (3.0 / 4.0, 7.0 / 8.0)
K_OFFSET = 8


@dataclass(frozen=True)
class CounterexampleGeometry:
    """Numerical check of the neighbourhood conditions on ``h`` for the two-interval example."""

    I: tuple
    J: tuple
    gamma_bullet: float
    lipschitz: tuple  # (min slope, max slope) over both branches
    conditions: dict
    f_inv: object = field(repr=False, default=None)  # inverse of y -> h(0, y)
    g_inv: object = field(repr=False, default=None)  # inverse of y -> h(1, y)
    f: object = field(repr=False, default=None)
    g: object = field(repr=False, default=None)

    @property
    def ok(self) -> bool:
        return all(self.conditions.values())


def _branch(h: Observable, x: float):
    return lambda y: h(np.c_[np.full(np.size(y), x), np.atleast_1d(y)])


def _inverse(fun, lo=0.0, hi=1.0):
    flo, fhi = float(fun(lo)[0]), float(fun(hi)[0])

    def inv(v):
        v = float(v)
        if v <= flo:
            return lo
        if v >= fhi:
            return hi
        return brentq(lambda t: float(fun(t)[0]) - v, lo, hi, xtol=1e-15, rtol=1e-15)

    return inv


def counterexample_geometry(h: Observable, resolution: int = 8193) -> CounterexampleGeometry:
    t = np.linspace(0.0, 1.0, resolution)
    f, g = _branch(h, 0.0), _branch(h, 1.0)
    fv, gv = f(t), g(t)
    slopes = np.concatenate([np.diff(fv), np.diff(gv)]) / (t[1] - t[0])
    mono = bool(np.all(slopes > 0))
    lo, hi = float(slopes.min()), float(slopes.max())
    lip = lo >= 1 / math.sqrt(2) - 1e-9 and hi <= math.sqrt(2) + 1e-9
    cond = {"increasing_on_both_branches": mono, "lipschitz_within_sqrt2": lip}
    if not mono:
        cond.update(I_inside=False, I_long_enough=False, separated=False)
        return CounterexampleGeometry((math.nan, math.nan), J_INTERVAL, 0.0, (lo, hi), cond)
    f_inv, g_inv = _inverse(f), _inverse(g)
    I = (f_inv(g(J_INTERVAL[0])[0]), f_inv(g(J_INTERVAL[1])[0]))
    cond["I_inside"] = 0.0 < I[0] < I[1] < 3.0 / 8.0 + 1e-15
    cond["I_long_enough"] = I[1] - I[0] >= 1.0 / 16.0
    fi = (float(f(I[0])[0]), float(f(I[1])[0]))
    gt = (float(g(TARGET_INTERVAL[0])[0]), float(g(TARGET_INTERVAL[1])[0]))
    gamma = max(0.0, max(gt[0] - fi[1], fi[0] - gt[1]))
    cond["separated"] = gamma > 0
    return CounterexampleGeometry(I, J_INTERVAL, gamma, (lo, hi), cond, f_inv, g_inv, f, g)


def _has_grid_point(a: float, b: float, n: int) -> bool:
    """Whether the open interval ``(a, b)`` holds some ``l / 2^(n-K)``, ``0 <= l < 2^(n-K)``."""
    if n < K_OFFSET:
        return False
    count = 2 ** (n - K_OFFSET)
    step = 1.0 / count
    m = math.floor(a / step) + 1
    return m < count and m * step < b


def q_n(geom: CounterexampleGeometry, n: int) -> list:
    """Odd ``q`` whose level-``n`` dyadic window lies inside ``I``."""
    half = 2.0 ** -(n + 1)
    qs = range(1, 2**n, 2)
    return [q for q in qs if geom.I[0] <= q / 2**n - half and q / 2**n + half <= geom.I[1]]


def y_n(geom: CounterexampleGeometry, n: int) -> list:
    """``q`` in ``Q_n`` whose window and its transported copy avoid the coarse grid."""
    half = 2.0 ** -(n + 1)
    out = []
    for q in q_n(geom, n):
        a, b = q / 2**n - half, q / 2**n + half
        ta, tb = geom.g_inv(geom.f(a)[0]), geom.g_inv(geom.f(b)[0])
        if not (_has_grid_point(a, b, n) or _has_grid_point(ta, tb, n)):
            out.append(q)
    return out


@dataclass(frozen=True)
class CounterexampleRow:
    n: int
    epsilon: float
    measured_fraction: float
    floor: float
    y_n_size: int

    @property
    def passed(self) -> bool:
        return self.measured_fraction >= self.floor

    def row(self):
        return [self.n, self.epsilon, self.measured_fraction, self.floor, self.y_n_size]


COUNTEREXAMPLE_COLUMNS = ["n", "epsilon", "measured_fraction", "floor", "y_n_size"]


@dataclass(frozen=True)
class CounterexampleResult:
    rows: tuple
    delta: float
    gamma: float
    p: float
    delta_source: str
    renormalization: float
    geometry: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def summary(self) -> dict:
        return {"delta": self.delta, "gamma": self.gamma, "p": self.p,
                "delta_source": self.delta_source, "renormalization": self.renormalization,
                "passed": self.passed, "geometry": self.geometry,
                "failed_levels": [r.n for r in self.rows if not r.passed]}


def convex_hull_distance(A: np.ndarray, B: np.ndarray) -> tuple:
    """``(lower, upper)`` bounds on the distance between the convex hulls of two atom sets.

    The upper bound is the norm of the nearest point of ``conv(B - A)`` to
    the origin (bounded least squares on the simplex); the lower bound is the support gap
    along that direction, which certifies separation.
    """
    A = np.asarray(A, dtype=np.float64).reshape(len(A), -1)
    B = np.asarray(B, dtype=np.float64).reshape(len(B), -1)
    if A.shape[1] == 1:
        gap = max(0.0, float(B.min() - A.max()), float(A.min() - B.max()))
        return gap, gap
    V = (B[None, :, :] - A[:, None, :]).reshape(-1, A.shape[1])
    big = 1e3 * max(1.0, np.abs(V).max())
    M = np.vstack([V.T, np.full((1, len(V)), big)])
    rhs = np.r_[np.zeros(A.shape[1]), big]
    lam = lsq_linear(M, rhs, bounds=(0.0, np.inf), method="bvls", tol=1e-14).x
    lam /= lam.sum()
    d = lam @ V
    up = float(np.linalg.norm(d))
    if up == 0:
        return 0.0, 0.0
    u = d / up
    low = float((B @ u).min() - (A @ u).max())
    return max(low, 0.0), up


def _realized_clusters(cloud: PointCloud, measure: EmpiricalMeasure, n_range, geom) -> tuple:
    """Minimum image-cluster separation and mass share over all balls around ``Y_n`` atoms."""
    gamma, p = math.inf, 0.5
    atoms = measure.atoms
    lookup = {(float(a[0]), float(a[1])): i for i, a in enumerate(atoms)}
    for n in n_range:
        eps = 2.0 ** -(n + 1)
        for q in y_n(geom, n):
            i = lookup.get((0.0, q / 2**n))
            if i is None:
                raise PreconditionError(f"atom (0, {q}/2^{n}) missing from the truncated measure")
            idx = radius_query(cloud, cloud.points[i], eps)
            branch = atoms[idx, 0]
            img = cloud.images[idx]
            w = cloud.weights[idx]
            A, B = branch == 0.0, branch == 1.0
            if not A.any() or not B.any():
                raise PreconditionError(f"ball around (0, {q}/2^{n}) misses one branch")
            lo, _ = convex_hull_distance(img[A], img[B])
            share = min(w[A].sum(), w[B].sum()) / w.sum()
            gamma, p = min(gamma, lo), min(p, share)
    if not (gamma > 0 and math.isfinite(gamma)):
        raise PreconditionError("image clusters are not separated")
    return gamma, p


def counterexample_experiment(n_range=range(7, 13), n_max: int = 16, delta: float | None = None,
                              observable: Observable | None = None, k: int = 1,
                              beta=None) -> CounterexampleResult:
    """Error mass at radius ``2^-(n+1)`` for the dyadic atomic measure, level by level.

    Without an explicit ``delta`` the threshold is ``min(p, 1-p) * gamma`` with
    ``gamma`` the smallest separation of the two image clusters and ``p`` the
    smallest cluster mass share over every ball centred at a ``Y_n`` atom.
    """
    n_range = list(n_range)
    if k != 1:
        raise PreconditionError("the atomic example uses a single measurement (k = 1)")
    if n_max < max(n_range) + 3:
        raise PreconditionError(f"truncation level {n_max} too shallow for n up to {max(n_range)}")
    beta = beta or default_beta
    h = observable or coordinate(1, "h0")
    system = builtin_system("interval_pair")
    dy = dyadic_atomic_measure(beta, n_max)
    cloud = measure_cloud(system, h, 1, dy.measure)
    geom = counterexample_geometry(h)
    gamma = p = math.nan
    if delta is None:
        if not geom.ok:
            raise PreconditionError(f"observable fails the neighbourhood conditions: {geom.conditions}")
        gamma, p = _realized_clusters(cloud, dy.measure, n_range, geom)
        delta = min(p * gamma, (1 - p) * gamma)
        source = "realized"
    else:
        source = "given"
    rows = []
    for n in n_range:
        eps = 2.0 ** -(n + 1)
        frac, _ = exceedance(cloud, delta, eps, strict=False)
        size = len(y_n(geom, n)) if geom.ok else 0
        rows.append(CounterexampleRow(n, eps, frac, 2.0**-7 * float(beta(n)), size))
    geo = {"I": list(geom.I), "J": list(geom.J), "gamma_bullet": geom.gamma_bullet,
           "lipschitz": list(geom.lipschitz), "conditions": geom.conditions}
    return CounterexampleResult(tuple(rows), float(delta), float(gamma), float(p), source,
                                dy.renormalization, geo)


# ---------------------------------------------------- supporting checks


@dataclass(frozen=True)
class DeviationCheck:
    std: float
    floor: float
    passed: bool
    certified_gap: float
    mass_A: float


def deviation_bound_check(measure: EmpiricalMeasure, in_A, gamma: float, p: float) -> DeviationCheck:
    """Standard deviation of a two-cluster measure against ``min(p, 1-p) * gamma``.

    The separation of the cluster hulls is certified numerically and the
    mass of ``A`` must lie in ``[p, 1-p]``.
    """
    in_A = np.asarray(in_A, dtype=bool)
    x, w = measure.atoms, measure.masses
    if in_A.shape != w.shape or in_A.all() or not in_A.any():
        raise PreconditionError("both clusters must be nonempty")
    if not (0 < p <= 0.5) or not gamma > 0:
        raise PreconditionError("need 0 < p <= 1/2 and gamma > 0")
    low, _ = convex_hull_distance(x[in_A], x[~in_A])
    scale = max(1.0, float(np.abs(x).max()))
    if gamma > low + 1e-9 * scale:
        raise PreconditionError(f"hull distance {low!r} is below gamma {gamma!r}")
    mA = math.fsum(w[in_A])
    if not (p - 1e-12 <= mA <= 1 - p + 1e-12):
        raise PreconditionError(f"cluster mass {mA!r} outside [p, 1-p]")
    mean = w @ x
    std = math.sqrt(float(w @ np.sum((x - mean) ** 2, axis=1)))
    floor = min(p * gamma, (1 - p) * gamma)
    return DeviationCheck(std, floor, std >= floor - 1e-12, low, mA)


def random_two_cluster(rng: np.random.Generator) -> tuple:
    """A random instance meeting the two-cluster hypotheses: ``(measure, in_A, gamma, p)``."""
    dim = int(rng.integers(1, 4))
    na, nb = (int(v) for v in rng.integers(1, 7, 2))
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    gap = float(rng.uniform(0.05, 3.0))
    A = rng.standard_normal((na, dim)) * rng.uniform(0, 1)
    B = rng.standard_normal((nb, dim)) * rng.uniform(0, 1)
    # push B beyond A along u so the hulls are separated by at least gap
    B += u * ((A @ u).max() - (B @ u).min() + gap)
    pts = np.vstack([A, B])
    mA = float(rng.uniform(0.02, 0.98))
    wa = rng.random(na)
    wb = rng.random(nb)
    w = np.r_[mA * wa / wa.sum(), (1 - mA) * wb / wb.sum()]
    w /= math.fsum(w)
    p = float(rng.uniform(0.0, min(mA, 1 - mA))) or 1e-6
    low, _ = convex_hull_distance(A, B)
    gamma = float(rng.uniform(0.5, 1.0)) * low
    in_A = np.r_[np.ones(na, bool), np.zeros(nb, bool)]
    return EmpiricalMeasure(pts, w), in_A, gamma, p


@dataclass(frozen=True)
class InterpolationCertificate:
    passed: bool
    worst_ratio: float  # smallest sigma_min / sigma_max seen
    draws: int


def interpolation_certificate(family: ProbeFamily, sample, q: int, draws: int = 200,
                              seed: int = 0, rel_tol: float = 1e-9) -> InterpolationCertificate:
    """Rank test of the family's evaluation matrix on random ``q``-subsets of the sample."""
    pts = np.atleast_2d(np.asarray(sample, dtype=np.float64))
    if pts.shape[0] == 1 and pts.shape[1] > 1 and q > 1:
        pts = pts.T
    uniq = np.unique(pts, axis=0)
    if len(uniq) < q:
        raise PreconditionError(f"sample has {len(uniq)} distinct points, need {q}")
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(draws):
        while True:
            sub = pts[rng.choice(len(pts), q, replace=False)]
            if len(np.unique(sub, axis=0)) == q:
                break
        s = singular_values(family.evaluate(sub))
        ratio = 0.0 if s[0] == 0 or s.size < q else float(s[q - 1] / s[0])
        worst = min(worst, ratio)
    return InterpolationCertificate(worst > rel_tol, worst, draws)
