"""Built-in maps, observables, polynomial probe families and finite measures."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import comb

from .errors import ConfigurationError, DivergenceError, InvalidInputError

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class MapSystem:
    """Discrete-time system ``T: X -> X`` with ``X`` a subset of R^N.

    ``step`` acts on arrays of shape ``(..., N)``.
    """

    state_dim: int
    step: Callable[[np.ndarray], np.ndarray]
    domain_descriptor: str
    name: str
    parameters: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.step(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class Observable:
    eval: Callable[[np.ndarray], np.ndarray]
    name: str

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.asarray(self.eval(x), dtype=np.float64)


@dataclass(frozen=True)
class ProbeFamily:
    members: tuple
    degree_bound: int
    interpolation_order: int
    exponents: tuple = ()

    def __len__(self):
        return len(self.members)

    def evaluate(self, x) -> np.ndarray:
        """Evaluation matrix, one row per point and one column per member."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.exponents:
            e = np.asarray(self.exponents)
            return np.prod(x[:, None, :] ** e[None, :, :], axis=2)
        return np.stack([h(x) for h in self.members], axis=1)


@dataclass(frozen=True)
class EmpiricalMeasure:
    atoms: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        a = np.array(self.atoms, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        m = np.array(self.masses, dtype=np.float64).ravel()
        if a.shape[0] != m.size or m.size == 0:
            raise InvalidInputError("need one positive mass per atom")
        if not np.all(np.isfinite(a)) or np.any(m <= 0):
            raise InvalidInputError("atoms must be finite and masses positive")
        if abs(math.fsum(m) - 1.0) > 1e-12:
            raise InvalidInputError(f"masses sum to {math.fsum(m)!r}, not 1")
        a.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "masses", m)

    def __len__(self):
        return self.masses.size

    def mass_of(self, mask) -> float:
        return math.fsum(self.masses[np.asarray(mask, dtype=bool)])


@dataclass(frozen=True)
class PerturbationCoefficients:
    alpha: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=np.float64).ravel()
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("alpha must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)


# ------------------------------------------------------------------ maps


def iterate(system: MapSystem, x0, n: int, burn_in: int = 0) -> np.ndarray:
    """Orbit ``T^burn_in x0, ..., T^(burn_in+n-1) x0`` as an ``(n, N)`` array."""
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    x = np.array(x0, dtype=np.float64).reshape(system.state_dim)
    out = np.empty((n, system.state_dim))
    for i in range(burn_in + n):
        if not np.all(np.abs(x) <= DIVERGENCE_LIMIT):
            raise DivergenceError(i, DIVERGENCE_LIMIT)
        if i >= burn_in:
            out[i - burn_in] = x
        if i < burn_in + n - 1:
            x = system.step(x)
    return out


def iterate_many(system: MapSystem, x: np.ndarray, steps: int) -> np.ndarray:
    """Apply ``T`` to a batch of states; returns shape ``(steps+1, n, N)``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, system.state_dim)
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    for i in range(steps):
        out[i + 1] = system.step(out[i])
        if not np.all(np.abs(out[i + 1]) <= DIVERGENCE_LIMIT):
            raise DivergenceError(i + 1, DIVERGENCE_LIMIT)
    return out


def _logistic(r):
    return lambda x: r * x * (1.0 - x)


def _tent(s):
    return lambda x: s * np.minimum(x, 1.0 - x)


def _henon(a, b):
    def step(z):
        x, y = z[..., 0], z[..., 1]
        return np.stack([1.0 - a * x * x + y, b * x], axis=-1)

    return step


def _rotation(theta):
    c, s = math.cos(theta), math.sin(theta)

    def step(z):
        x, y = z[..., 0], z[..., 1]
        return np.stack([c * x - s * y, s * x + c * y], axis=-1)

    return step


def _interval_pair(z):
    x, y = z[..., 0], z[..., 1]
    return np.stack([x, np.where(x == 1.0, 1.0 - y, y)], axis=-1)


GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

_CATALOG = {
    "logistic": (("r",), 1, "[0,1]"),
    "tent": (("s",), 1, "[0,1]"),
    "henon": (("a", "b"), 2, "R^2 (attractor basin)"),
    "circle_rotation": (("theta",), 2, "unit circle in R^2"),
    "interval_pair": ((), 2, "{0,1} x [0,1]"),
    "identity": (("N",), None, "R^N"),
}


def builtin_system(name: str, parameters: dict | None = None) -> MapSystem:
    """Configured system from the catalog.

    ``circle_rotation`` takes the rotation angle in radians; ``interval_pair``
    is the map fixing ``{0} x [0,1]`` and reflecting ``{1} x [0,1]``.
    """
    parameters = dict(parameters or {})
    if name not in _CATALOG:
        raise ConfigurationError(f"unknown system {name!r}; choose from {sorted(_CATALOG)}")
    names, dim, domain = _CATALOG[name]
    missing = [p for p in names if p not in parameters]
    if missing:
        raise ConfigurationError(f"system {name!r} missing parameter(s) {missing}")
    p = {k: parameters[k] for k in names}
    if name == "logistic":
        step1 = _logistic(float(p["r"]))
    elif name == "tent":
        step1 = _tent(float(p["s"]))
    elif name == "henon":
        step1 = _henon(float(p["a"]), float(p["b"]))
    elif name == "circle_rotation":
        step1 = _rotation(float(p["theta"]))
    elif name == "interval_pair":
        step1 = _interval_pair
    else:
        dim = int(p["N"])
        if dim < 1:
            raise ConfigurationError("identity needs N >= 1")
        step1 = lambda x: np.array(x, dtype=np.float64, copy=True)  # noqa: E731
    return MapSystem(state_dim=dim, step=step1, domain_descriptor=domain, name=name, parameters=p)


def coordinate(i: int, name: str | None = None) -> Observable:
    return Observable(lambda x, i=i: x[..., i], name or f"coord{i}")


# ------------------------------------------------------------ probe sets


def monomial_exponents(N: int, max_degree: int) -> list:
    """Exponent vectors of total degree <= max_degree, graded then lexicographic."""
    out = []
    for deg in range(max_degree + 1):
        for e in sorted(itertools.product(range(deg + 1), repeat=N), reverse=True):
            if sum(e) == deg:
                out.append(e)
    return out


def polynomial_probe_family(N: int, order: int) -> ProbeFamily:
    """All monomials of total degree below ``order`` in ``N`` variables.

    Any basis of polynomials of degree <= q-1 interpolates arbitrary values
    at q distinct points, which is the property certified by
    ``interpolation_order``.
    """
    if N < 1 or order < 1:
        raise InvalidInputError("need N >= 1 and order >= 1")
    exps = monomial_exponents(N, order - 1)
    assert len(exps) == comb(N + order - 1, N, exact=True)

    def mono(e):
        ea = np.asarray(e)
        return lambda x: np.prod(np.atleast_2d(x) ** ea, axis=-1)

    members = tuple(Observable(mono(e), "x^" + ",".join(map(str, e))) for e in exps)
    return ProbeFamily(members=members, degree_bound=order - 1, interpolation_order=order,
                       exponents=tuple(exps))


def perturb_observable(h: Observable, family: ProbeFamily,
                       alpha: PerturbationCoefficients) -> Observable:
    a = np.asarray(alpha.alpha)
    if a.size != len(family):
        raise InvalidInputError(f"alpha has {a.size} entries, family has {len(family)}")

    def ev(x):
        x = np.asarray(x, dtype=np.float64)
        flat = x.reshape(-1, x.shape[-1])
        return (h(flat) + family.evaluate(flat) @ a).reshape(x.shape[:-1])

    return Observable(ev, f"{h.name}+alpha")


def sample_alpha(seed: int, m: int, radius: float = 0.1) -> PerturbationCoefficients:
    """Uniform draw from the closed ``radius``-ball in R^m (PCG64 stream)."""
    if m < 1:
        raise InvalidInputError("m must be at least 1")
    return PerturbationCoefficients(sample_ball(np.random.default_rng(seed), 1, m, radius)[0])


def sample_ball(rng: np.random.Generator, n: int, m: int, radius: float = 1.0) -> np.ndarray:
    """``n`` uniform points in the closed ``radius``-ball of R^m."""
    g = rng.standard_normal((n, m))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    r = rng.random((n, 1)) ** (1.0 / m)
    return radius * r * g / norms


# -------------------------------------------------------------- measures


def natural_measure(system: MapSystem, x0, n: int, burn_in: int = 0,
                    dedup: bool = False) -> EmpiricalMeasure:
    """Orbit average ``(1/n) sum delta_{T^i x}`` after a burn-in."""
    orbit = iterate(system, x0, n, burn_in)
    if dedup:
        atoms, counts = np.unique(orbit, axis=0, return_counts=True)
        return EmpiricalMeasure(atoms, counts / counts.sum())
    return EmpiricalMeasure(orbit, np.full(n, 1.0 / n))


def default_beta(n):
    return 6.0 / (math.pi**2 * np.asarray(n, dtype=np.float64) ** 2)


@dataclass(frozen=True)
class DyadicMeasure:
    """Truncated two-interval dyadic measure plus its bookkeeping."""

    measure: EmpiricalMeasure
    levels: np.ndarray  # dyadic level n of each atom
    numerators: np.ndarray  # odd q of each atom, atom height q / 2^n
    raw_masses: np.ndarray
    raw_total: float
    renormalization: float  # factor applied to raw masses
    n_max: int
    beta: Callable = field(repr=False, default=default_beta)


def dyadic_atomic_measure(beta: Callable | None = None, n_max: int = 16) -> DyadicMeasure:
    """Atoms ``(x, q/2^n)``, ``x in {0,1}``, odd ``q``, ``n <= n_max``.

    Raw mass of each atom is ``beta_n / 2^n`` (half of ``beta_n / 2^(n-1)``
    per copy); the result is renormalised to total mass one.
    """
    if n_max < 1:
        raise InvalidInputError("n_max must be at least 1")
    beta = beta or default_beta
    ns = np.arange(1, n_max + 1)
    b = np.asarray([beta(int(k)) for k in ns], dtype=np.float64)
    if np.any(~(b > 0)):
        raise InvalidInputError("beta must be positive")
    levels, nums = [], []
    for n in ns:
        q = np.arange(1, 2**n, 2, dtype=np.int64)
        levels.append(np.full(q.size, n, dtype=np.int64))
        nums.append(q)
    levels = np.concatenate(levels)
    nums = np.concatenate(nums)
    heights = nums / 2.0**levels
    raw_one = b[levels - 1] / 2.0 ** (levels - 1)
    atoms = np.concatenate([np.c_[np.zeros_like(heights), heights],
                            np.c_[np.ones_like(heights), heights]])
    raw = 0.5 * np.concatenate([raw_one, raw_one])
    total = math.fsum(raw)
    masses = raw / total
    return DyadicMeasure(
        measure=EmpiricalMeasure(atoms, masses),
        levels=np.concatenate([levels, levels]),
        numerators=np.concatenate([nums, nums]),
        raw_masses=raw,
        raw_total=total,
        renormalization=1.0 / total,
        n_max=n_max,
        beta=beta,
    )


def uniform_interval_pair_measure(n_per_branch: int) -> EmpiricalMeasure:
    """Stratified length measure on ``{0,1} x [0,1]``: midpoints, equal masses."""
    t = (np.arange(n_per_branch) + 0.5) / n_per_branch
    atoms = np.concatenate([np.c_[np.zeros_like(t), t], np.c_[np.ones_like(t), t]])
    return EmpiricalMeasure(atoms, np.full(2 * n_per_branch, 0.5 / n_per_branch))


# ----------------------------------------------------------- JSON config


def system_from_config(cfg: dict) -> MapSystem:
    try:
        return builtin_system(cfg["name"], cfg.get("parameters", {}))
    except KeyError as exc:
        raise ConfigurationError(f"system config missing {exc}") from None


def measure_from_config(cfg: dict) -> EmpiricalMeasure:
    """``{"system": {...}, "x0": [...], "n": int, "burn_in": int}`` or a dyadic config."""
    kind = cfg.get("kind", "natural")
    if kind == "dyadic":
        return dyadic_atomic_measure(n_max=int(cfg.get("n_max", 16))).measure
    if kind == "uniform_interval_pair":
        return uniform_interval_pair_measure(int(cfg["n_per_branch"]))
    if kind != "natural":
        raise ConfigurationError(f"unknown measure kind {kind!r}")
    try:
        system = system_from_config(cfg["system"])
        return natural_measure(system, cfg["x0"], int(cfg["n"]), int(cfg.get("burn_in", 0)),
                               dedup=bool(cfg.get("dedup", False)))
    except KeyError as exc:
        raise ConfigurationError(f"measure config missing {exc}") from None


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None


def write_measure_csv(path, measure: EmpiricalMeasure, header: bool = True):
    from .core import write_rows_csv

    cols = [f"x{i}" for i in range(measure.atoms.shape[1])] + ["mass"]
    rows = (list(map(float, a)) + [float(m)] for a, m in zip(measure.atoms, measure.masses))
    write_rows_csv(path, cols, rows, header=header)


def delay_map(system: MapSystem, observable: Observable, k: int, atoms) -> tuple:
    """``(phi(x), phi(Tx))`` for every state in ``atoms``, each of shape ``(n, k)``."""
    if k < 1:
        raise InvalidInputError("k must be at least 1")
    orbit = iterate_many(system, atoms, k)
    vals = np.stack([observable(orbit[i]) for i in range(k + 1)], axis=1)
    if not np.all(np.isfinite(vals)):
        raise InvalidInputError(f"observable {observable.name} is not finite on the sample")
    return vals[:, :k], vals[:, 1:]
