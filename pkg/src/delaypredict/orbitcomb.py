"""Finite orbit structures, the difference matrices they induce, and brute-force rank checks.

A structure is a pair of marked points ``x, y`` in a finite functional graph.
Each orbit is a rho shape (a pre-periodic tail feeding a cycle) or, for
aperiodic points, a chain truncated once every iterate up to ``T^k`` exists.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import qmc

from .errors import InvalidInputError, PreconditionError, VerificationFailure
from .systems import sample_ball

INF = math.inf


@dataclass(frozen=True)
class OrbitStructure:
    """Symbolic type of a pair of orbits.

    ``c_x == 0`` marks an aperiodic ``x`` whose orbit is kept as a chain of
    ``p_x`` states.  ``merge = (b, a)`` declares that the orbit of ``y`` first
    meets the orbit of ``x`` at ``T^b y = T^a x`` (``b`` new states on the way);
    ``merge = None`` means the orbits are disjoint.
    """

    p_x: int
    c_x: int
    p_y: int
    c_y: int
    merge: tuple | None = None
    succ: np.ndarray = field(init=False, repr=False, compare=False)
    y_state: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for v in (self.p_x, self.c_x, self.p_y, self.c_y):
            if int(v) != v or v < 0:
                raise InvalidInputError("orbit lengths must be nonnegative integers")
        nx = self.p_x + self.c_x
        if nx < 1:
            raise InvalidInputError("orbit of x needs at least one state")
        succ = list(range(1, nx + 1))
        succ[-1] = self.p_x if self.c_x else -1
        if self.merge is None:
            ny = self.p_y + self.c_y
            if ny < 1:
                raise InvalidInputError("orbit of y needs at least one state")
            tail = list(range(nx + 1, nx + ny + 1))
            tail[-1] = nx + self.p_y if self.c_y else -1
            succ += tail
            y = nx
        else:
            b, a = self.merge
            if not (0 <= a < nx) or b < 0:
                raise InvalidInputError(f"merge point {self.merge} outside the orbit of x")
            if b == 0:
                y = a
            else:
                succ += list(range(nx + 1, nx + b)) + [a]
                y = nx
            # identifications must agree with the dynamics they imply
            got = _rho_lengths(succ, y)
            if got != (self.p_y, self.c_y):
                raise InvalidInputError(
                    f"merge {self.merge} implies (P(y), C(y)) = {got}, not {(self.p_y, self.c_y)}")
        s = np.array(succ, dtype=np.int64)
        s.setflags(write=False)
        object.__setattr__(self, "succ", s)
        object.__setattr__(self, "y_state", int(y))

    @classmethod
    def merged(cls, p_x: int, c_x: int, b: int, a: int) -> "OrbitStructure":
        nx = p_x + c_x
        succ = list(range(1, nx + 1))
        succ[-1] = p_x if c_x else -1
        if b:
            succ += list(range(nx + 1, nx + b)) + [a]
        p_y, c_y = _rho_lengths(succ, nx if b else a)
        return cls(p_x, c_x, p_y, c_y, (b, a))

    @property
    def n_states(self) -> int:
        return int(self.succ.size)

    @property
    def x_state(self) -> int:
        return 0

    def canonical(self) -> tuple:
        b, a = self.merge if self.merge is not None else (-1, -1)
        return (self.p_x, self.c_x, self.p_y, self.c_y, b, a)

    def orbit(self, start: int, length: int) -> np.ndarray:
        """States ``start, T start, ...`` (``length`` of them); -1 past a truncation."""
        out = np.empty(length, dtype=np.int64)
        s = start
        for i in range(length):
            out[i] = s
            s = self.succ[s] if s >= 0 else -1
        return out

    def orbit_size(self, which: str) -> float:
        p, c = (self.p_x, self.c_x) if which == "x" else (self.p_y, self.c_y)
        return INF if c == 0 else p + c

    def identifications(self, depth: int) -> list:
        """All ``(i, j)`` with ``T^i x = T^j y`` and ``i, j < depth``."""
        ox = self.orbit(0, depth)
        oy = self.orbit(self.y_state, depth)
        return [(i, j) for i in range(depth) for j in range(depth) if ox[i] >= 0 and ox[i] == oy[j]]


def _rho_lengths(succ, start) -> tuple:
    seen = {}
    s, i = start, 0
    while s >= 0 and s not in seen:
        seen[s] = i
        s, i = succ[s], i + 1
    if s < 0:
        return (i, 0)
    return (seen[s], i - seen[s])


# ------------------------------------------------------------ enumeration


def _rhos(max_states: int):
    for n in range(1, max_states + 1):
        for c in range(1, n + 1):
            yield n - c, c


def enumerate_structures(max_states: int, k: int, include_aperiodic: bool = True):
    """Every structure with at most ``max_states`` states, each exactly once.

    Periodic and pre-periodic orbits come from all rho shapes; aperiodic
    orbits are chains long enough to carry ``T^k`` of both points.  Merged
    pairs attach a tail of ``b`` fresh states from ``y`` to state ``a`` of the
    orbit of ``x``.
    """
    if max_states < 2 and k >= 1:
        raise InvalidInputError("max_states must be at least 2")
    chain = k + 1
    shapes = [(p, c) for p, c in _rhos(max_states)]
    if include_aperiodic and chain <= max_states:
        shapes.append((chain, 0))
    for px, cx in shapes:
        nx = px + cx
        for py, cy in shapes:
            if nx + py + cy <= max_states:
                yield OrbitStructure(px, cx, py, cy, None)
        if cx:
            for b in range(0, max_states - nx + 1):
                for a in range(nx):
                    yield OrbitStructure.merged(px, cx, b, a)
    if include_aperiodic:
        # y merges into an aperiodic chain of x; the chain is long enough for T^k y
        for b in range(0, max_states):
            for a in range(0, max_states):
                nx = max(chain, a + chain - b)
                if a >= nx or nx + b > max_states:
                    continue
                yield OrbitStructure.merged(nx, 0, b, a)


def functional_graph_classes(max_states: int) -> set:
    """Brute-force oracle: isomorphism classes of (map, x, y) on all small state sets.

    Only graphs in which every state lies on the orbit of ``x`` or ``y`` are
    kept; labels are normalised by order of first visit along the orbits.
    """
    classes = set()
    for n in range(1, max_states + 1):
        for f in itertools.product(range(n), repeat=n):
            for x in range(n):
                for y in range(n):
                    label = {}
                    for start in (x, y):
                        s = start
                        while s not in label:
                            label[s] = len(label)
                            s = f[s]
                    if len(label) != n:
                        continue
                    inv = sorted(label, key=label.get)
                    classes.add((tuple(label[f[s]] for s in inv), label[y]))
    return classes


def structure_class(st: OrbitStructure) -> tuple:
    """Same normal form as :func:`functional_graph_classes` for a periodic structure."""
    label = {}
    for start in (0, st.y_state):
        s = start
        while s not in label:
            if s < 0:
                raise InvalidInputError("aperiodic structures have no finite normal form")
            label[s] = len(label)
            s = int(st.succ[s])
    inv = sorted(label, key=label.get)
    return (tuple(label[int(st.succ[s])] for s in inv), label[st.y_state])


# ----------------------------------------------------------- J and D


@dataclass(frozen=True)
class JMatrix:
    entries: np.ndarray
    k: int
    columns: tuple  # state index of each column, in first-appearance order
    coincidence: int | None  # first i < k with T^i x = T^i y, if any

    @property
    def ell(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class DMatrix:
    entries: np.ndarray
    offset: np.ndarray  # (h(T^i x) - h(T^i y))_i for the base observable


def _iterates(st: OrbitStructure, k: int):
    ox = st.orbit(0, k + 1)
    oy = st.orbit(st.y_state, k + 1)
    if np.any(ox < 0) or np.any(oy < 0):
        raise PreconditionError(f"structure {st.canonical()} does not realize T^{k} of both points")
    return ox, oy


def build_J(st: OrbitStructure, k: int) -> JMatrix:
    """Signed incidence of ``T^i x`` (+1) and ``T^i y`` (-1) on the distinct states.

    Rows from the first ``i`` with ``T^i x = T^i y`` onward are zero.
    """
    ox, oy = _iterates(st, k)
    cols = []
    for s in list(ox[:k]) + list(oy[:k]):
        if s not in cols:
            cols.append(int(s))
    pos = {s: j for j, s in enumerate(cols)}
    J = np.zeros((k, len(cols)), dtype=np.int64)
    first = None
    for i in range(k):
        if ox[i] == oy[i]:
            first = i
            break
        J[i, pos[ox[i]]] = 1
        J[i, pos[oy[i]]] = -1
    return JMatrix(J, k, tuple(cols), first)


def build_D(x, y, system, family, k: int, base=None) -> DMatrix:
    """Rows ``(h_j(T^i x) - h_j(T^i y))_j`` by direct iteration of ``system``."""
    from .systems import iterate

    if len(family) < 1:
        raise InvalidInputError("family must have at least one member")
    ox = iterate(system, x, k)
    oy = iterate(system, y, k)
    D = family.evaluate(ox) - family.evaluate(oy)
    off = np.zeros(k) if base is None else base(ox) - base(oy)
    return DMatrix(D, np.asarray(off, dtype=np.float64))


def singular_values(A) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.size == 0:
        return np.zeros(0)
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("matrix must be finite")
    return np.linalg.svd(A, compute_uv=False)


def rank(A, rel_tol: float = 1e-9) -> int:
    s = singular_values(A)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def exact_rank(A) -> int:
    """Rank over the rationals by fraction-free (Bareiss) elimination."""
    M = [[Fraction(v) for v in row] for row in np.atleast_2d(np.asarray(A, dtype=object))]
    rows = len(M)
    cols = len(M[0]) if rows else 0
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if M[i][c] != 0), None)
        if piv is None:
            continue
        M[r], M[piv] = M[piv], M[r]
        for i in range(r + 1, rows):
            if M[i][c] != 0:
                f = M[i][c] / M[r][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        r += 1
        if r == rows:
            break
    return r


# ------------------------------------------------------- case analysis


def _case2(px, cx, py, cy, k, sx, sy) -> bool:
    return (sx <= k and sy <= k and cx > 0 and cy > 0 and cx % cy == 0 and py + cx <= k)


def classify(st: OrbitStructure, k: int) -> str:
    """Which of the four orbit-size cases covers the pair (first match, either orientation)."""
    sx, sy = st.orbit_size("x"), st.orbit_size("y")
    if build_J(st, k).coincidence is not None:
        return "coincident"
    if sx >= k or sy >= k:
        return "case1"
    P = ((st.p_x, st.c_x, st.p_y, st.c_y, sx, sy), (st.p_y, st.c_y, st.p_x, st.c_x, sy, sx))
    if any(_case2(a, b, c, d, k, e, f) for a, b, c, d, e, f in P):
        return "case2"
    if sx + sy <= k:
        return "case3"
    disjoint = st.merge is None
    for px, cx, py, cy, ex, ey in P:
        if px == 0 and cx > 0 and disjoint and ex + ey >= k and (cy == 0 or cx % cy != 0 or py + cx >= k):
            return "case4"
    return "preperiodic"


def case2_hypotheses(st: OrbitStructure, k: int) -> bool:
    sx, sy = st.orbit_size("x"), st.orbit_size("y")
    return (_case2(st.p_x, st.c_x, st.p_y, st.c_y, k, sx, sy)
            or _case2(st.p_y, st.c_y, st.p_x, st.c_x, k, sy, sx))


def difference_operators(st: OrbitStructure, k: int) -> tuple:
    """Matrices mapping state values to ``phi(x)-phi(y)`` and ``phi(Tx)-phi(Ty)``."""
    ox, oy = _iterates(st, k)
    n = st.n_states
    A0 = np.zeros((k, n))
    A1 = np.zeros((k, n))
    for i in range(k):
        A0[i, ox[i]] += 1
        A0[i, oy[i]] -= 1
        A1[i, ox[i + 1]] += 1
        A1[i, oy[i + 1]] -= 1
    return A0, A1


def sup_ratio(A0, A1, rel_tol: float = 1e-9) -> float:
    """``sup |A1 h| / |A0 h|`` over ``h`` with ``A0 h != 0``; inf if ``ker A0`` escapes ``ker A1``."""
    U, s, Vt = np.linalg.svd(A0)
    r = int(np.sum(s > rel_tol * max(s[0], 1e-300))) if s.size else 0
    null = Vt[r:]
    if null.size and np.linalg.norm(A1 @ null.T) > rel_tol * max(1.0, np.linalg.norm(A1)):
        return INF
    if r == 0:
        return 0.0
    # A1 restricted to the row space of A0, composed with the pseudo-inverse
    M = A1 @ Vt[:r].T / s[:r]
    return float(np.linalg.norm(M, 2))


# ------------------------------------------------------------ sweeps


def _seed_for(master: int, k: int, st: OrbitStructure) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(k)] + [v + 1 for v in st.canonical()])


def _trial_values(rng, A0, n: int, trials: int) -> np.ndarray:
    """State values: uniform, forced onto ``ker A0`` (plus jitter), and integer patterns."""
    H = np.empty((n, trials))
    t1 = trials // 3
    t2 = (2 * trials) // 3
    H[:, :t1] = rng.uniform(-1.0, 1.0, (n, t1))
    _, s, Vt = np.linalg.svd(A0)
    r = int(np.sum(s > 1e-9 * max(s[0], 1e-300))) if s.size else 0
    null = Vt[r:].T
    m = t2 - t1
    if null.shape[1]:
        H[:, t1:t2] = null @ rng.standard_normal((null.shape[1], m))
        H[:, t1:t2] /= np.maximum(np.abs(H[:, t1:t2]).max(axis=0), 1e-300)
        half = m // 2
        H[:, t1:t1 + half] += 1e-3 * rng.uniform(-1, 1, (n, half))
    else:
        H[:, t1:t2] = rng.uniform(-1.0, 1.0, (n, m))
    H[:, t2:] = rng.integers(-1, 2, (n, trials - t2))
    return H


@dataclass
class CaseStats:
    structures: int = 0
    rank_deficient: int = 0
    max_ratio: float = 0.0
    max_sup_ratio: float = 0.0

    def as_dict(self):
        return {"structures": self.structures, "rank_deficient": self.rank_deficient,
                "max_observed_ratio": self.max_ratio, "max_exact_ratio": self.max_sup_ratio}


def _ratio(d1, d0):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(d0 > 0, d1 / d0, np.where(d1 > 0, INF, 0.0))


def verify_rank_predict(max_states: int = 12, ks=(2, 3, 4, 5), trials_per_structure: int = 100,
                        seed: int = 0, raise_on_violation: bool = False) -> dict:
    """Check that rank-deficient pairs never expand the delay difference by more than 2k.

    For every structure with ``rank J < k`` the inequality is tested on
    ``trials_per_structure`` direct value assignments, and the exact supremum
    of the expansion ratio is computed from the two difference operators.
    Pairs meeting the Case-2 hypotheses are held to factor ``k``.
    """
    if trials_per_structure < 1:
        raise InvalidInputError("need at least one trial per structure")
    if isinstance(ks, int):
        ks = (ks,)
    total = deficient = checked_trials = case2_checked = 0
    violations = []
    cases: dict = {}
    for k in ks:
        for st in enumerate_structures(max_states, k):
            J = build_J(st, k)
            rk = exact_rank(J.entries) if J.coincidence is None else rank(J.entries)
            total += 1
            c = classify(st, k)
            cs = cases.setdefault(c, CaseStats())
            cs.structures += 1
            strong = case2_hypotheses(st, k)
            if rk >= k and not strong:
                continue
            factor = k if strong else 2 * k
            if rk < k:
                deficient += 1
                cs.rank_deficient += 1
            A0, A1 = difference_operators(st, k)
            rng = np.random.default_rng(_seed_for(seed, k, st))
            H = _trial_values(rng, A0, st.n_states, trials_per_structure)
            d0 = np.linalg.norm(A0 @ H, axis=0)
            d1 = np.linalg.norm(A1 @ H, axis=0)
            scale = np.maximum(np.abs(H).max(axis=0), 1.0)
            bad = d1 > factor * d0 + 1e-9 * scale
            checked_trials += H.shape[1]
            case2_checked += int(strong)
            r = _ratio(d1, d0)
            cs.max_ratio = max(cs.max_ratio, float(np.max(np.where(np.isfinite(r), r, 0.0))))
            sup = sup_ratio(A0, A1)
            cs.max_sup_ratio = max(cs.max_sup_ratio, sup)
            if bad.any() or sup > factor * (1 + 1e-9):
                t = int(np.argmax(bad)) if bad.any() else None
                violations.append({
                    "k": k, "structure": list(st.canonical()), "case": c, "factor": factor,
                    "sup_ratio": sup,
                    "values": None if t is None else H[:, t].tolist(),
                })
    report = {
        "max_states": max_states, "ks": list(ks), "trials_per_structure": trials_per_structure,
        "seed": seed, "total_structures": total, "rank_deficient": deficient,
        "case2_strong_checked": case2_checked, "trials": checked_trials,
        "violations": violations, "n_violations": len(violations),
        "per_case": {c: v.as_dict() for c, v in sorted(cases.items())},
    }
    if raise_on_violation and violations:
        raise VerificationFailure(f"{len(violations)} structure(s) violate the expansion bound",
                                  violations)
    return report


def vandermonde_family(k: int):
    """Monomials ``t^0 .. t^(2k-1)``: 2k-interpolating on distinct reals."""
    return np.arange(2 * k)


def verify_sigma_k_positive(max_states: int = 12, ks=(2, 3, 4, 5), trials_per_structure: int = 100,
                            seed: int = 0, rel_tol: float = 1e-9,
                            raise_on_violation: bool = False) -> dict:
    """Contrapositive check: a vanishing ``sigma_k(D)`` never coexists with a 2k expansion.

    Each structure is realised with distinct random reals on its states, the
    probe family ``t^0..t^(2k-1)``, a random base observable and coefficient
    draws from the ball of radius 1 plus least-squares draws that cancel
    ``phi(x) - phi(y)``.  ``D`` is computed from those values directly.
    """
    if isinstance(ks, int):
        ks = (ks,)
    total = small = witnesses = 0
    mismatch = 0
    violations = []
    for k in ks:
        expo = vandermonde_family(k)
        for st in enumerate_structures(max_states, k):
            total += 1
            ox, oy = _iterates(st, k)
            rng = np.random.default_rng(_seed_for(seed + 1, k, st))
            t = rng.uniform(-1.0, 1.0, st.n_states)
            base = np.sin(3.0 * t) + rng.uniform(-1, 1, st.n_states)
            V = t[:, None] ** expo[None, :]
            D = V[ox[:k]] - V[oy[:k]]
            w = base[ox[:k]] - base[oy[:k]]
            s = singular_values(D)
            deficient = bool(s[0] == 0 or s[k - 1] <= rel_tol * s[0])
            J = build_J(st, k)
            mismatch += int(deficient != (rank(J.entries) < k))
            n_ball = trials_per_structure // 2
            # cancel phi(x) - phi(y) as far as D allows, then jitter
            a_ls = np.linalg.lstsq(D, -w, rcond=None)[0]
            A = np.concatenate([
                sample_ball(rng, n_ball, 2 * k, 1.0),
                a_ls + 1e-6 * rng.standard_normal((trials_per_structure - n_ball, 2 * k)),
            ]).T
            hv = base[:, None] + V @ A
            d0 = np.linalg.norm(hv[ox[:k]] - hv[oy[:k]], axis=0)
            d1 = np.linalg.norm(hv[ox[1:]] - hv[oy[1:]], axis=0)
            scale = np.maximum(np.abs(hv).max(axis=0), 1.0)
            expands = d1 > 2 * k * d0 + 1e-9 * scale
            witnesses += int(expands.sum())
            if deficient:
                small += 1
                if expands.any():
                    violations.append({"k": k, "structure": list(st.canonical()),
                                       "sigma": s.tolist(),
                                       "alpha": A[:, int(np.argmax(expands))].tolist()})
    report = {
        "max_states": max_states, "ks": list(ks), "trials_per_structure": trials_per_structure,
        "seed": seed, "total_structures": total, "sigma_k_vanishing": small,
        "expanding_draws_full_rank": witnesses, "rank_mismatch_J_vs_D": mismatch,
        "violations": violations, "n_violations": len(violations),
    }
    if raise_on_violation and violations:
        raise VerificationFailure(f"{len(violations)} rank-deficient realisation(s) expand", violations)
    return report


# ----------------------------------------------- parameter-measure bound


def ball_sample(n: int, m: int, rho: float, seed: int, sampler: str = "rqmc") -> np.ndarray:
    """``n`` points uniform in the closed ``rho``-ball of R^m.

    ``rqmc`` maps a scrambled Sobol sequence through the radial/polar
    transform; ``pseudo`` uses the PCG64 stream.
    """
    if sampler == "pseudo":
        return sample_ball(np.random.default_rng(seed), n, m, rho)
    if sampler != "rqmc":
        raise InvalidInputError(f"unknown sampler {sampler!r}")
    d = 1 if m == 1 else (2 if m == 2 else m + 1)
    eng = qmc.Sobol(d, scramble=True, seed=np.random.default_rng(seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = eng.random(n)
    u = np.clip(u, 1e-16, 1 - 1e-16)
    if m == 1:
        return rho * (2.0 * u - 1.0)
    if m == 2:
        r = rho * np.sqrt(u[:, 0])
        a = 2.0 * np.pi * u[:, 1]
        return np.c_[r * np.cos(a), r * np.sin(a)]
    from scipy.special import ndtri

    g = ndtri(u[:, 1:])
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return rho * u[:, :1] ** (1.0 / m) * g


@dataclass(frozen=True)
class MeasureBound:
    eps: float
    fraction: float
    sigma_p: float
    p: int
    bound_term: float  # (eps / (sigma_p rho))^p
    ratio: float  # fraction / bound_term
    trials: int


def mc_measure_bound(psi, z, rho: float, eps: float, trials: int = 100_000, seed: int = 0,
                     p: int | None = None, sampler: str = "rqmc") -> MeasureBound:
    """Share of ``alpha`` in the ``rho``-ball with ``|psi alpha + z| <= eps``."""
    psi = np.atleast_2d(np.asarray(psi, dtype=np.float64))
    z = np.asarray(z, dtype=np.float64).ravel()
    kk, m = psi.shape
    if z.size != kk:
        raise InvalidInputError("z must match the row count of psi")
    if trials < 1000:
        raise InvalidInputError("need at least 1000 trials")
    p = min(kk, m) if p is None else int(p)
    s = singular_values(psi)
    if p < 1 or p > s.size or not s[p - 1] > 1e-12 * max(s[0], 1e-300):
        raise PreconditionError(f"sigma_{p}(psi) vanishes")
    alpha = ball_sample(trials, m, rho, seed, sampler).reshape(trials, m)
    hit = np.linalg.norm(alpha @ psi.T + z, axis=1) <= eps
    frac = float(hit.mean())
    term = (eps / (s[p - 1] * rho)) ** p
    return MeasureBound(float(eps), frac, float(s[p - 1]), p, term, frac / term, trials)


def calibrate_constant(psi, z, rho, eps_list, trials, seeds, p=None, sampler="rqmc") -> float:
    """Twice the largest ``fraction / bound_term`` over held-out seeds."""
    worst = 0.0
    for sd in seeds:
        for e in eps_list:
            worst = max(worst, mc_measure_bound(psi, z, rho, e, trials, sd, p, sampler).ratio)
    return 2.0 * worst


def mc_slope(psi, z, rho, eps_grid, trials=100_000, seed=0, p=None, sampler="rqmc",
             calibration_seeds=(1001, 1002, 1003)) -> dict:
    """Fractions along ``eps_grid``, their log-log slope and the calibrated bound check."""
    rows = [mc_measure_bound(psi, z, rho, e, trials, seed, p, sampler) for e in eps_grid]
    C = calibrate_constant(psi, z, rho, eps_grid, trials, calibration_seeds, p, sampler)
    fr = np.array([r.fraction for r in rows])
    ok = fr > 0
    slope = float(np.polyfit(np.log(np.asarray(eps_grid)[ok]), np.log(fr[ok]), 1)[0]) \
        if ok.sum() >= 2 else math.nan
    return {
        "rows": rows, "slope": slope, "p": rows[0].p, "C_cal": C,
        "bound_holds": all(r.fraction <= C * r.bound_term for r in rows),
    }
