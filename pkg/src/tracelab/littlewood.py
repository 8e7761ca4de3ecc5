"""Extremal Littlewood and chill polynomial experiments.

Littlewood polynomials here have coefficients in {-1, 0, +1}, not all zero.
A chill polynomial is ``w**d * Q(w)`` with ``Q(0) = 1`` and every other
coefficient of modulus at most 1.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from .cpoly import (
    ArcSpec,
    DiskSpec,
    MaxModulus,
    deriv_bound,
    eval_poly,
    geometric_mean_on_arc,
    max_modulus_on_circle,
)

ENUM_LIMIT = 14
FLAT_LIMIT = 16
FINE_GRID = 1 << 18
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class GuardrailError(ValueError):
    pass


def guardrail_lifted() -> bool:
    return os.environ.get("TRACELAB_GUARDRAIL_OVERRIDE") == "1"


def _check_guard(value: int, limit: int, what: str, count: int) -> None:
    if value > limit and not guardrail_lifted():
        raise GuardrailError(
            f"{what}={value} exceeds the limit {limit}; exhaustive search would visit "
            f"{count} polynomials (set TRACELAB_GUARDRAIL_OVERRIDE=1 to lift the cap)")


def littlewood_count(n: int) -> int:
    return (3**n - 1) // 2


def littlewood_matrix(n: int) -> np.ndarray:
    """All canonical {-1,0,1}^n vectors (first nonzero entry +1), one per row.

    Rows are in lexicographic order under -1 < 0 < +1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_guard(n, ENUM_LIMIT, "n", littlewood_count(n))
    rows = np.zeros((1, 0), dtype=np.int8)
    started = np.zeros(1, dtype=bool)
    for _ in range(n):
        parts, flags = [], []
        for c in (-1, 0, 1):
            ok = started if c == -1 else np.ones_like(started)
            parts.append(np.hstack([rows[ok], np.full((ok.sum(), 1), c, np.int8)]))
            flags.append(started[ok] | (c != 0))
        rows = np.vstack(parts)
        started = np.concatenate(flags)
        order = np.lexsort(rows.T[::-1])
        rows, started = rows[order], started[order]
    return rows[started]


def enumerate_littlewood(n: int) -> Iterator[np.ndarray]:
    """Yield one representative per +-pair of nonzero {-1,0,1}^n vectors."""
    yield from littlewood_matrix(n)


def signs_code(coeffs) -> str:
    return "".join("+" if c > 0 else "-" if c < 0 else "0" for c in np.real(coeffs))


# -- vectorised max-modulus helpers ------------------------------------------

def _powers(points: np.ndarray, degree: int) -> np.ndarray:
    return points[None, :] ** np.arange(degree + 1)[:, None]


def _golden_many(f, lo: np.ndarray, hi: np.ndarray, iters: int = 60):
    """Vectorised golden-section maximisation; f maps an array of t to values."""
    a, b = lo.copy(), hi.copy()
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = np.where(left, b - _GOLDEN * (b - a), d)
        new_d = np.where(left, c, a + _GOLDEN * (b - a))
        fnew = f(np.where(left, new_c, new_d))
        fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
        c, d = new_c, new_d
    return np.where(fc >= fd, c, d), np.maximum(fc, fd)


def _circle_max_many(P: np.ndarray, disk: DiskSpec, grid: int, chunk: int = 4096):
    """Grid maxima of |p| on a circle for every row of P."""
    pts = disk.points(grid)
    W = _powers(pts, P.shape[1] - 1)
    out = np.empty(P.shape[0])
    arg = np.empty(P.shape[0], dtype=np.int64)
    for lo in range(0, P.shape[0], chunk):
        vals = np.abs(P[lo:lo + chunk] @ W)
        arg[lo:lo + chunk] = vals.argmax(axis=1)
        out[lo:lo + chunk] = vals.max(axis=1)
    return out, arg


def _refine_circle_many(P: np.ndarray, disk: DiskSpec, grid: int, arg: np.ndarray):
    step = 2.0 * math.pi / grid
    t0 = arg * step

    def f(t):
        z = disk.center + disk.radius * np.exp(1j * t)
        acc = np.zeros_like(z) + P[:, -1]
        for j in range(P.shape[1] - 2, -1, -1):
            acc = acc * z + P[:, j]
        return np.abs(acc)

    return _golden_many(f, t0 - step, t0 + step)


def _slacks(P: np.ndarray, disk: DiskSpec, grid: int) -> np.ndarray:
    rad = abs(disk.center) + disk.radius
    j = np.arange(1, P.shape[1])
    lip = (np.abs(P[:, 1:]) * j * rad ** (j - 1.0)).sum(axis=1)
    return lip * math.pi * disk.radius / grid


def _lex_first(rows: np.ndarray) -> int:
    order = np.lexsort(np.real(rows).T[::-1])
    return int(order[0])


# -- kappa_Littlewood -------------------------------------------------------

@dataclass
class KappaResult:
    """Minimum over a polynomial class of the max modulus on the circle
    of radius ``rho`` through 1.  The true value lies in
    ``[value, value + slack]``."""

    rho: float
    n: int
    value: float
    argmin: np.ndarray
    grid: int
    slack: float

    @property
    def upper(self) -> float:
        return self.value + self.slack

    def csv_row(self) -> list:
        return [self.rho, self.n, self.value, self.slack, signs_code(self.argmin)]


def kappa_disk(rho: float) -> DiskSpec:
    return DiskSpec(1.0 - rho, rho)


def kappa_littlewood_bruteforce(rho: float, n: int, grid: int = 1024) -> KappaResult:
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho!r}")
    P = littlewood_matrix(n).astype(float)
    disk = kappa_disk(rho)
    if n == 1:
        return KappaResult(rho, n, 1.0, P[0], grid, 0.0)
    gmax, arg = _circle_max_many(P, disk, grid)
    slack = _slacks(P, disk, grid)
    # Anything whose grid max already exceeds some polynomial's certified
    # upper bound cannot be the minimiser.
    cand = np.flatnonzero(gmax <= (gmax + slack).min())
    _, refined = _refine_circle_many(P[cand], disk, grid, arg[cand])
    refined = np.maximum(refined, gmax[cand])
    best = refined.min()
    ties = cand[refined == best]
    pick = ties[_lex_first(P[ties])]
    return KappaResult(rho, n, float(best), P[pick], grid, float(slack[pick]))


# -- kappa^frac sampling -----------------------------------------------------

def frac_case(rho: float, d: int) -> str:
    """Which parameter regime of the chill lower bound applies, or 'gap'."""
    delta = 1.0 - rho
    if d >= 2 and 1.0 / math.sqrt(d) <= rho <= 0.5:
        return "II"
    if d >= 2 and 1.0 / d <= delta <= 0.5:
        return "I"
    return "gap"


def frac_scale(rho: float, d: int, case: str) -> float:
    if case == "I":
        return ((1.0 - rho) * d) ** (1.0 / 3.0)
    if case == "II":
        return (d / rho) ** (1.0 / 3.0)
    return float("nan")


@dataclass
class FracSample:
    rho: float
    d: int
    trials: int
    value: float  # smallest grid max observed (a lower bound on that polynomial's max)
    argmin: np.ndarray  # full coefficient vector of the minimising chill polynomial
    refined: MaxModulus
    case: str
    scale: float
    c_hat: float
    c_cap: float
    floor: float
    holds: bool


def sample_chill_tails(trials: int, extra_degree: int, rng: np.random.Generator) -> np.ndarray:
    """Rows ``(1, b_1, ..., b_K)`` with b_j uniform in the closed unit disk."""
    radius = np.sqrt(rng.random((trials, extra_degree)))
    angle = 2.0 * math.pi * rng.random((trials, extra_degree))
    tails = radius * np.exp(1j * angle)
    return np.hstack([np.ones((trials, 1), dtype=complex), tails])


def chill_max_grid(Q: np.ndarray, d: int, rho: float, grid: int) -> np.ndarray:
    """Grid max of |w**d Q(w)| on the circle of radius rho through 1, per row of Q."""
    pts = kappa_disk(rho).points(grid)
    vals = np.abs(Q @ _powers(pts, Q.shape[1] - 1)) * np.abs(pts)[None, :] ** d
    return vals.max(axis=1)


def kappa_frac_sample(rho: float, d: int, trials: int, rng, extra_degree: int = 16,
                      grid: int = 1024, c_cap: float = 10.0) -> FracSample:
    """Upper-estimate kappa^frac by random chill polynomials and fit the constant.

    Q's coefficients do not depend on ``d``, so equal seeds give paired samples
    across degrees.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho!r}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    Q = sample_chill_tails(trials, extra_degree, rng)
    gmax = chill_max_grid(Q, d, rho, grid)
    i = int(np.argmin(gmax))
    full = np.concatenate([np.zeros(d, dtype=complex), Q[i]])
    refined = max_modulus_on_circle(full, kappa_disk(rho), grid)
    case = frac_case(rho, d)
    scale = frac_scale(rho, d, case)
    value = float(gmax[i])
    if case == "gap":
        c_hat, floor, holds = float("nan"), 0.0, True
    else:
        c_hat = -math.log(value) / scale
        floor = math.exp(-c_cap * scale)
        holds = value >= floor
    return FracSample(rho, d, trials, value, full, refined, case, scale, c_hat, c_cap,
                      floor, holds)


def chill_max(p, rho: float, grid: int = 4096) -> MaxModulus:
    return max_modulus_on_circle(p, kappa_disk(rho), grid)


def as_chill(coeffs, d: int) -> np.ndarray:
    """Chill polynomial w**d Q(w), where Q is ``coeffs`` with its low zeros
    stripped and scaled so that Q(0) = 1.

    The lowest nonzero coefficient must have modulus 1 and sit at index <= d,
    so the result never has larger modulus than ``coeffs`` on the unit disk.
    """
    c = np.asarray(coeffs, dtype=complex)
    j = int(np.flatnonzero(c)[0])
    if j > d:
        raise ValueError(f"lowest degree {j} exceeds the target {d}")
    lead = c[j]
    if not math.isclose(abs(lead), 1.0, rel_tol=1e-12):
        raise ValueError("lowest nonzero coefficient must have modulus 1")
    return np.concatenate([np.zeros(d, dtype=complex), c[j:] / lead])


# -- arc constructions ---------------------------------------------------------

@dataclass
class ArcWitness:
    theta: float
    rho: float
    delta: float
    w0: complex
    modulus_bound: float
    case: str

    def arc(self) -> ArcSpec:
        return ArcSpec(0.0, abs(self.w0), self.theta)


def arc_construct(theta: float, rho: float, delta: float) -> ArcWitness:
    """Larger-modulus point where the ray at angle theta meets the circle
    of radius rho about delta, with the bound |w0| >= 1 - (delta/rho) theta**2."""
    if not math.isclose(rho + delta, 1.0, abs_tol=1e-12):
        raise ValueError(f"rho + delta must equal 1, got {rho} + {delta}")
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta!r}")
    if theta <= 0.5 and delta < 0.5:
        case = "I"
    elif theta <= rho <= 0.5:
        case = "II"
    else:
        raise ValueError(
            f"neither case applies: need (theta <= 1/2 and delta < 1/2) or "
            f"(theta <= rho <= 1/2); got theta={theta}, rho={rho}, delta={delta}")
    disc = rho * rho - (delta * math.sin(theta)) ** 2
    if disc < 0:
        raise ValueError(f"ray at angle {theta} misses the disk (need sin(theta) <= rho/delta)")
    modulus = delta * math.cos(theta) + math.sqrt(disc)
    w0 = modulus * complex(math.cos(theta), math.sin(theta))
    bound = 1.0 - (delta / rho) * theta * theta
    if modulus < bound - 1e-10:
        raise ArithmeticError(f"|w0|={modulus} fell below the bound {bound}")
    return ArcWitness(theta, rho, delta, w0, bound, case)


@dataclass
class GMArcReport:
    theta: float
    r: float
    gm: float
    bound: float
    holds: bool


def gm_arc_bound(theta: float) -> float:
    return 9.0 / 18.0 ** (math.pi / theta)


def gm_arc_bound_check(p, theta: float, r: float, grid: int = 4096,
                       rel_slack: float = 1e-6) -> GMArcReport:
    """Geometric mean of |p| on {1/3 + r e^{it} : |t| <= theta} against 9/18^(pi/theta)."""
    p = np.asarray(p, dtype=complex)
    if not math.isclose(abs(p[0]), 1.0, rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"constant coefficient must have modulus 1, got {abs(p[0])}")
    if np.any(np.abs(p[1:]) > 1.0 + 1e-12):
        raise ValueError("non-constant coefficients must have modulus <= 1")
    if not 0.0 < theta <= math.pi:
        raise ValueError(f"theta must lie in (0, pi], got {theta!r}")
    if not 0.0 <= r <= 2.0 / 3.0:
        raise ValueError(f"r must lie in [0, 2/3], got {r!r}")
    if r == 0.0:
        gm = abs(eval_poly(p, 1.0 / 3.0))
    else:
        gm = geometric_mean_on_arc(p, ArcSpec(1.0 / 3.0, r, theta), grid)
    bound = gm_arc_bound(theta)
    return GMArcReport(theta, r, gm, bound, gm >= bound * (1.0 - rel_slack))


# -- flat Littlewood polynomials on [0, 1] -----------------------------------

@dataclass
class FlatResult:
    k: int
    coeffs: np.ndarray
    value: float
    slack: float
    visited: int


def _interval_max(Q: np.ndarray, t: np.ndarray):
    """Grid max plus golden-section refinement of |q| on [0, 1], per row of Q."""
    vals = np.abs(Q @ _powers(t, Q.shape[1] - 1))
    arg = vals.argmax(axis=1)
    gmax = vals.max(axis=1)
    step = t[1] - t[0]
    lo = np.clip(t[arg] - step, 0.0, 1.0)
    hi = np.clip(t[arg] + step, 0.0, 1.0)

    def f(x):
        acc = np.zeros_like(x) + Q[:, -1]
        for j in range(Q.shape[1] - 2, -1, -1):
            acc = acc * x + Q[:, j]
        return np.abs(acc)

    _, refined = _golden_many(f, lo, hi)
    return np.maximum(gmax, refined)


@lru_cache(maxsize=None)
def _flat_search(k: int, grid: int) -> FlatResult:
    t = np.linspace(0.0, 1.0, grid)
    powers = _powers(t, k)
    # tail[j] = sum_{i >= j} t**i bounds what coefficients j..k can still add.
    tail = np.vstack([np.cumsum(powers[::-1], axis=0)[::-1], np.zeros((1, grid))])
    sums = np.zeros((1, grid))
    coeffs = np.zeros((1, 0), dtype=np.int8)
    started = np.zeros(1, dtype=bool)
    best = 1.0  # Q = 1 is always available
    visited = 0
    for j in range(k + 1):
        new_s, new_c, new_f = [], [], []
        for c in (-1, 0, 1):
            ok = started if c == -1 else np.ones_like(started)
            s = sums[ok] + c * powers[j]
            lower = (np.abs(s) - tail[j + 1]).max(axis=1)
            keep = lower <= best
            new_s.append(s[keep])
            new_c.append(np.hstack([coeffs[ok][keep], np.full((int(keep.sum()), 1), c, np.int8)]))
            new_f.append((started[ok] | (c != 0))[keep])
        sums = np.vstack(new_s)
        coeffs = np.vstack(new_c)
        started = np.concatenate(new_f)
        visited += sums.shape[0]
        # Zero-padding a live prefix gives a complete polynomial: a new incumbent.
        if started.any() and j < k:
            gm = np.where(started, np.abs(sums).max(axis=1), np.inf)
            i = int(np.argmin(gm))
            if gm[i] < best:
                padded = np.concatenate([coeffs[i], np.zeros(k - j, np.int8)]).astype(float)
                best = min(best, float(_interval_max(padded[None, :], t)[0]))
    live = np.flatnonzero(started)
    Q = coeffs[live].astype(float)
    values = _interval_max(Q, t)
    top = values.min()
    ties = np.flatnonzero(values == top)
    pick = ties[_lex_first(Q[ties])]
    q = Q[pick]
    # Certify the winner on a much finer grid: the true max is within
    # slack of the reported value.
    fine = np.linspace(0.0, 1.0, FINE_GRID + 1)
    value = max(float(top), float(_interval_max(q[None, :], fine)[0]))
    slack = deriv_bound(q, 1.0) / (2.0 * FINE_GRID)
    return FlatResult(k, q.astype(int), value, float(slack), visited)


def search_flat_littlewood(k: int, grid: int = 2048) -> FlatResult:
    """Littlewood Q of degree <= k minimising max_{0<=t<=1} |Q(t)|.

    Branch and bound over coefficients from the constant term upward: a prefix
    is dropped once |partial sum| minus the largest possible remaining
    contribution exceeds the incumbent somewhere on the grid.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    _check_guard(k, FLAT_LIMIT, "k", littlewood_count(k + 1))
    return _flat_search(k, grid)


# -- upper-bound witness ---------------------------------------------------

@dataclass
class UpperWitness:
    rho: float
    n: int
    k: int
    shift: int
    coeffs: np.ndarray
    value: float
    slack: float

    @property
    def upper(self) -> float:
        return self.value + self.slack


def upper_bound_witness(rho: float, n: int, grid: int = 1 << 16,
                        flat_grid: int = 2048) -> UpperWitness:
    """Best ``w**(n//2) * Q_k(w)`` over the available flat Q_k with degree < n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    shift = n // 2
    k_max = n - 1 - shift  # keeps the degree below n
    _check_guard(k_max, FLAT_LIMIT, "k", littlewood_count(k_max + 1))
    disk = kappa_disk(rho)
    best = None
    for k in range(k_max + 1):
        q = search_flat_littlewood(k, flat_grid).coeffs
        p = np.concatenate([np.zeros(shift), q]).astype(float)
        mm = max_modulus_on_circle(p, disk, grid)
        if best is None or mm.value < best.value:
            best = UpperWitness(rho, n, k, shift, p, mm.value, mm.slack)
    return best
