"""Independent reference computations used to check the library.

Each routine takes a different route from the code it checks: closed-form
binomials instead of recurrences, position-distribution convolutions instead
of generating-function products, naive enumeration instead of vectorised or
pruned search, and scipy's bounded least squares instead of projected
gradient.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy.optimize import lsq_linear


def mean_trace_binomial(x, delta) -> list:
    """mu_j = rho sum_i x_i C(i, j) rho^j delta^(i-j), exact when delta is a Fraction."""
    rho = 1 - delta
    n = len(x)
    return [rho * sum(x[i] * math.comb(i, j) * rho ** j * delta ** (i - j) for i in range(j, n))
            for j in range(n)]


def mean_trace_positions(x, delta: float, sigma: float, gamma: float, N: int) -> np.ndarray:
    """General-channel mean trace from the distribution of each source bit's
    output position: i+1 geometric insertion runs plus i kept-or-not bits."""
    rho = 1.0 - delta
    geo = (1.0 - sigma) * sigma ** np.arange(N)
    bern = np.array([delta, rho])
    pos = geo.copy()  # position of bit 0: insertions before it
    out = np.zeros(N)
    for i, xi in enumerate(x):
        out += xi * rho * (1.0 - gamma) * pos[:N]
        pos = np.convolve(np.convolve(pos, bern)[:N], geo)[:N]
    return out


def box_lsq_distance(d: complex, g: np.ndarray) -> float:
    """min over a in [-1,1]^K of |d - sum a_k g_k| via scipy's bounded solver."""
    if g.size == 0:
        return abs(d)
    A = np.vstack([g.real, g.imag])
    res = lsq_linear(A, [d.real, d.imag], bounds=(-1.0, 1.0), tol=1e-14, lsmr_tol="auto")
    r = A @ res.x - np.array([d.real, d.imag])
    return float(np.hypot(*r))


def littlewood_vectors(n: int):
    """Every nonzero vector in {-1,0,1}^n with first nonzero entry +1."""
    for v in itertools.product((-1, 0, 1), repeat=n):
        nz = [c for c in v if c]
        if nz and nz[0] == 1:
            yield np.array(v, dtype=float)


def dense_circle_max(p, center: float, radius: float, grid: int = 1 << 14) -> float:
    t = np.linspace(0.0, 2.0 * np.pi, grid, endpoint=False)
    z = center + radius * np.exp(1j * t)
    return float(np.abs(np.polyval(np.asarray(p)[::-1], z)).max())


def kappa_naive(rho: float, n: int, grid: int = 1 << 14) -> float:
    return min(dense_circle_max(b, 1.0 - rho, rho, grid) for b in littlewood_vectors(n))


def flat_naive(k: int, grid: int = 1 << 14) -> float:
    t = np.linspace(0.0, 1.0, grid)
    return min(float(np.abs(np.polyval(q[::-1], t)).max()) for q in littlewood_vectors(k + 1))


def epsilon_exact(n: int, delta: Fraction) -> Fraction:
    """2 min ||mu(b)||_1 in exact rational arithmetic."""
    best = None
    for b in littlewood_vectors(n):
        mu = mean_trace_binomial([int(c) for c in b], delta)
        val = sum(abs(v) for v in mu)
        best = val if best is None or val < best else best
    return 2 * best


def decode_naive(muhat, delta: float, n: int):
    """Closest +-1 string in l1 mean-trace distance, first in product order on ties."""
    best, arg = math.inf, None
    for x in itertools.product((-1, 1), repeat=n):
        mu = mean_trace_binomial(list(x), delta)
        dist = sum(abs(a - b) for a, b in zip(mu, muhat))
        if dist < best - 1e-12:
            best, arg = dist, x
    return np.array(arg), best
