"""Channel polynomials and complex polynomial evaluation on circles and arcs.

Polynomials are coefficient arrays in ascending order: ``p[j]`` multiplies
``z**j``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channel import ChannelParams

DEFAULT_GRID = 4096
LOG_FLOOR = 1e-300
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class RootFindingError(ArithmeticError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class DiskSpec:
    center: complex
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"disk radius must be positive, got {self.radius!r}")

    def points(self, grid: int) -> np.ndarray:
        t = 2.0 * np.pi * np.arange(grid) / grid
        return self.center + self.radius * np.exp(1j * t)


@dataclass(frozen=True)
class ArcSpec:
    """Points ``center + radius * exp(i t)`` for ``|t| <= theta``."""

    center: complex
    radius: float
    theta: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"arc radius must be positive, got {self.radius!r}")
        if not 0.0 < self.theta <= math.pi:
            raise ValueError(f"arc half-angle must lie in (0, pi], got {self.theta!r}")

    def points(self, grid: int) -> np.ndarray:
        t = np.linspace(-self.theta, self.theta, grid + 1)
        return self.center + self.radius * np.exp(1j * t)


def as_coeffs(p) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(p, dtype=complex))
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("coefficient vector must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coefficients must be finite")
    return arr


def eval_poly(p, z):
    """Horner evaluation of ``sum p[j] z**j``; ``z`` may be an array."""
    p = np.asarray(p)
    z = np.asarray(z, dtype=complex)
    acc = np.zeros_like(z) + p[-1]
    for c in p[-2::-1]:
        acc = acc * z + c
    return acc if acc.ndim else complex(acc)


def deriv_bound(p, radius_out: float) -> float:
    """Upper bound on |p'| over the closed disk of radius ``radius_out`` about 0."""
    p = np.abs(np.asarray(p))
    j = np.arange(1, p.size)
    if j.size == 0:
        return 0.0
    return float(np.sum(j * p[1:] * radius_out ** (j - 1.0)))


def deletion_w_map(z, rho: float):
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {rho!r}")
    w = (1.0 - rho) + rho * np.asarray(z, dtype=complex)
    return w if w.ndim else complex(w)


def general_w_map(z, params: ChannelParams):
    """Mobius map (1 - sigma)(delta + rho z)/(1 - sigma z)."""
    z = np.asarray(z, dtype=complex)
    denom = 1.0 - params.sigma * z
    if np.any(denom == 0):
        raise ZeroDivisionError("z = 1/sigma is a pole of the channel map")
    w = (1.0 - params.sigma) * (params.delta + params.rho * z) / denom
    return w if w.ndim else complex(w)


def channel_poly_deletion(x, delta: float, z):
    rho = 1.0 - delta
    return rho * eval_poly(np.asarray(x, dtype=float), deletion_w_map(z, rho))


def channel_poly_general(x, params: ChannelParams, z):
    """Untruncated general-channel generating function at ``z``.

    (1-delta)(1-gamma) (1-sigma)/(1-sigma z) sum_i x_i w(z)^i.
    """
    z = np.asarray(z, dtype=complex)
    w = general_w_map(z, params)
    pref = params.rho * (1.0 - params.gamma) * (1.0 - params.sigma) / (1.0 - params.sigma * z)
    out = pref * eval_poly(np.asarray(x, dtype=float), w)
    return out if np.ndim(out) else complex(out)


class MaxModulus(NamedTuple):
    """Refined maximum of |p| on a circle.

    The true maximum lies in ``[value, value + slack]``.
    """

    value: float
    slack: float
    point: complex

    @property
    def upper(self) -> float:
        return self.value + self.slack


def _golden_max(f, lo: float, hi: float, iters: int = 60) -> tuple[float, float]:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def refine_on_circle(p, center: complex, radius: float, t0: float, step: float) -> tuple[float, float]:
    """Golden-section search for max |p| on the circle within ``t0 +- step``."""
    def f(t):
        return abs(eval_poly(p, center + radius * complex(math.cos(t), math.sin(t))))
    return _golden_max(f, t0 - step, t0 + step)


def circle_slack(p, disk: DiskSpec, grid: int) -> float:
    # Neighbouring grid points are 2*pi*r/grid apart along the circle.
    lip = deriv_bound(p, abs(disk.center) + disk.radius)
    return lip * math.pi * disk.radius / grid


def max_modulus_on_circle(p, disk: DiskSpec, grid: int = DEFAULT_GRID) -> MaxModulus:
    if grid < 64:
        raise ValueError(f"grid must be >= 64, got {grid}")
    p = as_coeffs(p)
    if p.size == 1:
        return MaxModulus(float(abs(p[0])), 0.0, complex(disk.center + disk.radius))
    pts = disk.points(grid)
    vals = np.abs(eval_poly(p, pts))
    best = int(np.argmax(vals))
    step = 2.0 * math.pi / grid
    t, v = refine_on_circle(p, disk.center, disk.radius, best * step, step)
    if v < vals[best]:
        t, v = best * step, float(vals[best])
    point = disk.center + disk.radius * complex(math.cos(t), math.sin(t))
    return MaxModulus(float(v), circle_slack(p, disk, grid), point)


def geometric_mean_on_arc(p, arc: ArcSpec, grid: int = DEFAULT_GRID) -> float:
    """exp of the trapezoid-rule mean of ln|p| along the arc."""
    if grid < 64:
        raise ValueError(f"grid must be >= 64, got {grid}")
    p = as_coeffs(p)
    if not np.any(p):
        raise ValueError("geometric mean of the zero polynomial is undefined")
    if p.size == 1:
        return float(abs(p[0]))
    logs = np.log(np.maximum(np.abs(eval_poly(p, arc.points(grid))), LOG_FLOOR))
    weights = np.full(grid + 1, 1.0)
    weights[0] = weights[-1] = 0.5
    return float(math.exp(np.dot(weights, logs) / grid))


def geometric_mean_on_circle(p, disk: DiskSpec, grid: int = DEFAULT_GRID) -> float:
    return geometric_mean_on_arc(p, ArcSpec(disk.center, disk.radius, math.pi), grid)


def trim(p) -> np.ndarray:
    p = as_coeffs(p)
    nz = np.flatnonzero(p)
    if nz.size == 0:
        raise ValueError("zero polynomial has no roots")
    return p[: nz[-1] + 1]


def poly_roots(p, tol: float = 1e-8) -> np.ndarray:
    """Roots via eigenvalues of the (balanced) companion matrix.

    Raises RootFindingError when a root's relative residual exceeds ``tol``.
    """
    p = trim(p)
    if p.size == 1:
        return np.zeros(0, dtype=complex)
    roots = np.roots(p[::-1])
    scale = eval_poly(np.abs(p), np.abs(roots)).real
    resid = np.abs(eval_poly(p, roots)) / np.maximum(scale, np.finfo(float).tiny)
    if np.any(~np.isfinite(roots)) or np.any(resid > tol):
        raise RootFindingError(f"root finding did not converge (max residual {resid.max():.3g})",
                               resid)
    return roots


def mahler_measure(p) -> float:
    """|leading coefficient| times the product of root moduli exceeding 1."""
    p = trim(p)
    roots = poly_roots(p)
    big = np.abs(roots)
    return float(abs(p[-1]) * np.prod(big[big > 1.0]))


def mahler_measure_numeric(p, grid: int = 1 << 16) -> float:
    """Geometric mean of |p| over the unit circle by quadrature."""
    return geometric_mean_on_circle(p, DiskSpec(0.0, 1.0), grid)


def poly_to_json(p) -> str:
    p = as_coeffs(p)
    return json.dumps([[float(c.real), float(c.imag)] for c in p])


def poly_from_json(text: str) -> np.ndarray:
    return as_coeffs([complex(re, im) for re, im in json.loads(text)])
