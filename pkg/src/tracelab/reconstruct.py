"""Mean-based reconstruction, a brute-force decoder, and the mean-trace gaps.

The mean-based decoder fixes bits left to right.  At stage k it compares the
two hypotheses for x_k: for each of s points on the unit circle it finds the
fractional suffix in [-1, 1]^(n-k-1) that brings the channel polynomial of
(prefix, h, suffix) closest to the estimated mean-trace polynomial, and scores
h by the worst point.  Every point is a box-constrained least-squares problem
in two real dimensions, solved by accelerated projected gradient.  A dual
bound from the current residual direction certifies each point's optimum
from below, so a stage stops as soon as one hypothesis is provably better.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .channel import ChannelParams, SourceString, sample_traces
from .cpoly import eval_poly, general_w_map
from .littlewood import GuardrailError, guardrail_lifted, littlewood_matrix
from .meantrace import (
    deletion_mean_matrix,
    effective_trace_length,
    empirical_mean_trace,
    estimate_retention,
    exact_mean_trace_deletion,
    exact_mean_trace_general,
    general_mean_matrix,
    mean_trace_l1_distance,
)

BRUTE_LIMIT = 20
EPS_LIMIT = 14


# -- gaps between mean traces ------------------------------------------------

@dataclass
class EpsilonResult:
    n: int
    delta: float
    epsilon: float
    argmin: np.ndarray
    method: str

    def to_dict(self) -> dict:
        return {"n": self.n, "delta": self.delta, "epsilon": self.epsilon,
                "argmin": np.asarray(self.argmin, dtype=float).tolist(), "method": self.method}


def epsilon_del_bruteforce(n: int, delta: float) -> EpsilonResult:
    """2 min ||mu(b)||_1 over nonzero b in {-1,0,1}^n (one of each +-pair)."""
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta!r}")
    if n > EPS_LIMIT and not guardrail_lifted():
        raise GuardrailError(f"n={n} exceeds the limit {EPS_LIMIT} for the exhaustive gap scan")
    B = littlewood_matrix(n).astype(float)
    A = deletion_mean_matrix(n, delta)
    norms = np.abs(B @ A.T).sum(axis=1)
    best = norms.min()
    pick = int(np.flatnonzero(norms == best)[0])  # rows are already lexicographic
    return EpsilonResult(n, delta, float(2.0 * best), B[pick], "bruteforce")


def _min_l1_with_pivot(A: np.ndarray, d: int):
    """min ||A[:, d] + A[:, d+1:] beta||_1 over beta in [-1, 1]^(n-d-1), as an LP."""
    N, n = A.shape
    K = n - d - 1
    a = A[:, d]
    if K == 0:
        return float(np.abs(a).sum()), np.zeros(0)
    G = A[:, d + 1:]
    # variables (beta, t): minimise sum t subject to -t <= a + G beta <= t
    c = np.concatenate([np.zeros(K), np.ones(N)])
    eye = np.eye(N)
    A_ub = np.block([[G, -eye], [-G, -eye]])
    b_ub = np.concatenate([-a, a])
    bounds = [(-1.0, 1.0)] * K + [(0.0, None)] * N
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise ArithmeticError(f"LP for pivot {d} failed: {res.message}")
    beta = res.x[:K]
    return float(np.abs(a + G @ beta).sum()), beta


def epsilon_frac(n: int, delta: float) -> EpsilonResult:
    """Fractional gap: two sources that agree on a +-1 prefix, differ in sign at
    the next bit and are free in [-1, 1] afterwards."""
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta!r}")
    A = deletion_mean_matrix(n, delta)
    best, arg = math.inf, None
    for d in range(n):
        val, beta = _min_l1_with_pivot(A, d)
        if val < best:
            best = val
            arg = np.concatenate([np.zeros(d), [1.0], beta])
    return EpsilonResult(n, delta, 2.0 * best, arg, "lp")


def required_cost(eps: EpsilonResult | float) -> int:
    """Smallest integer cost T with T >= 2/epsilon."""
    e = eps.epsilon if isinstance(eps, EpsilonResult) else float(eps)
    if not e > 0:
        raise ValueError(f"epsilon must be positive, got {e!r}")
    ratio = 2.0 / e
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return int(nearest)
    return math.ceil(ratio)


def samples_for_accuracy(n: int, target: float, failure: float = 1e-3) -> int:
    """Trace count making the empirical mean trace target-accurate in l1 w.h.p.

    Each entry is an average of m values in [-1, 1], so by Hoeffding and a
    union bound every entry is within target/n once
    m >= 2 (n/target)^2 ln(2n/failure).
    """
    return math.ceil(2.0 * (n / target) ** 2 * math.log(2.0 * n / failure))


# -- configuration and report -------------------------------------------------

@dataclass
class ReconstructionConfig:
    s: int = 512
    max_iters: int = 20000
    tol: float = 1e-9
    threshold: float | None = None  # None: half of epsilon_frac(n, delta), computed on demand
    delta: float | None = None  # None: estimate from the traces

    def __post_init__(self):
        if self.s < 8:
            raise ValueError(f"s must be >= 8, got {self.s}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.threshold is not None and not self.threshold > 0:
            raise ValueError("threshold must be positive")


@dataclass
class ReconstructionReport:
    recovered: SourceString
    margins: np.ndarray
    flags: list
    iterations: int
    elapsed: float
    threshold: float | None = None
    success: bool | None = None
    l1_deviation: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return any(self.flags)

    def to_dict(self) -> dict:
        return {
            "schema": "v1",
            "recovered": str(self.recovered),
            "margins": [float(v) for v in self.margins],
            "flags": list(self.flags),
            "iterations": int(self.iterations),
            "elapsed": self.elapsed,
            "threshold": self.threshold,
            "success": self.success,
            "l1_deviation": self.l1_deviation,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# -- per-point box-constrained least squares -----------------------------------

def _lipschitz(G: np.ndarray) -> np.ndarray:
    """Gradient Lipschitz constant of |d - G a|^2 per point: twice the top
    eigenvalue of the 2x2 Gram matrix of the real generator pairs."""
    a = np.sum(G.real ** 2, axis=1)
    b = np.sum(G.imag ** 2, axis=1)
    c = np.sum(G.real * G.imag, axis=1)
    top = 0.5 * (a + b) + np.sqrt(0.25 * (a - b) ** 2 + c ** 2)
    return 2.0 * top + 1e-300


def _dual_bound(d: np.ndarray, G: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Lower bound on min_a |d - G a| using the direction of the residual r."""
    mag = np.abs(r)
    u = np.where(mag > 0, r / np.where(mag > 0, mag, 1.0), 1.0)
    lb = np.real(np.conj(u) * d) - np.abs(np.real(np.conj(u)[:, None] * G)).sum(axis=1)
    return np.maximum(lb, 0.0)


class BoxLSQ:
    """Accelerated projected gradient for many independent problems
    min_{a in [-1,1]^K} |d_i - G_i a| (complex d_i, rows G_i), with restarts."""

    def __init__(self, d: np.ndarray, G: np.ndarray):
        self.d = d
        self.G = G
        self.K = G.shape[1]
        self.step = 1.0 / _lipschitz(G) if self.K else np.ones(d.size)
        self.a = np.zeros((d.size, self.K))
        self.y = self.a.copy()
        self.t = np.ones(d.size)
        self.res = d.copy()
        self.iters = 0

    def residual(self, a):
        return self.d - (self.G * a).sum(axis=1)

    def run(self, count: int) -> None:
        if self.K == 0:
            return
        for _ in range(count):
            ry = self.residual(self.y)
            grad = -2.0 * np.real(np.conj(self.G) * ry[:, None])
            a_new = np.clip(self.y - self.step[:, None] * grad, -1.0, 1.0)
            r_new = self.residual(a_new)
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * self.t ** 2))
            y = a_new + ((self.t - 1.0) / t_new)[:, None] * (a_new - self.a)
            worse = np.abs(r_new) > np.abs(self.res)
            y[worse] = a_new[worse]
            t_new[worse] = 1.0
            self.a, self.y, self.t, self.res = a_new, y, t_new, r_new
            self.iters += 1

    def bounds(self):
        upper = np.abs(self.res)
        lower = upper if self.K == 0 else np.minimum(_dual_bound(self.d, self.G, self.res), upper)
        return upper, lower


# -- mean-based decoder -------------------------------------------------------

def _channel_grid(s: int, n: int, params: ChannelParams):
    """Circle points, powers of the channel map and the prefactor at each point."""
    z = np.exp(2j * np.pi * np.arange(s) / s)
    if params.sigma == 0.0:
        w = params.delta + params.rho * z
        pref = np.full(s, params.rho * (1.0 - params.gamma), dtype=complex)
    else:
        w = general_w_map(z, params)
        pref = params.rho * (1.0 - params.gamma) * (1.0 - params.sigma) / (1.0 - params.sigma * z)
    W = pref[:, None] * w[:, None] ** np.arange(n)[None, :]
    return z, W


def _resolve_threshold(cfg: ReconstructionConfig, n: int, delta: float) -> float | None:
    if cfg.threshold is not None:
        return cfg.threshold
    if n > EPS_LIMIT and not guardrail_lifted():
        return None
    return 0.5 * epsilon_frac(n, delta).epsilon


def reconstruct_mean_based(muhat, delta: float | None, n: int,
                           cfg: ReconstructionConfig | None = None,
                           params: ChannelParams | None = None) -> ReconstructionReport:
    """Recover x bit by bit from an estimated mean trace.

    ``params`` selects the general channel; otherwise the deletion channel
    with rate ``delta`` is assumed.
    """
    cfg = cfg or ReconstructionConfig()
    start = time.perf_counter()
    values = np.asarray(muhat, dtype=float)
    if params is None:
        if delta is None:
            raise ValueError("delta is required for the deletion channel")
        params = ChannelParams(delta=delta)
    if n < 1:
        raise ValueError("n must be >= 1")
    z, W = _channel_grid(cfg.s, n, params)
    q = eval_poly(values, z)
    bits = np.zeros(n)
    margins = np.zeros(n)
    flags = [""] * n
    total_iters = 0
    check = 10
    for k in range(n):
        base = q - W[:, :k] @ bits[:k]
        G = np.vstack([W[:, k + 1:], W[:, k + 1:]])
        d = np.concatenate([base - W[:, k], base + W[:, k]])  # h = +1 first, then h = -1
        solver = BoxLSQ(d, G)
        s = cfg.s
        decided = None
        while True:
            upper, lower = solver.bounds()
            up = np.array([upper[:s].max(), upper[s:].max()])
            lo = np.array([lower[:s].max(), lower[s:].max()])
            gap = up - lo
            spread = abs(up[0] - up[1])
            # Stop once the winner is certified and both objectives are known
            # to a small fraction of the difference between them.
            sharp = np.all(gap <= max(cfg.tol, 0.01 * spread))
            if sharp or np.all(gap <= cfg.tol):
                if spread <= cfg.tol:
                    decided, margin = 0, 0.0
                    flags[k] = "tie"
                else:
                    decided = int(up[1] < up[0])
                    margin = max(lo[1 - decided] - up[decided], 0.0)
                break
            if solver.iters >= cfg.max_iters:
                if up[0] < lo[1] or up[1] < lo[0]:
                    decided = int(up[1] < lo[0])
                    margin = lo[1 - decided] - up[decided]
                else:
                    decided, margin = int(up[1] < up[0]), 0.0
                    flags[k] = "nonconvergence"
                break
            solver.run(min(check, cfg.max_iters - solver.iters))
        total_iters += solver.iters
        bits[k] = 1.0 if decided == 0 else -1.0
        margins[k] = margin
    report = ReconstructionReport(SourceString(bits.astype(int)), margins, flags, total_iters,
                                  time.perf_counter() - start)
    if params.is_deletion_only:
        report.threshold = _resolve_threshold(cfg, n, params.delta)
    return report


# -- brute force --------------------------------------------------------------

@dataclass
class BruteForceDecode:
    recovered: SourceString
    distance: float
    tied: bool


def all_sources(n: int) -> np.ndarray:
    """All of {-1,+1}^n as rows, in lexicographic order with -1 < +1."""
    return np.array(list(itertools.product((-1, 1), repeat=n)), dtype=np.int8)


def bruteforce_decode(muhat, delta: float, n: int, params: ChannelParams | None = None,
                      chunk: int = 1 << 14) -> BruteForceDecode:
    if n > BRUTE_LIMIT and not guardrail_lifted():
        raise GuardrailError(f"n={n} exceeds the limit {BRUTE_LIMIT} for the brute-force decoder")
    values = np.asarray(muhat, dtype=float)
    if params is None or params.is_deletion_only:
        A = deletion_mean_matrix(n, delta if params is None else params.delta)
    else:
        A = general_mean_matrix(n, params, N=values.size)
    if A.shape[0] != values.size:
        raise ValueError(f"mean trace has {values.size} entries, expected {A.shape[0]}")
    X = all_sources(n)
    dist = np.empty(X.shape[0])
    for lo in range(0, X.shape[0], chunk):
        dist[lo:lo + chunk] = np.abs(X[lo:lo + chunk] @ A.T - values[None, :]).sum(axis=1)
    best = dist.min()
    ties = np.flatnonzero(dist == best)
    return BruteForceDecode(SourceString(X[ties[0]]), float(best), ties.size > 1)


def reconstruct_bruteforce(muhat, delta: float, n: int) -> SourceString:
    """Closest source in l1 mean-trace distance; lexicographically first on ties."""
    return bruteforce_decode(muhat, delta, n).recovered


# -- pipeline -----------------------------------------------------------------

def end_to_end(x: SourceString, params: ChannelParams, m: int,
               cfg: ReconstructionConfig | None = None, seed=0,
               threads: int | None = 1) -> ReconstructionReport:
    """Sample m traces, average them, decode, and compare with x."""
    cfg = cfg or ReconstructionConfig()
    n = len(x)
    batch = sample_traces(x, params, m, seed, threads=threads)
    N = n if params.sigma == 0.0 else effective_trace_length(n, params.sigma)
    muhat = empirical_mean_trace(batch, N)
    if cfg.delta is not None:
        delta = cfg.delta
    else:
        # mean trace length is n (sigma/(1-sigma) + rho)
        rho = estimate_retention(batch, n) - params.sigma / (1.0 - params.sigma)
        delta = min(max(1.0 - rho, 0.0), 1.0 - 1e-9)
    used = ChannelParams(delta, params.sigma, params.gamma)
    if used.is_deletion_only:
        exact = exact_mean_trace_deletion(x, params.delta)
        report = reconstruct_mean_based(muhat.values, delta, n, cfg)
    else:
        exact = exact_mean_trace_general(x, params)
        report = reconstruct_mean_based(muhat.values, None, n, cfg, params=used)
    report.success = report.recovered == x
    report.l1_deviation = mean_trace_l1_distance(muhat.values, exact.values[:N])
    report.extra.update({"m": m, "delta_used": delta, "seed": seed})
    return report


__all__ = [
    "BoxLSQ", "BruteForceDecode", "EpsilonResult", "ReconstructionConfig",
    "ReconstructionReport", "all_sources", "bruteforce_decode", "end_to_end",
    "epsilon_del_bruteforce", "epsilon_frac", "required_cost", "reconstruct_bruteforce",
    "reconstruct_mean_based", "samples_for_accuracy",
]
