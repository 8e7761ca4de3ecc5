"""Exact and empirical mean traces.

The mean trace of ``x`` is the expectation of a trace zero-padded (or
truncated) to a fixed length.  For the deletion channel the length is ``n``;
with insertions it is the effective trace length bound ``N``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .channel import ChannelParams, SourceString, TraceBatch

MEMORY_CAP = 10**6


class MeanTraceError(ValueError):
    pass


@dataclass
class MeanTrace:
    values: np.ndarray
    n: int
    delta: float = 0.0
    sigma: float = 0.0
    gamma: float = 0.0
    m: int = 0  # traces averaged; 0 marks an exact mean trace
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 1:
            raise MeanTraceError("mean trace must be a nonempty vector")

    @property
    def N(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def to_dict(self) -> dict:
        return {
            "schema": "v1",
            "values": self.values.tolist(),
            "meta": {"n": self.n, "N": self.N, "delta": self.delta, "sigma": self.sigma,
                     "gamma": self.gamma, "m": self.m, **self.meta},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "MeanTrace":
        meta = dict(data["meta"])
        values = np.asarray(data["values"], dtype=float)
        if meta.pop("N", values.size) != values.size:
            raise MeanTraceError("metadata N disagrees with the number of values")
        known = {k: meta.pop(k) for k in ("n", "delta", "sigma", "gamma", "m") if k in meta}
        return cls(values, meta=meta, **known)

    @classmethod
    def from_json(cls, text: str) -> "MeanTrace":
        return cls.from_dict(json.loads(text))


def _coeffs(x) -> np.ndarray:
    if isinstance(x, SourceString):
        return x.bits.astype(float)
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise MeanTraceError("source must be a nonempty vector")
    if np.any(np.abs(arr) > 1.0):
        raise MeanTraceError("fractional source entries must lie in [-1, 1]")
    return arr


def binomial_pmf_table(n: int, rho: float) -> np.ndarray:
    """Lower-triangular table ``T[i, j] = Pr[Bin(i, rho) = j]`` for i < n.

    Built row by row from p(i, j) = p(i-1, j)(1-rho) + p(i-1, j-1) rho, which
    never forms a binomial coefficient.
    """
    table = np.zeros((n, n))
    table[0, 0] = 1.0
    for i in range(1, n):
        prev = table[i - 1, :i]
        table[i, :i] += prev * (1.0 - rho)
        table[i, 1:i + 1] += prev * rho
    return table


def deletion_mean_matrix(n: int, delta: float) -> np.ndarray:
    """Matrix ``A`` with ``mu = A @ x`` for the deletion channel."""
    rho = 1.0 - delta
    return rho * binomial_pmf_table(n, rho).T


def exact_mean_trace_deletion(x, delta: float) -> MeanTrace:
    if not 0.0 <= delta < 1.0:
        raise MeanTraceError(f"delta must lie in [0, 1), got {delta!r}")
    xs = _coeffs(x)
    values = deletion_mean_matrix(xs.size, delta) @ xs
    return MeanTrace(values, xs.size, delta)


def effective_trace_length(n: int, sigma: float) -> int:
    if not 0.0 <= sigma < 1.0:
        raise MeanTraceError(f"sigma must lie in [0, 1), got {sigma!r}")
    return math.ceil(10.0 * (n - math.log1p(-sigma)) / (1.0 - sigma))


def _times_geometric(series: np.ndarray, sigma: float) -> np.ndarray:
    """Multiply a truncated power series by (1 - sigma)/(1 - sigma z)."""
    if sigma == 0.0:
        return series
    return (1.0 - sigma) * lfilter([1.0], [1.0, -sigma], series)


def general_mean_matrix(n: int, params: ChannelParams, N: int | None = None,
                        cap: int = MEMORY_CAP) -> np.ndarray:
    """Matrix ``A`` (N x n) with ``mu = A @ x`` for the general channel.

    Column ``i`` holds the first N coefficients of
    (1-delta)(1-gamma) F_G(z)^(i+1) (delta + rho z)^i, built by repeated
    truncated multiplication, O(nN) per column.
    """
    if N is None:
        N = effective_trace_length(n, params.sigma)
    if N > cap:
        raise MeanTraceError(f"N={N} exceeds the configured coefficient cap {cap}")
    delta, rho, sigma = params.delta, params.rho, params.sigma
    A = np.zeros((N, n))
    series = np.zeros(N)
    series[0] = 1.0
    series = _times_geometric(series, sigma)
    for i in range(n):
        A[:, i] = series
        nxt = delta * series
        nxt[1:] += rho * series[:-1]
        series = _times_geometric(nxt, sigma)
    return (1.0 - delta) * (1.0 - params.gamma) * A


def exact_mean_trace_general(x, params: ChannelParams, cap: int = MEMORY_CAP) -> MeanTrace:
    xs = _coeffs(x)
    A = general_mean_matrix(xs.size, params, cap=cap)
    return MeanTrace(A @ xs, xs.size, params.delta, params.sigma, params.gamma)


def empirical_mean_trace(traces, N: int) -> MeanTrace:
    """Average of the traces after zero-padding or truncating each to length N."""
    if N < 1:
        raise MeanTraceError(f"N must be >= 1, got {N}")
    if not isinstance(traces, TraceBatch):
        traces = TraceBatch.from_traces(traces)
    m = len(traces)
    if m == 0:
        raise MeanTraceError("cannot average an empty list of traces")
    lengths = traces.lengths
    pos = np.arange(traces.flat.size) - np.repeat(traces.offsets[:-1], lengths)
    inside = pos < N
    sums = np.bincount(pos[inside], weights=traces.flat[inside], minlength=N)
    p = traces.params
    return MeanTrace(sums / m, traces.n, p.delta, p.sigma, p.gamma, m)


def mean_trace_l1_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise MeanTraceError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def estimate_retention(traces, n: int) -> float:
    """Retention estimate (mean trace length)/n, clamped to [1e-9, 1 - 1e-9]."""
    if isinstance(traces, TraceBatch):
        mean_len = float(traces.lengths.mean())
    else:
        lens = [len(t) for t in traces]
        mean_len = sum(lens) / len(lens)
    return min(max(mean_len / n, 1e-9), 1.0 - 1e-9)
