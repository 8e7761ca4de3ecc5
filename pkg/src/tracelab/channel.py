"""Deletion channel and the general insertion/deletion/bit-flip channel.

Bits are signs in {-1, +1}.  A batch of traces is stored ragged: one flat
``int8`` array plus offsets, because traces from the same source have
different lengths and Monte-Carlo batches run into the millions.

Randomness: every batch is generated from a ``numpy.random.PCG64`` stream.
The master seed is expanded with ``SeedSequence`` and split into one child
stream per block of ``BLOCK`` traces, so the output for a given seed does not
depend on how many worker threads draw the blocks.
"""

from __future__ import annotations

import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

BLOCK = 1 << 14

_SIGNS = {"+": 1, "-": -1}


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class SourceString:
    bits: np.ndarray

    def __init__(self, bits: Iterable[int] | str):
        if isinstance(bits, str):
            bits = parse_signs(bits)
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        if arr.ndim != 1 or arr.size == 0:
            raise ChannelError("source string must be a nonempty 1-d sequence")
        if not np.all((arr == 1) | (arr == -1)):
            raise ChannelError("source bits must be exactly -1 or +1")
        arr = arr.astype(np.int8)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    def __len__(self) -> int:
        return self.bits.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, SourceString):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def __str__(self) -> str:
        return format_signs(self.bits)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "SourceString":
        return cls(rng.choice(np.array([-1, 1], dtype=np.int8), size=n))


@dataclass(frozen=True)
class ChannelParams:
    """Deletion rate ``delta``, insertion rate ``sigma`` and flip intensity
    ``gamma`` (each transmitted bit is flipped with probability gamma/2)."""

    delta: float = 0.0
    sigma: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("delta", "sigma", "gamma"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v < 1.0):
                raise ChannelError(f"{name} must lie in [0, 1), got {v!r}")

    @property
    def rho(self) -> float:
        return 1.0 - self.delta

    @property
    def r(self) -> float:
        """Radius of the circle traced by the channel's Mobius map."""
        if self.sigma == 0.0:
            return self.rho
        return (self.rho + self.delta * self.sigma) / (1.0 + self.sigma)

    @property
    def is_deletion_only(self) -> bool:
        return self.sigma == 0.0 and self.gamma == 0.0


def parse_signs(text: str) -> np.ndarray:
    try:
        return np.fromiter((_SIGNS[c] for c in text), dtype=np.int8, count=len(text))
    except KeyError as exc:
        raise ChannelError(f"invalid sign character {exc.args[0]!r}") from None


def format_signs(bits) -> str:
    return "".join("+" if b > 0 else "-" for b in bits)


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def transmit_deletion(x: SourceString, delta: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= delta < 1.0:
        raise ChannelError(f"delta must lie in [0, 1), got {delta!r}")
    keep = rng.random(len(x)) >= delta
    return x.bits[keep].copy()


def geometric_failures(u: np.ndarray, sigma: float) -> np.ndarray:
    """Number of failures before the first success, success prob 1 - sigma.

    Inverse CDF: floor(ln U / ln sigma) with U uniform on (0, 1].
    """
    if sigma == 0.0:
        return np.zeros(u.shape, dtype=np.int64)
    return np.floor(np.log(u) / math.log(sigma)).astype(np.int64)


def _per_bit_outcomes(bits: np.ndarray, params: ChannelParams, rng: np.random.Generator, m: int):
    """Draw the per-source-bit channel behaviour for ``m`` independent traces.

    Returns the insertion counts, the keep mask and the sign multiplier of the
    transmitted bit, all of shape (m, n).
    """
    n = bits.size
    # 1 - random() lies in (0, 1], keeping log finite.
    ins = geometric_failures(1.0 - rng.random((m, n)), params.sigma)
    keep = rng.random((m, n)) >= params.delta
    if params.gamma > 0.0:
        flip = rng.random((m, n)) < params.gamma / 2.0
        mult = np.where(flip, -1, 1).astype(np.int8)
    else:
        mult = np.ones((m, n), dtype=np.int8)
    return ins, keep, mult


def _assemble(bits, ins, keep, mult, rng):
    """Build ragged traces from per-bit outcomes.

    Every output slot starts as a uniformly random sign; the slot that carries
    a transmitted source bit is then overwritten with +-x_i.
    """
    m, n = ins.shape
    seg = ins + keep
    lengths = seg.sum(axis=1)
    total = int(lengths.sum())
    if ins.any():
        flat = rng.choice(np.array([-1, 1], dtype=np.int8), size=total)
    else:
        flat = np.empty(total, dtype=np.int8)
    seg_end = np.cumsum(seg.ravel())
    slot = (seg_end - 1).reshape(m, n)
    flat[slot[keep]] = (bits[None, :] * mult)[keep]
    offsets = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    return flat, offsets


def transmit_general(x: SourceString, params: ChannelParams, rng: np.random.Generator) -> np.ndarray:
    """One trace through the general channel.

    Per source bit: Geometric(1 - sigma) uniformly random bits, then with
    probability delta nothing more, otherwise x_i (or -x_i with probability
    gamma/2).
    """
    flat, _ = _assemble(x.bits, *_per_bit_outcomes(x.bits, params, rng, 1), rng)
    return flat


@dataclass
class TraceBatch(Sequence):
    """Ragged batch of traces: trace ``t`` is ``flat[offsets[t]:offsets[t+1]]``."""

    flat: np.ndarray
    offsets: np.ndarray
    n: int = 0
    params: ChannelParams = field(default_factory=ChannelParams)
    seed: int | None = None

    def __len__(self) -> int:
        return self.offsets.size - 1

    def __getitem__(self, t):
        if isinstance(t, slice):
            return [self[i] for i in range(*t.indices(len(self)))]
        if t < 0:
            t += len(self)
        if not 0 <= t < len(self):
            raise IndexError(t)
        return self.flat[self.offsets[t]:self.offsets[t + 1]]

    def __iter__(self) -> Iterator[np.ndarray]:
        for t in range(len(self)):
            yield self[t]

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    @classmethod
    def from_traces(cls, traces: Iterable[Sequence[int]], n: int = 0,
                    params: ChannelParams | None = None, seed: int | None = None) -> "TraceBatch":
        arrays = [np.asarray(t, dtype=np.int8).ravel() for t in traces]
        lengths = np.array([a.size for a in arrays], dtype=np.int64)
        offsets = np.zeros(len(arrays) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        flat = np.concatenate(arrays) if arrays else np.zeros(0, dtype=np.int8)
        return cls(flat.astype(np.int8), offsets, n, params or ChannelParams(), seed)

    @classmethod
    def concatenate(cls, batches: Sequence["TraceBatch"]) -> "TraceBatch":
        flats = [b.flat for b in batches]
        lengths = np.concatenate([b.lengths for b in batches]) if batches else np.zeros(0, np.int64)
        offsets = np.zeros(lengths.size + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        first = batches[0] if batches else cls(np.zeros(0, np.int8), offsets)
        return cls(np.concatenate(flats) if flats else np.zeros(0, np.int8), offsets,
                   first.n, first.params, first.seed)


def _block_sizes(m: int) -> list[int]:
    full, rest = divmod(m, BLOCK)
    return [BLOCK] * full + ([rest] if rest else [])


def sample_traces(x: SourceString, params: ChannelParams, m: int, seed,
                  threads: int | None = 1) -> TraceBatch:
    """Draw ``m`` independent traces of ``x``.

    ``seed`` is an int or a ``SeedSequence``.  Block ``b`` of ``BLOCK``
    traces uses child stream ``b`` of the seed sequence, so results are
    bit-identical for any ``threads`` value.
    """
    if m < 1:
        raise ChannelError(f"m must be >= 1, got {m}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    sizes = _block_sizes(m)
    children = ss.spawn(len(sizes))

    def draw(job):
        size, child = job
        rng = np.random.Generator(np.random.PCG64(child))
        outcomes = _per_bit_outcomes(x.bits, params, rng, size)
        return _assemble(x.bits, *outcomes, rng)

    jobs = list(zip(sizes, children))
    workers = threads or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(draw, jobs))
    else:
        parts = [draw(j) for j in jobs]
    batches = [TraceBatch(flat, off, len(x), params) for flat, off in parts]
    out = TraceBatch.concatenate(batches)
    out.seed = seed if isinstance(seed, int) else None
    return out


def is_subsequence(trace: Sequence[int], source: Sequence[int]) -> bool:
    it = iter(source)
    return all(any(b == s for s in it) for b in trace)


# -- trace batch file format -------------------------------------------------

HEADER_RE = re.compile(
    r"^#tracelab v1 n=(?P<n>\d+) delta=(?P<delta>\S+) sigma=(?P<sigma>\S+)"
    r" gamma=(?P<gamma>\S+) seed=(?P<seed>\S+)$"
)


def write_trace_file(path, batch: TraceBatch) -> None:
    p = batch.params
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"#tracelab v1 n={batch.n} delta={p.delta!r} sigma={p.sigma!r} "
                 f"gamma={p.gamma!r} seed={batch.seed}\n")
        for t in batch:
            fh.write(format_signs(t))
            fh.write("\n")


def read_trace_file(path) -> TraceBatch:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().rstrip("\n")
        match = HEADER_RE.match(header)
        if not match:
            raise ChannelError(f"{path}: missing or malformed '#tracelab v1' header")
        lines = fh.read().split("\n")
    # A trailing newline terminates the last record rather than adding an empty trace.
    if lines and lines[-1] == "":
        lines.pop()
    params = ChannelParams(float(match["delta"]), float(match["sigma"]), float(match["gamma"]))
    seed = None if match["seed"] == "None" else int(match["seed"])
    return TraceBatch.from_traces((parse_signs(s) for s in lines), int(match["n"]), params, seed)
