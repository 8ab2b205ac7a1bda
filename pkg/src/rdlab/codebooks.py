"""Random codebooks with single or double indices.

Codeword symbols come from a Philox counter-based stream keyed by the
codebook seed: symbol ``t`` of flat codeword index ``j`` is produced from the
``(j * n + t)``-th uniform of that stream, so any codeword can be regenerated
on its own (see :func:`regenerate_codeword`).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CODEBOOK_SYMBOL_BUDGET, ConfigError, SizeError, budget
from .prob import Pmf

MAX_LOG2_INDEX = 62


def codebook_size(n: int, rate: float) -> int:
    """``floor(2^{nR})`` with a floor of 1."""
    if rate < 0:
        raise ConfigError(f"rate must be non-negative, got {rate}")
    bits = n * rate
    if bits >= MAX_LOG2_INDEX:
        raise SizeError(
            f"2^(nR) = 2^{bits:.2f} overflows the index type; max feasible nR is {MAX_LOG2_INDEX}"
        )
    return max(1, math.floor(2.0**bits * (1 + 1e-12)))


def log2_codebook_size(n: int, rate: float) -> float:
    """log2 of the codebook size; exact below the index limit, nR above it."""
    bits = n * rate
    if bits >= MAX_LOG2_INDEX:
        return bits
    return math.log2(codebook_size(n, rate))


def _inverse_cdf(marginal: Pmf) -> np.ndarray:
    p = marginal.probs
    cdf = np.cumsum(p)
    last = np.flatnonzero(p > 0)[-1]
    cdf[last:] = 1.0
    return cdf


def _symbols(uniforms: np.ndarray, marginal: Pmf) -> np.ndarray:
    cdf = _inverse_cdf(marginal)
    idx = np.searchsorted(cdf, uniforms, side="right")
    dtype = np.uint8 if marginal.size <= 256 else np.int32
    return idx.astype(dtype)


def _philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) % 2**64))


@dataclass(frozen=True)
class Codebook:
    n: int
    rates: tuple[float, ...]
    words: np.ndarray = field(repr=False)
    marginal: Pmf
    seed: int

    @property
    def index_shape(self) -> tuple[int, ...]:
        return self.words.shape[:-1]

    @property
    def size(self) -> int:
        return int(np.prod(self.index_shape))

    @property
    def double(self) -> bool:
        return len(self.rates) == 2

    def flat_words(self) -> np.ndarray:
        return self.words.reshape(-1, self.n)


def generate(marginal: Pmf, n: int, rate: float, seed: int, rate2: float | None = None,
             symbol_budget: int | None = None) -> Codebook:
    """Draw ``floor(2^{nR})`` (times ``floor(2^{nR'})``) i.i.d. codewords from ``marginal``."""
    if n < 1:
        raise ConfigError(f"blocklength must be >= 1, got {n}")
    rates = (float(rate),) if rate2 is None else (float(rate), float(rate2))
    shape = tuple(codebook_size(n, r) for r in rates)
    total = int(np.prod(shape)) * n
    limit = budget(CODEBOOK_SYMBOL_BUDGET) if symbol_budget is None else symbol_budget
    if total > limit:
        raise SizeError(
            f"codebook needs {total} symbols, budget is {limit}; "
            f"max feasible total nR is about {math.log2(max(limit // n, 1)):.2f}"
        )
    uniforms = _philox(seed).random(total)
    words = _symbols(uniforms, marginal).reshape(shape + (n,))
    words.setflags(write=False)
    return Codebook(n=n, rates=rates, words=words, marginal=marginal, seed=int(seed))


def regenerate_codeword(marginal: Pmf, n: int, seed: int, flat_index: int) -> np.ndarray:
    """Rebuild one codeword directly from the counter stream."""
    bitgen = np.random.Philox(key=int(seed) % 2**64)
    start = flat_index * n
    # Philox4x64 emits four 64-bit words per counter step.
    bitgen.advance(start // 4)
    gen = np.random.Generator(bitgen)
    u = gen.random(start % 4 + n)[start % 4:]
    return _symbols(u, marginal)


def lookup(cb: Codebook, m: int, m2: int | None = None) -> np.ndarray:
    """Codeword at index ``m`` (or ``(m, m2)`` for double-indexed codebooks); 0-based."""
    if cb.double != (m2 is not None):
        raise ConfigError("lookup: index arity does not match the codebook")
    idx = (m,) if m2 is None else (m, m2)
    for i, bound in zip(idx, cb.index_shape):
        if not 0 <= i < bound:
            raise IndexError(f"codebook index {idx} out of range {cb.index_shape}")
    return cb.words[idx]


def sub_codebook(cb: Codebook, m: int) -> np.ndarray:
    """Read-only view of the codewords ``{(m, a)}_a`` sharing first index ``m``."""
    if not cb.double:
        raise ConfigError("sub_codebook needs a double-indexed codebook")
    if not 0 <= m < cb.index_shape[0]:
        raise IndexError(f"first index {m} out of range {cb.index_shape[0]}")
    return cb.words[m]


def dumps(cb: Codebook) -> str:
    """Text dump: header ``n,R[,R'],seed,alphabet`` then one codeword per line."""
    buf = io.StringIO()
    header = [str(cb.n)] + [repr(r) for r in cb.rates] + [str(cb.seed), str(cb.marginal.size)]
    buf.write(",".join(header) + "\n")
    for word in cb.flat_words():
        buf.write(",".join(str(int(s)) for s in word) + "\n")
    return buf.getvalue()


def loads(text: str) -> tuple[dict, np.ndarray]:
    lines = text.strip().splitlines()
    head = lines[0].split(",")
    meta = {
        "n": int(head[0]),
        "rates": tuple(float(r) for r in head[1:-2]),
        "seed": int(head[-2]),
        "alphabet": int(head[-1]),
    }
    words = np.array([[int(s) for s in line.split(",")] for line in lines[1:]], dtype=np.int64)
    return meta, words
