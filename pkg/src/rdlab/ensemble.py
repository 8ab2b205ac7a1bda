"""Codebook-ensemble simulation for codebooks too large to store.

A random codebook of ``N`` i.i.d. codewords interacts with a fixed sequence
``s`` (the source block for an encoder, the side information for a decoder)
only through each codeword's conditional type given ``s``: the per-symbol
likelihood product, the distortion and the channel score are all functions
of the counts ``c[g, y]`` of codeword symbol ``y`` on the positions where
``s == g``. So instead of the codewords themselves we draw how many of the
``N`` codewords fall in each type class (multinomial, or independent Poisson
when ``N`` exceeds the integer range), run the encoder or decoder on the
classes, and finally draw the selected codeword uniformly inside its class.

Every trial therefore sees a fresh codebook; averaged over trials this is the
codebook-averaged performance. The encoder path is exact in law. The decoder
path treats the competitors in the transmitted row as untilted i.i.d. draws;
conditioning on the encoder's choice changes their law by ``O(2^{-nR})`` in
total variation, which we ignore.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import CLASS_BUDGET, SizeError, budget

POISSON_NORMAL_SWITCH = 1e10
TIE_RTOL = 1e-9


def compositions(total: int, k: int) -> np.ndarray:
    """All length-``k`` non-negative integer vectors summing to ``total``."""
    if k == 1:
        return np.array([[total]], dtype=np.int64)
    if k == 2:
        j = np.arange(total + 1, dtype=np.int64)
        return np.stack([total - j, j], axis=1)
    rows = []
    for bars in itertools.combinations(range(total + k - 1), k - 1):
        edges = (-1,) + bars + (total + k - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(k)])
    return np.array(rows, dtype=np.int64)


def _weighted(counts: np.ndarray, logs: np.ndarray) -> np.ndarray:
    # counts * logs with 0 * (-inf) = 0
    with np.errstate(invalid="ignore"):
        prod = np.where(counts > 0, counts * logs, 0.0)
    return prod.sum(axis=1)


class TypeClasses:
    """Conditional type classes of length-n sequences over ``k`` symbols given ``cond``.

    ``log_marginal[y]`` is the natural-log codeword symbol law; ``log_kernel[y, s]``
    scores codeword symbol ``y`` against conditioning symbol ``s`` (natural log).
    """

    def __init__(self, cond, log_marginal, log_kernel, class_budget: int | None = None):
        cond = np.asarray(cond)
        self.n = cond.size
        self.k = len(log_marginal)
        self.cond = cond
        self.groups = [(int(s), np.flatnonzero(cond == s)) for s in np.unique(cond)]
        self.comps = [compositions(pos.size, self.k) for _, pos in self.groups]
        self.shape = tuple(c.shape[0] for c in self.comps)
        size = math.prod(self.shape)
        limit = budget(CLASS_BUDGET) if class_budget is None else class_budget
        if size > limit:
            raise SizeError(f"{size} conditional type classes exceed the budget of {limit}")
        lm = np.asarray(log_marginal, dtype=float)
        lk = np.asarray(log_kernel, dtype=float)
        self._logp_g = []
        self._score_g = []
        for (s, pos), comp in zip(self.groups, self.comps):
            multinom = gammaln(pos.size + 1) - gammaln(comp + 1).sum(axis=1)
            self._logp_g.append(multinom + _weighted(comp, lm[None, :]))
            self._score_g.append(_weighted(comp, lk[:, s][None, :]))
        self.log_prob = self._outer(self._logp_g)
        self.score = self._outer(self._score_g)

    @staticmethod
    def _outer(parts):
        total = np.zeros(())
        for part in parts:
            total = total[..., None] + part
        return total.ravel()

    def class_of(self, seq) -> int:
        seq = np.asarray(seq)
        idx = []
        for (_, pos), comp in zip(self.groups, self.comps):
            counts = np.bincount(seq[pos], minlength=self.k)
            idx.append(int(np.flatnonzero((comp == counts).all(axis=1))[0]))
        return int(np.ravel_multi_index(idx, self.shape)) if idx else 0

    def score_of_class(self, flat: int) -> float:
        idx = np.unravel_index(flat, self.shape)
        total = 0.0
        for part, i in zip(self._score_g, idx):
            total = total + part[i]
        return float(total)

    def sample_sequence(self, flat: int, rng: np.random.Generator) -> np.ndarray:
        """A uniformly random sequence from class ``flat``."""
        out = np.empty(self.n, dtype=np.int64)
        for (_, pos), comp, i in zip(self.groups, self.comps, np.unravel_index(flat, self.shape)):
            symbols = np.repeat(np.arange(self.k), comp[i])
            out[pos] = rng.permutation(symbols)
        return out


def class_log_counts(log_prob: np.ndarray, count: int | None, log2_count: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Natural-log number of codewords in each class (``-inf`` when empty).

    ``count`` is the exact codebook size when it fits an int64; pass ``None``
    for larger codebooks, which are then Poissonized with mean ``2**log2_count``.
    """
    finite = np.isfinite(log_prob)
    p = np.zeros_like(log_prob)
    p[finite] = np.exp(log_prob[finite] - logsumexp(log_prob[finite]))
    with np.errstate(divide="ignore"):
        if count is not None:
            if count == 0:
                return np.full(log_prob.shape, -np.inf)
            p = p / p.sum()
            return np.log(rng.multinomial(count, p).astype(float))
        lam_log = log2_count * np.log(2.0) + np.where(finite, np.log(np.where(p > 0, p, 1.0)), -np.inf)
        lam_log[p <= 0] = -np.inf
        counts = np.zeros_like(p)
        small = np.isfinite(lam_log) & (lam_log < np.log(POISSON_NORMAL_SWITCH))
        counts[small] = rng.poisson(np.exp(lam_log[small]))
        big = np.isfinite(lam_log) & ~small
        lam = np.exp(lam_log[big])
        counts[big] = np.maximum(np.round(lam + np.sqrt(lam) * rng.standard_normal(lam.size)), 0.0)
        return np.log(counts)


def _pick_proportional(log_w: np.ndarray, rng: np.random.Generator) -> int:
    return int(np.argmax(log_w + rng.gumbel(size=log_w.size)))


def _tol(ref: float) -> float:
    return TIE_RTOL * max(1.0, abs(ref)) if np.isfinite(ref) else 0.0


def ensemble_encode(cond, log_marginal, log_back, count: int | None, log2_count: float,
                    rng: np.random.Generator, mode: str = "stochastic",
                    class_budget: int | None = None):
    """Likelihood-encode ``cond`` against a fresh random codebook; returns ``(codeword, fallback)``.

    ``log_back[y, x] = ln P_{X|Y}(x | y)``.
    """
    tc = TypeClasses(cond, log_marginal, log_back, class_budget)
    log_k = class_log_counts(tc.log_prob, count, log2_count, rng)
    scores = np.where(np.isfinite(log_k), tc.score, -np.inf)
    if np.all(np.isneginf(scores)):
        # every codeword has zero likelihood: uniform codeword
        return tc.sample_sequence(_pick_proportional(log_k, rng), rng), True
    if mode == "argmax":
        # index order is exchangeable, so the lowest tied index is a uniform tied codeword
        best = scores.max()
        log_w = np.where(scores >= best - _tol(best), log_k, -np.inf)
    else:
        log_w = log_k + scores
    return tc.sample_sequence(_pick_proportional(log_w, rng), rng), False


def ensemble_ml_decode(cond, true_word, log_marginal, log_channel, n_competitors: int | None,
                       log2_competitors: float, rng: np.random.Generator,
                       class_budget: int | None = None):
    """ML-decode the transmitted word among itself plus random competitors.

    ``cond`` is the received sequence and ``log_channel[v, z] = ln P(z | v)``.
    The true word sits at a uniformly random position among the candidates;
    ties go to the lowest index. Returns ``(decoded_word, error, fallback)``.
    """
    true_word = np.asarray(true_word)
    if n_competitors == 0:
        return true_word, False, False
    tc = TypeClasses(cond, log_marginal, log_channel, class_budget)
    true_score = tc.score_of_class(tc.class_of(true_word))
    log_k = class_log_counts(tc.log_prob, n_competitors, log2_competitors, rng)
    present = np.isfinite(log_k)
    scores = np.where(present, tc.score, -np.inf)
    best = scores.max() if np.any(present) else -np.inf
    fallback = bool(np.isneginf(best) and np.isneginf(true_score))
    if fallback:
        tied = present
    elif best > true_score + _tol(true_score):
        flat = _pick_proportional(np.where(scores >= best - _tol(best), log_k, -np.inf), rng)
        return tc.sample_sequence(flat, rng), True, False
    elif best >= true_score - _tol(true_score):
        tied = present & (scores >= true_score - _tol(true_score))
    else:
        return true_word, False, False
    n_tied = float(np.exp(logsumexp(log_k[tied]))) if np.any(tied) else 0.0
    if rng.random() < 1.0 / (n_tied + 1.0):
        return true_word, False, fallback
    flat = _pick_proportional(np.where(tied, log_k, -np.inf), rng)
    return tc.sample_sequence(flat, rng), True, fallback
