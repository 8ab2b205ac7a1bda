"""Random binning with the proportional-probability encoder (PPE).

Every ``y^n`` in Y^n joins the codebook independently with probability
``2^{-nR'}`` and gets a uniform bin index. The encoder picks bin ``m`` with
probability proportional to the forward-channel mass of the member sequences
in that bin; the decoder returns the most probable member of the received
bin. Y^n is enumerated in full, so ``n`` stays small (about 20 for binary Y).
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import streams
from .codebooks import codebook_size
from .errors import BINNING_BUDGET, ENUMERATION_BUDGET, ConfigError, SizeError, budget
from .prob import (
    Channel, JointPmf, Pmf, compose, conditional_entropy, entropy, iid_power, marginalize,
    total_variation,
)
from .sources import DistortionMeasure, SourceModel, sample_iid, sequence_distortion
from .systems import SystemReport, _aggregate, _run_trials, _warn, run_p2p

LN2 = math.log(2.0)


@dataclass(frozen=True)
class BinningCodebook:
    n: int
    k: int
    R: float
    Rprime: float
    member: np.ndarray = field(repr=False)  # bool, one entry per y^n (row-major)
    bins: np.ndarray = field(repr=False)    # int64 bin index per y^n, 0-based
    n_bins: int
    seed: int

    def sequence(self, flat: int) -> np.ndarray:
        return np.array(np.unravel_index(flat, (self.k,) * self.n), dtype=np.int64)


def _check_space(k: int, n: int, limit: int) -> None:
    if k**n > limit:
        raise SizeError(f"|Y|^n = {k}^{n} exceeds the enumeration budget {limit}; "
                        f"largest feasible n is {int(math.log(limit, k))}")


def generate_binning(k: int, n: int, R: float, Rprime: float, seed: int) -> BinningCodebook:
    if n < 1 or k < 1:
        raise ConfigError("need n >= 1 and a non-empty alphabet")
    if R < 0 or Rprime < 0:
        raise ConfigError("rates must be non-negative")
    _check_space(k, n, budget(BINNING_BUDGET))
    n_bins = codebook_size(n, R)
    rng = np.random.Generator(np.random.Philox(key=int(seed) % 2**64))
    size = k**n
    member = rng.random(size) < 2.0 ** (-n * Rprime)
    bins = rng.integers(0, n_bins, size=size)
    member.setflags(write=False)
    bins.setflags(write=False)
    return BinningCodebook(n, k, float(R), float(Rprime), member, bins, n_bins, int(seed))


def _log_rows_product(log_rows: np.ndarray) -> np.ndarray:
    """``out[flat] = sum_t log_rows[t, y_t]`` over all y^n, row-major."""
    out = np.zeros(1)
    for row in log_rows:
        out = (out[:, None] + row[None, :]).ravel()
    return out


def _forward_log(fwd: Channel, x) -> np.ndarray:
    x = np.asarray(x)
    with np.errstate(divide="ignore"):
        rows = np.log(fwd.matrix[x])
    return _log_rows_product(rows)


def ppe_weights(bcb: BinningCodebook, fwd_channel: Channel, x_seq) -> np.ndarray:
    """log2 G(m | x^n) for every bin; ``-inf`` for bins with no member mass."""
    x = np.asarray(x_seq)
    if x.size != bcb.n:
        raise ConfigError("source block length does not match the binning codebook")
    if fwd_channel.n_outputs != bcb.k:
        raise ConfigError("forward channel output alphabet must match Y")
    lp = _forward_log(fwd_channel, x)
    lp_members = lp[bcb.member]
    if lp_members.size == 0 or np.all(np.isneginf(lp_members)):
        return np.full(bcb.n_bins, -np.inf)
    top = lp_members.max()
    g = np.bincount(bcb.bins[bcb.member], weights=np.exp(lp_members - top), minlength=bcb.n_bins)
    with np.errstate(divide="ignore"):
        return (np.log(g) + top) / LN2


def ppe_law(bcb: BinningCodebook, fwd_channel: Channel, x_seq) -> np.ndarray:
    """Exact bin law given ``x^n`` (uniform when every bin has zero weight)."""
    w = ppe_weights(bcb, fwd_channel, x_seq)
    if np.all(np.isneginf(w)):
        return np.full(w.size, 1.0 / w.size)
    ln = w * LN2
    return np.exp(ln - logsumexp(ln))


def ppe_encode(bcb: BinningCodebook, fwd_channel: Channel, x_seq, rng: np.random.Generator):
    """Sample a bin with probability proportional to G(m | x^n).

    Draws a member ``y^n`` with probability proportional to ``P(y^n | x^n)`` and
    returns its bin, which has exactly the G law. Returns
    ``(bin, intended_y_flat, fallback)``; ``intended_y_flat`` is -1 on fallback.
    """
    lp = _forward_log(fwd_channel, np.asarray(x_seq))
    idx = np.flatnonzero(bcb.member)
    if idx.size == 0 or np.all(np.isneginf(lp[idx])):
        return int(rng.integers(bcb.n_bins)), -1, True
    pick = idx[int(np.argmax(lp[idx] + rng.gumbel(size=idx.size)))]
    return int(bcb.bins[pick]), int(pick), False


def sw_decode(bcb: BinningCodebook, prior: Pmf, m: int, log_prior: np.ndarray | None = None):
    """Most probable member of bin ``m`` under the i.i.d. prior; lowest (lexicographic) index on ties.

    Returns ``(y_flat, failed)``; ``failed`` marks an empty bin, decoded as sequence 0.
    """
    if not 0 <= m < bcb.n_bins:
        raise IndexError(f"bin {m} out of range {bcb.n_bins}")
    if log_prior is None:
        with np.errstate(divide="ignore"):
            log_prior = _log_rows_product(np.log(np.tile(prior.probs, (bcb.n, 1))))
    cand = np.flatnonzero(bcb.member & (bcb.bins == m))
    if cand.size == 0:
        return 0, True
    return int(cand[int(np.argmax(log_prior[cand]))]), False


def run_ppe(p_x: Pmf, test_channel: Channel, d: DistortionMeasure, R: float, Rprime: float,
            n: int, D: float, trials: int, seed: int, *, threads: int = 1) -> SystemReport:
    """PPE + max-probability bin decoder; ``decode_error_rate`` counts decoded != intended."""
    joint = compose(p_x, test_channel)
    if joint.shape != d.shape:
        raise ConfigError(f"distortion shape {d.shape} does not match the joint {joint.shape}")
    p_y = marginalize(joint, [1])
    info = {"H_Y": entropy(p_y), "H_Y_given_X": conditional_entropy(joint),
            "E_d": float((joint.probs * d.matrix).sum())}
    notes: list = []
    if Rprime >= info["H_Y_given_X"]:
        _warn(notes, f"R' = {Rprime} is not below H(Y|X) = {info['H_Y_given_X']:.5f}")
    if R + Rprime <= info["H_Y"]:
        _warn(notes, f"R + R' = {R + Rprime} does not exceed H(Y) = {info['H_Y']:.5f}")
    bcb = generate_binning(p_y.size, n, R, Rprime, streams.derive_seed(seed, streams.CODEBOOK))
    with np.errstate(divide="ignore"):
        log_prior = _log_rows_product(np.log(np.tile(p_y.probs, (n, 1))))
    model = SourceModel(Pmf(p_x.probs), n)

    def trial(i):
        rng = streams.derive_stream(seed, streams.TRIAL, i)
        x = sample_iid(model, rng)
        m, intended, fb = ppe_encode(bcb, test_channel, x, rng)
        y_flat, failed = sw_decode(bcb, p_y, m, log_prior)
        dist = sequence_distortion(x, bcb.sequence(y_flat), d)
        return dist, dist > D, failed or y_flat != intended, int(fb)

    results = _run_trials(trial, trials, threads)
    config = {"R": R, "Rprime": Rprime, "n": n, "D": D, "trials": trials}
    return _aggregate("ppe", results, 1, "binning", seed, info, notes, config, has_decoder=True)


def compare(p_x: Pmf, test_channel: Channel, d: DistortionMeasure, R: float, Rprime: float,
            n: int, D: float, trials: int, seed: int, *, threads: int = 1):
    """Likelihood encoder at rate R next to the PPE at (R, R'), same source and test channel."""
    lik = run_p2p(p_x, test_channel, d, R, n, D, trials, seed, threads=threads)
    ppe = run_ppe(p_x, test_channel, d, R, Rprime, n, D, trials, seed, threads=threads)
    return lik, ppe


def comparison_csv(n: int, R: float, Rprime: float, lik: SystemReport, ppe: SystemReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["encoder", "n", "R", "Rprime", "mean_distortion", "excess_freq", "decode_fail_rate"])
    w.writerow(["lik", n, repr(R), "", repr(lik.mean_distortion[0]), repr(lik.excess_freq), ""])
    w.writerow(["ppe", n, repr(R), repr(Rprime), repr(ppe.mean_distortion[0]), repr(ppe.excess_freq),
                repr(ppe.decode_error_rate)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# uniform bin index of an i.i.d. Y^n is nearly independent of X^n (binning TV)


def binning_tv(joint: JointPmf, n: int, rate: float, seed: int) -> float:
    """Exact TV between P_{X^n B} and P_{X^n} x Unif(B), B a random binning of Y^n at ``rate``."""
    kx, ky = joint.shape
    limit = budget(ENUMERATION_BUDGET)
    if (kx * ky) ** n > limit:
        raise SizeError(f"|X|^n |Y|^n = {(kx * ky) ** n} exceeds the enumeration budget {limit}")
    n_bins = codebook_size(n, rate)
    rng = np.random.Generator(np.random.Philox(key=int(seed) % 2**64))
    bins = rng.integers(0, n_bins, size=ky**n)
    table = np.ones((1, 1))
    for _ in range(n):
        table = np.kron(table, joint.probs)
    onehot = np.zeros((ky**n, n_bins))
    onehot[np.arange(ky**n), bins] = 1.0
    p_xb = table @ onehot
    px_n = iid_power(marginalize(joint, [0]), n)
    return total_variation(p_xb, np.outer(px_n, np.full(n_bins, 1.0 / n_bins)))


def binning_tv_mean(joint: JointPmf, n: int, rate: float, n_seeds: int, seed: int,
                threads: int = 1) -> float:
    seeds = [streams.derive_seed(seed, f"binning_tv/{n}", i) for i in range(n_seeds)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(lambda s: binning_tv(joint, n, rate, s), seeds))
    else:
        vals = [binning_tv(joint, n, rate, s) for s in seeds]
    return float(np.mean(vals))
