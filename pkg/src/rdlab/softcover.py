"""Exact soft-covering total variation at small blocklength.

Sequences ``x^n`` are enumerated in row-major order of symbol indices, so
position 0 is the most significant digit: ``flat = sum_t x_t |X|^{n-1-t}``.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .codebooks import Codebook, generate
from .encoder import EncoderSpec, selection_law
from .errors import ENUMERATION_BUDGET, ConfigError, SizeError, budget
from .prob import Channel, JointPmf, Pmf, iid_power, marginalize, reverse_channel, total_variation


def _check_states(k: int, n: int, extra: int = 1) -> None:
    limit = budget(ENUMERATION_BUDGET)
    states = k**n * extra
    if states > limit:
        n_max = 0
        while k ** (n_max + 1) * extra <= limit:
            n_max += 1
        raise SizeError(f"{states} enumeration states exceed the budget of {limit}; "
                        f"largest feasible n is {n_max}")


def _check_rows(cb: Codebook, back: Channel) -> None:
    if back.n_inputs != cb.marginal.size:
        raise ConfigError("back channel input alphabet must match the codeword alphabet")
    if np.any(back.undefined[np.unique(cb.words)]):
        raise ConfigError("codebook uses a symbol whose back-channel row is undefined")


def _half_products(words: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """``out[m, a] = prod_t kernel[words[m, t], a_t]`` for every block ``a`` (row-major)."""
    out = np.ones((words.shape[0], 1))
    for t in range(words.shape[1]):
        rows = kernel[words[:, t]]
        out = (out[:, :, None] * rows[:, None, :]).reshape(words.shape[0], -1)
    return out


def induced_marginal(cb: Codebook, back_channel: Channel) -> np.ndarray:
    """Output law of a uniformly chosen codeword sent through ``back_channel``, over all of X^n."""
    _check_rows(cb, back_channel)
    k = back_channel.n_outputs
    _check_states(k, cb.n)
    words = cb.flat_words().astype(np.int64)
    kernel = np.nan_to_num(back_channel.matrix)
    h = cb.n // 2
    left = _half_products(words[:, :h], kernel)
    right = _half_products(words[:, h:], kernel)
    return (left.T @ right).ravel() / words.shape[0]


def tv_to_iid(cb: Codebook, back_channel: Channel, p_x: Pmf) -> float:
    return total_variation(induced_marginal(cb, back_channel), iid_power(p_x, cb.n))


def tv_induced_vs_idealized(cb: Codebook, back_channel: Channel, p_x: Pmf,
                            mode: str = "stochastic") -> float:
    """TV between the system joint over (x^n, m) and the idealized one.

    System: ``P_X^n(x) * P_LE(m | x)`` with the encoder's exact selection law.
    Idealized: ``(1/M) * prod_t P_{X|Y}(x_t | y_t(m))``. The decoder is a lookup
    in both, so including ``y^n`` does not change the distance.
    """
    k = back_channel.n_outputs
    _check_states(k, cb.n, cb.size)
    spec = EncoderSpec(cb, back_channel, mode)
    xs = np.array(np.unravel_index(np.arange(k**cb.n), (k,) * cb.n)).T
    px_n = iid_power(p_x, cb.n)
    system = np.stack([px_n[i] * selection_law(spec, x).ravel() for i, x in enumerate(xs)])
    words = cb.flat_words().astype(np.int64)
    kernel = np.nan_to_num(back_channel.matrix)
    ideal = np.prod(kernel[words[None, :, :], xs[:, None, :]], axis=2) / cb.size
    return float(0.5 * np.abs(system - ideal).sum())


@dataclass
class TvSweepReport:
    mode: str
    rows: list = field(default_factory=list)       # (n, R, num_codebooks, mean, min, max)
    per_codebook: list = field(default_factory=list)  # (n, R, codebook_id, tv)

    def mean_tv(self, n: int, R: float) -> float:
        for row in self.rows:
            if row[0] == n and row[1] == R:
                return row[3]
        raise KeyError((n, R))

    def codebook_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "R", "codebook_id", "tv"])
        for n, R, i, tv in self.per_codebook:
            w.writerow([n, repr(R), i, repr(tv)])
        return buf.getvalue()

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "R", "mean_tv", "min_tv", "max_tv"])
        for n, R, _, mean, lo, hi in self.rows:
            w.writerow([n, repr(R), repr(mean), repr(lo), repr(hi)])
        return buf.getvalue()


def _cell_tag(n: int, R: float) -> str:
    return f"softcover/{n}/{R!r}"


def sweep(joint: JointPmf, R_list, n_list, codebooks_per_cell: int, seed: int, *,
          mode: str = "marginal", threads: int = 1) -> TvSweepReport:
    """Exact TV for ``codebooks_per_cell`` fresh codebooks at every ``(R, n)``."""
    if mode not in ("marginal", "joint"):
        raise ConfigError(f"unknown sweep mode {mode!r}")
    if codebooks_per_cell < 1:
        raise ConfigError("codebooks_per_cell must be >= 1")
    back = reverse_channel(joint)
    p_x = marginalize(joint, [0])
    p_y = marginalize(joint, [1])
    for n in n_list:
        _check_states(back.n_outputs, n)

    def one(job):
        n, R, i = job
        cb = generate(p_y, n, R, streams.derive_seed(seed, _cell_tag(n, R), i))
        if mode == "marginal":
            return tv_to_iid(cb, back, p_x)
        return tv_induced_vs_idealized(cb, back, p_x)

    jobs = [(int(n), float(R), i) for R in R_list for n in n_list for i in range(codebooks_per_cell)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(one, jobs))
    else:
        values = [one(j) for j in jobs]

    report = TvSweepReport(mode=mode)
    for start in range(0, len(jobs), codebooks_per_cell):
        n, R, _ = jobs[start]
        tvs = np.array(values[start:start + codebooks_per_cell])
        report.rows.append((n, R, codebooks_per_cell, float(tvs.mean()), float(tvs.min()), float(tvs.max())))
        report.per_codebook.extend((n, R, i, float(tv)) for i, tv in enumerate(tvs))
    return report
