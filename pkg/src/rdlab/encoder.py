"""The likelihood encoder.

Given a codebook and a backward channel ``P_{X|Y}``, the encoder picks index
``m`` with probability proportional to ``prod_t P_{X|Y}(x_t | y_t(m))``.
Sampling uses the Gumbel-max trick on base-e log-weights, which realizes the
normalized law exactly; :func:`selection_law` gives that law explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .codebooks import Codebook
from .errors import ConfigError
from .prob import Channel

LN2 = np.log(2.0)


@dataclass(frozen=True)
class EncoderSpec:
    codebook: Codebook
    back_channel: Channel
    mode: str = "stochastic"

    def __post_init__(self):
        if self.mode not in ("stochastic", "argmax"):
            raise ConfigError(f"unknown encoder mode {self.mode!r}")
        if self.back_channel.n_inputs != self.codebook.marginal.size:
            raise ConfigError(
                "back channel input alphabet must match the codeword alphabet "
                f"({self.back_channel.n_inputs} != {self.codebook.marginal.size})"
            )
        used = np.unique(self.codebook.words)
        if np.any(self.back_channel.undefined[used]):
            raise ConfigError("codebook uses a symbol whose back-channel row is undefined")


class Encoding(NamedTuple):
    index: int | tuple[int, int]
    fallback: bool


def log_likelihoods(spec: EncoderSpec, x_seq) -> np.ndarray:
    """``sum_t log2 P_{X|Y}(x_t | y_t(m))`` for every index, shaped like the codebook index."""
    x = np.asarray(x_seq)
    cb = spec.codebook
    if x.shape != (cb.n,):
        raise ConfigError(f"source block has shape {x.shape}, codebook expects ({cb.n},)")
    table = spec.back_channel.log2()
    return table[cb.words, x].sum(axis=-1)


def selection_law(spec: EncoderSpec, x_seq) -> np.ndarray:
    """Exact conditional law of the encoder output given ``x_seq`` (same shape as the index)."""
    ll = log_likelihoods(spec, x_seq)
    if spec.mode == "argmax":
        law = np.zeros(ll.size)
        law[int(np.argmax(ll))] = 1.0
        return law.reshape(ll.shape)
    if np.all(np.isneginf(ll)):
        return np.full(ll.shape, 1.0 / ll.size)
    ln = ll * LN2
    return np.exp(ln - logsumexp(ln))


def _unflatten(spec: EncoderSpec, flat: int):
    if spec.codebook.double:
        m, m2 = np.unravel_index(flat, spec.codebook.index_shape)
        return int(m), int(m2)
    return int(flat)


def choose(log_weights: np.ndarray, rng: np.random.Generator,
           mode: str = "stochastic") -> tuple[int, bool]:
    """Pick a flat index with probability proportional to ``2 ** log_weights``.

    Returns ``(index, fallback)``; ``fallback`` is set when every weight is zero
    and the index was drawn uniformly instead.
    """
    w = np.ravel(log_weights)
    if np.all(np.isneginf(w)):
        return int(rng.integers(w.size)), True
    if mode == "argmax":
        return int(np.argmax(w)), False
    return int(np.argmax(w * LN2 + rng.gumbel(size=w.size))), False


def encode(spec: EncoderSpec, x_seq, rng: np.random.Generator) -> Encoding:
    flat, fallback = choose(log_likelihoods(spec, x_seq), rng, spec.mode)
    return Encoding(_unflatten(spec, flat), fallback)
