"""End-to-end simulators: point-to-point, Wyner-Ziv and a Berger-Tung corner point.

Each runner supports two codebook modes:

``materialized``
    One codebook set is drawn up front from the run seed and shared by every
    trial; the encoder scores every stored codeword.
``ensemble``
    Each trial draws a fresh codebook implicitly through its type-class
    counts (see :mod:`rdlab.ensemble`). Needed at realistic blocklengths,
    where ``2^{nR}`` codewords cannot be stored.

``auto`` materializes whenever the codebook fits ``AUTO_MATERIALIZE_SYMBOLS``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import streams
from .codebooks import MAX_LOG2_INDEX, codebook_size, generate, log2_codebook_size, lookup
from .encoder import EncoderSpec, encode
from .ensemble import TIE_RTOL, ensemble_encode, ensemble_ml_decode
from .errors import ConfigError, RateRegionWarning
from .prob import (
    Channel, JointPmf, Pmf, attach, compose, marginalize, mutual_information, reverse_channel,
)
from .sources import DistortionMeasure, SourceModel, sample_iid, sequence_distortion

AUTO_MATERIALIZE_SYMBOLS = 2**22
ENSEMBLE_MIN_ROW_BITS = 16


@dataclass
class SystemReport:
    system: str
    trials: int
    mean_distortion: tuple[float, ...]
    distortion_std: tuple[float, ...]
    excess_freq: float
    decode_error_rate: float | None
    fallback_count: int
    codebook_mode: str
    seed: int
    info: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    per_trial: list = field(default_factory=list, repr=False)  # distortion tuple per trial

    def excess_sigma(self) -> float:
        p = self.excess_freq
        return math.sqrt(max(p * (1 - p), 1e-12) / self.trials)

    def distortion_sigma(self, k: int = 0) -> float:
        return self.distortion_std[k] / math.sqrt(self.trials)

    def to_dict(self) -> dict:
        return asdict(self)


def reconstruction_table(phi, n_first: int, n_second: int, n_out: int) -> np.ndarray:
    """Validate a symbol map ``phi[a][b] -> y`` given as a nested list."""
    table = np.array(phi, dtype=np.int64)
    if table.shape != (n_first, n_second):
        raise ConfigError(f"reconstruction table must have shape {(n_first, n_second)}, got {table.shape}")
    if table.min() < 0 or table.max() >= n_out:
        raise ConfigError(f"reconstruction symbols must lie in [0, {n_out})")
    return table


def ml_channel_decode(sub_cb: np.ndarray, channel: Channel, z_seq) -> tuple[int, bool]:
    """Maximum-likelihood index within a sub-codebook; lowest index wins ties.

    Returns ``(index, flagged)``; ``flagged`` means no candidate had positive
    likelihood and index 0 was returned.
    """
    z = np.asarray(z_seq)
    words = np.asarray(sub_cb)
    if words.ndim == 1:
        words = words[None, :]
    if words.shape[-1] != z.size:
        raise ConfigError("received sequence length does not match the codewords")
    scores = channel.log2()[words, z].sum(axis=-1)
    best = scores.max()
    if np.isneginf(best):
        return 0, True
    tol = TIE_RTOL * max(1.0, abs(best))
    return int(np.flatnonzero(scores >= best - tol)[0]), False


# ---------------------------------------------------------------------------
# shared machinery


def _ln(matrix: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        out = np.log(np.asarray(matrix, dtype=float))
    return np.where(np.isnan(out), -np.inf, out)


class _Size:
    """Codebook size bookkeeping for one index (exact when it fits an int64)."""

    def __init__(self, n: int, rate: float):
        self.log2 = log2_codebook_size(n, rate)
        self.count = codebook_size(n, rate) if n * rate < MAX_LOG2_INDEX else None


def _joint_count(*sizes: _Size) -> tuple[int | None, float]:
    log2 = sum(s.log2 for s in sizes)
    if all(s.count is not None for s in sizes) and log2 < MAX_LOG2_INDEX:
        return math.prod(s.count for s in sizes), log2
    return None, log2


def _competitors(size: _Size) -> tuple[int | None, float]:
    if size.count is not None:
        return size.count - 1, math.log2(size.count - 1) if size.count > 1 else -math.inf
    return None, size.log2


def _pick_mode(requested: str, n: int, *sizes: _Size) -> str:
    if requested not in ("auto", "materialized", "ensemble"):
        raise ConfigError(f"unknown codebook mode {requested!r}")
    if requested != "auto":
        return requested
    count, log2 = _joint_count(*sizes)
    if count is not None and count * n <= AUTO_MATERIALIZE_SYMBOLS:
        return "materialized"
    return "ensemble"


def _run_trials(fn: Callable[[int], tuple], trials: int, threads: int) -> list:
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(trials)))
    return [fn(i) for i in range(trials)]


def _aggregate(system, results, n_measures, mode, seed, info, notes, config,
               has_decoder) -> SystemReport:
    dist = np.array([r[0] for r in results], dtype=float).reshape(len(results), n_measures)
    excess = np.array([r[1] for r in results], dtype=bool)
    errors = np.array([r[2] for r in results], dtype=bool)
    fallbacks = int(sum(r[3] for r in results))
    return SystemReport(
        system=system,
        trials=len(results),
        mean_distortion=tuple(float(v) for v in dist.mean(axis=0)),
        distortion_std=tuple(float(v) for v in dist.std(axis=0, ddof=1)) if len(results) > 1
        else (0.0,) * n_measures,
        excess_freq=float(excess.mean()),
        decode_error_rate=float(errors.mean()) if has_decoder else None,
        fallback_count=fallbacks,
        codebook_mode=mode,
        seed=int(seed),
        info=info,
        warnings=notes,
        config=config,
        per_trial=[tuple(float(v) for v in row) for row in dist],
    )


def _warn(notes: list, message: str) -> None:
    notes.append(message)
    warnings.warn(message, RateRegionWarning, stacklevel=3)


# ---------------------------------------------------------------------------
# point-to-point


def run_p2p(source: Pmf, test_channel: Channel, d: DistortionMeasure, R: float, n: int,
            D: float, trials: int, seed: int, *, mode: str = "stochastic",
            codebook: str = "auto", threads: int = 1) -> SystemReport:
    """Likelihood encoder + codeword lookup decoder for an i.i.d. source."""
    joint = compose(source, test_channel)
    if joint.shape != d.shape:
        raise ConfigError(f"distortion shape {d.shape} does not match the joint {joint.shape}")
    back = reverse_channel(joint)
    marginal = marginalize(joint, [1])
    info = {
        "I_XY": mutual_information(joint),
        "E_d": float((joint.probs * d.matrix).sum()),
    }
    notes: list = []
    if R <= info["I_XY"]:
        _warn(notes, f"R = {R} does not exceed I(X;Y) = {info['I_XY']:.5f}")
    size = _Size(n, R)
    cb_mode = _pick_mode(codebook, n, size)
    model = SourceModel(Pmf(source.probs), n)
    config = {"R": R, "n": n, "D": D, "trials": trials, "mode": mode}

    if cb_mode == "materialized":
        cb = generate(marginal, n, R, streams.derive_seed(seed, streams.CODEBOOK))
        spec = EncoderSpec(cb, back, mode)

        def trial(i):
            rng = streams.derive_stream(seed, streams.TRIAL, i)
            x = sample_iid(model, rng)
            m, fb = encode(spec, x, rng)
            y = lookup(cb, m)
            dist = sequence_distortion(x, y, d)
            return dist, dist > D, False, fb
    else:
        log_marginal = _ln(marginal.probs)
        log_back = _ln(back.matrix)

        def trial(i):
            rng = streams.derive_stream(seed, streams.TRIAL, i)
            x = sample_iid(model, rng)
            y, fb = ensemble_encode(x, log_marginal, log_back, size.count, size.log2, rng, mode)
            dist = sequence_distortion(x, y, d)
            return dist, dist > D, False, fb

    results = _run_trials(trial, trials, threads)
    return _aggregate("p2p", results, 1, cb_mode, seed, info, notes, config, has_decoder=False)


# ---------------------------------------------------------------------------
# Wyner-Ziv


def run_wz(joint_xz: JointPmf, aux_channel: Channel, phi, d: DistortionMeasure, R: float,
           R2: float, n: int, D: float, trials: int, seed: int, *, mode: str = "stochastic",
           codebook: str = "auto", threads: int = 1) -> SystemReport:
    """Wyner-Ziv construction with virtual message rate ``R2``."""
    if joint_xz.probs.ndim != 2:
        raise ConfigError("run_wz needs a joint over (X, Z)")
    full = attach(joint_xz, aux_channel, given=0)  # axes X, Z, V
    nx, nz, nv = full.shape
    phi_t = reconstruction_table(phi, nv, nz, d.shape[1])
    if d.shape[0] != nx:
        raise ConfigError("distortion rows must match the source alphabet")
    back = reverse_channel(marginalize(full, [0, 2]))
    side = Channel.from_joint(marginalize(full, [2, 1]))
    marginal = marginalize(full, [2])
    recon = phi_t.T[None, :, :]  # y for (x, z, v)
    info = {
        "I_XV": mutual_information(full, [0], [2]),
        "I_VZ": mutual_information(full, [2], [1]),
        "I_XV_given_Z": mutual_information(full, [0], [2], [1]),
        "E_d": float((full.probs * d.matrix[np.arange(nx)[:, None, None], recon]).sum()),
    }
    notes: list = []
    if R + R2 <= info["I_XV"]:
        _warn(notes, f"R + R' = {R + R2} does not exceed I(X;V) = {info['I_XV']:.5f}")
    if R2 >= info["I_VZ"]:
        _warn(notes, f"R' = {R2} is not below I(V;Z) = {info['I_VZ']:.5f}")
    s1, s2 = _Size(n, R), _Size(n, R2)
    cb_mode = _pick_mode(codebook, n, s1, s2)
    model = SourceModel(joint_xz, n)
    config = {"R": R, "Rprime": R2, "n": n, "D": D, "trials": trials, "mode": mode}

    if cb_mode == "materialized":
        cb = generate(marginal, n, R, streams.derive_seed(seed, streams.CODEBOOK), rate2=R2)
        spec = EncoderSpec(cb, back, mode)

        def trial(i):
            rng = streams.derive_stream(seed, streams.TRIAL, i)
            x, z = sample_iid(model, rng)
            (m, m2), fb = encode(spec, x, rng)
            m2_hat, flagged = ml_channel_decode(cb.words[m], side, z)
            v = cb.words[m, m2_hat]
            dist = sequence_distortion(x, phi_t[v, z], d)
            return dist, dist > D, m2_hat != m2, int(fb) + int(flagged)
    else:
        if s2.count != 1 and s1.log2 < ENSEMBLE_MIN_ROW_BITS:
            notes.append("ensemble decoder ignores competitor tilting; accurate only for nR >= 16")
        total, total_log2 = _joint_count(s1, s2)
        comp, comp_log2 = _competitors(s2)
        log_marginal = _ln(marginal.probs)
        log_back = _ln(back.matrix)
        log_side = _ln(side.matrix)

        def trial(i):
            rng = streams.derive_stream(seed, streams.TRIAL, i)
            x, z = sample_iid(model, rng)
            v, fb = ensemble_encode(x, log_marginal, log_back, total, total_log2, rng, mode)
            v_hat, err, flagged = ensemble_ml_decode(z, v, log_marginal, log_side, comp, comp_log2, rng)
            dist = sequence_distortion(x, phi_t[v_hat, z], d)
            return dist, dist > D, err, int(fb) + int(flagged)

    results = _run_trials(trial, trials, threads)
    return _aggregate("wz", results, 1, cb_mode, seed, info, notes, config, has_decoder=True)


# ---------------------------------------------------------------------------
# Berger-Tung corner point C1


def run_bt(joint_x1x2: JointPmf, channel1: Channel, channel2: Channel, phi1, phi2,
           d1: DistortionMeasure, d2: DistortionMeasure, R1: float, R2: float, R2p: float,
           n: int, D: Sequence[float], trials: int, seed: int, *, mode: str = "stochastic",
           codebook: str = "auto", threads: int = 1) -> SystemReport:
    """Corner point ``(I(X1;U1), I(X2;U2|U1))``: encoder 2 carries a virtual message of rate ``R2p``.

    The decoder looks up ``u1`` and uses it as side information to recover the
    virtual index of encoder 2. Swap the sources to obtain the other corner.
    """
    D1, D2 = D
    if joint_x1x2.probs.ndim != 2:
        raise ConfigError("run_bt needs a joint over (X1, X2)")
    full = attach(attach(joint_x1x2, channel1, given=0), channel2, given=1)  # X1 X2 U1 U2
    n1, n2, nu1, nu2 = full.shape
    if d1.shape[0] != n1 or d2.shape[0] != n2:
        raise ConfigError("distortion rows must match the source alphabets")
    phi1_t = reconstruction_table(phi1, nu1, nu2, d1.shape[1])
    phi2_t = reconstruction_table(phi2, nu1, nu2, d2.shape[1])
    back1 = reverse_channel(marginalize(full, [0, 2]))
    back2 = reverse_channel(marginalize(full, [1, 3]))
    side = Channel.from_joint(marginalize(full, [3, 2]))  # P(U1 | U2)
    pu1 = marginalize(full, [2])
    pu2 = marginalize(full, [3])
    ed1 = d1.matrix[np.arange(n1)[:, None, None, None], phi1_t[None, None, :, :]]
    ed2 = d2.matrix[np.arange(n2)[None, :, None, None], phi2_t[None, None, :, :]]
    info = {
        "I_X1U1": mutual_information(full, [0], [2]),
        "I_X2U2": mutual_information(full, [1], [3]),
        "I_X2U2_given_U1": mutual_information(full, [1], [3], [2]),
        "I_X1U1_given_U2": mutual_information(full, [0], [2], [3]),
        "I_U1U2": mutual_information(full, [2], [3]),
        "E_d1": float((full.probs * ed1).sum()),
        "E_d2": float((full.probs * ed2).sum()),
    }
    notes: list = []
    if R1 <= info["I_X1U1"]:
        _warn(notes, f"R1 = {R1} does not exceed I(X1;U1) = {info['I_X1U1']:.5f}")
    if R2 + R2p <= info["I_X2U2"]:
        _warn(notes, f"R2 + R2' = {R2 + R2p} does not exceed I(X2;U2) = {info['I_X2U2']:.5f}")
    if R2p >= info["I_U1U2"]:
        _warn(notes, f"R2' = {R2p} is not below I(U1;U2) = {info['I_U1U2']:.5f}")
    s1, s2, s2p = _Size(n, R1), _Size(n, R2), _Size(n, R2p)
    cb_mode = _pick_mode(codebook, n, s2, s2p)
    if cb_mode == "materialized" and _pick_mode(codebook, n, s1) != "materialized":
        cb_mode = "ensemble"
    model = SourceModel(joint_x1x2, n)
    config = {"R1": R1, "R2": R2, "R2prime": R2p, "n": n, "D1": D1, "D2": D2,
              "trials": trials, "mode": mode}

    def finish(x1, x2, u1, u2, err, fb):
        dist1 = sequence_distortion(x1, phi1_t[u1, u2], d1)
        dist2 = sequence_distortion(x2, phi2_t[u1, u2], d2)
        return (dist1, dist2), (dist1 > D1) or (dist2 > D2), err, fb

    if cb_mode == "materialized":
        cb1 = generate(pu1, n, R1, streams.derive_seed(seed, streams.CODEBOOK, 1))
        cb2 = generate(pu2, n, R2, streams.derive_seed(seed, streams.CODEBOOK, 2), rate2=R2p)
        spec1 = EncoderSpec(cb1, back1, mode)
        spec2 = EncoderSpec(cb2, back2, mode)

        def trial(i):
            rng = streams.derive_stream(seed, streams.TRIAL, i)
            x1, x2 = sample_iid(model, rng)
            m1, fb1 = encode(spec1, x1, rng)
            (m2, m2p), fb2 = encode(spec2, x2, rng)
            u1 = lookup(cb1, m1)
            m2p_hat, flagged = ml_channel_decode(cb2.words[m2], side, u1)
            u2 = cb2.words[m2, m2p_hat]
            return finish(x1, x2, u1, u2, m2p_hat != m2p, int(fb1) + int(fb2) + int(flagged))
    else:
        if s2p.count != 1 and s2.log2 < ENSEMBLE_MIN_ROW_BITS:
            notes.append("ensemble decoder ignores competitor tilting; accurate only for nR2 >= 16")
        total2, total2_log2 = _joint_count(s2, s2p)
        comp, comp_log2 = _competitors(s2p)
        lm1, lb1 = _ln(pu1.probs), _ln(back1.matrix)
        lm2, lb2 = _ln(pu2.probs), _ln(back2.matrix)
        lside = _ln(side.matrix)

        def trial(i):
            rng = streams.derive_stream(seed, streams.TRIAL, i)
            x1, x2 = sample_iid(model, rng)
            u1, fb1 = ensemble_encode(x1, lm1, lb1, s1.count, s1.log2, rng, mode)
            u2, fb2 = ensemble_encode(x2, lm2, lb2, total2, total2_log2, rng, mode)
            u2_hat, err, flagged = ensemble_ml_decode(u1, u2, lm2, lside, comp, comp_log2, rng)
            return finish(x1, x2, u1, u2_hat, err, int(fb1) + int(fb2) + int(flagged))

    results = _run_trials(trial, trials, threads)
    return _aggregate("bt", results, 2, cb_mode, seed, info, notes, config, has_decoder=True)


def swap_sources(joint_x1x2: JointPmf, channel1: Channel, channel2: Channel, phi1, phi2,
                 d1: DistortionMeasure, d2: DistortionMeasure):
    """Arguments for the other corner point: source 2 becomes the first encoder."""
    swapped = JointPmf(joint_x1x2.probs.T)
    t1 = np.array(phi1).T.tolist()
    t2 = np.array(phi2).T.tolist()
    return swapped, channel2, channel1, t2, t1, d2, d1


def unswap(report: SystemReport) -> SystemReport:
    """Put a report produced on swapped sources back in the original measure order."""
    return replace(
        report,
        mean_distortion=report.mean_distortion[::-1],
        distortion_std=report.distortion_std[::-1],
        per_trial=[row[::-1] for row in report.per_trial],
        info={**report.info, "corner": "C2 (sources swapped; info keys refer to the swapped roles)"},
    )


def run_bt_corner(corner: str, joint_x1x2, channel1, channel2, phi1, phi2, d1, d2, R1, R2, R2p,
                  n, D, trials, seed, **kw) -> SystemReport:
    """Run either corner; ``R1``/``R2`` always belong to sources 1/2.

    ``R2p`` is the virtual-message rate of the second-layer encoder: source 2 at
    C1, source 1 at C2. Distortions in the report follow the original order.
    """
    if corner == "C1":
        return run_bt(joint_x1x2, channel1, channel2, phi1, phi2, d1, d2, R1, R2, R2p, n, D,
                      trials, seed, **kw)
    if corner != "C2":
        raise ConfigError(f"corner must be 'C1' or 'C2', got {corner!r}")
    swapped = swap_sources(joint_x1x2, channel1, channel2, phi1, phi2, d1, d2)
    return unswap(run_bt(*swapped, R2, R1, R2p, n, tuple(D)[::-1], trials, seed, **kw))
