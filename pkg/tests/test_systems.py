import math
import warnings

import numpy as np
import pytest

from rdlab import streams
from rdlab.codebooks import generate, lookup
from rdlab.encoder import EncoderSpec, encode
from rdlab.ensemble import ensemble_ml_decode
from rdlab.errors import ConfigError, RateRegionWarning
from rdlab.prob import (
    Channel, JointPmf, Pmf, bsc, compose, constant_channel, identity_channel, marginalize,
    product, reverse_channel,
)
from rdlab.sources import SourceModel, hamming, sample_iid, sequence_distortion
from rdlab.systems import ml_channel_decode, run_bt, run_bt_corner, run_p2p, run_wz

HALF = Pmf([0.5, 0.5])
D2 = hamming(2)
V_EQ = [[0, 0], [1, 1]]       # phi(v, z) = v
Z_EQ = [[0, 1], [0, 1]]       # phi(v, z) = z


def within(a, b, sa, sb, k=3.0):
    return abs(a - b) <= k * math.hypot(sa, sb) + 1e-12


# --- point to point -----------------------------------------------------------

def test_identity_channel_rate_one_matches_miss_oracle():
    # 2^n random words miss a given x^n with prob (1 - 2^-n)^(2^n); a miss means a uniform
    # fallback codeword, distortion 1/2 on average
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateRegionWarning)
        rep = run_p2p(HALF, identity_channel(2), D2, 1.0, 8, 0.1, 2000, 1, codebook="ensemble")
    oracle = 0.5 * (1 - 2.0**-8) ** 256
    assert within(rep.mean_distortion[0], oracle, rep.distortion_sigma(), 0)
    assert rep.fallback_count > 0


def test_identity_channel_above_entropy_goes_to_zero():
    rep = run_p2p(HALF, identity_channel(2), D2, 1.25, 8, 0.1, 500, 2, codebook="materialized")
    assert rep.mean_distortion[0] < 0.05
    big = run_p2p(HALF, identity_channel(2), D2, 1.25, 16, 0.1, 300, 2)
    assert big.mean_distortion[0] < rep.mean_distortion[0] + 0.01


def test_rate_zero_is_independent_distortion():
    src, ch = Pmf([0.3, 0.7]), bsc(0.2)
    py = marginalize(compose(src, ch), [1]).probs
    expect = float(src.probs @ (1 - np.eye(2)) @ py)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateRegionWarning)
        rep = run_p2p(src, ch, D2, 0.0, 20, 0.3, 2000, 3, codebook="ensemble")
    assert within(rep.mean_distortion[0], expect, rep.distortion_sigma(), 0)


def test_bsc_example_distortion():
    rep = run_p2p(HALF, bsc(0.1), D2, 0.8, 300, 0.15, 500, 4)
    assert rep.codebook_mode == "ensemble"
    assert rep.mean_distortion[0] <= 0.12


def test_decoder_is_pure_lookup():
    src, ch = Pmf([0.4, 0.6]), bsc(0.15)
    rep = run_p2p(src, ch, D2, 0.7, 12, 0.2, 5, 9, codebook="materialized")
    joint = compose(src, ch)
    cb = generate(marginalize(joint, [1]), 12, 0.7, streams.derive_seed(9, streams.CODEBOOK))
    spec = EncoderSpec(cb, reverse_channel(joint))
    for i in range(5):
        rng = streams.derive_stream(9, streams.TRIAL, i)
        x = sample_iid(SourceModel(src, 12), rng)
        m, _ = encode(spec, x, rng)
        assert rep.per_trial[i][0] == sequence_distortion(x, lookup(cb, m), D2)


def test_rate_warning_and_bad_shapes():
    with pytest.warns(RateRegionWarning):
        rep = run_p2p(HALF, bsc(0.1), D2, 0.3, 10, 0.2, 3, 0)
    assert rep.warnings
    with pytest.raises(ConfigError):
        run_p2p(HALF, bsc(0.1), hamming(3), 0.8, 10, 0.2, 3, 0)
    with pytest.raises(ConfigError):
        run_p2p(HALF, bsc(0.1), D2, 0.8, 10, 0.2, 3, 0, codebook="lazy")


def test_threads_do_not_change_results():
    a = run_p2p(HALF, bsc(0.1), D2, 0.8, 40, 0.15, 40, 5)
    b = run_p2p(HALF, bsc(0.1), D2, 0.8, 40, 0.15, 40, 5, threads=4)
    assert a.per_trial == b.per_trial and a.mean_distortion == b.mean_distortion


def test_mean_distortion_does_not_grow_with_n():
    reps = [run_p2p(HALF, bsc(0.1), D2, 0.8, n, 0.15, 150, 6) for n in (50, 200, 800)]
    for small, large in zip(reps, reps[1:]):
        assert large.mean_distortion[0] <= small.mean_distortion[0] + 3 * math.hypot(
            small.distortion_sigma(), large.distortion_sigma())


# --- ML decoder ---------------------------------------------------------------------

def test_ml_decode_singleton_and_noiseless():
    assert ml_channel_decode(np.array([[0, 1, 1]]), bsc(0.1), [1, 1, 1]) == (0, False)
    sub = np.array([[0, 0, 1], [1, 1, 0], [0, 1, 0]])
    assert ml_channel_decode(sub, identity_channel(2), [1, 1, 0]) == (1, False)


def test_ml_decode_all_impossible_flags():
    sub = np.array([[0, 0], [0, 0]])
    assert ml_channel_decode(sub, identity_channel(2), [1, 1]) == (0, True)


def test_ml_decode_lowest_index_on_ties():
    sub = np.array([[1, 0], [0, 1], [0, 0]])
    assert ml_channel_decode(sub, bsc(0.2), [0, 0])[0] == 2
    assert ml_channel_decode(sub, bsc(0.2), [1, 1])[0] == 0


def test_ml_decode_below_capacity_materialized():
    rng = np.random.default_rng(0)
    errors = 0
    for t in range(200):
        book = rng.integers(2, size=(2**8, 40))
        a = int(rng.integers(2**8))
        z = book[a] ^ (rng.random(40) < 0.05)
        errors += ml_channel_decode(book, bsc(0.05), z)[0] != a
    assert errors / 200 <= 0.05


def test_ml_decode_below_capacity_ensemble():
    # n = 100, R' = 0.2: 2^20 - 1 competitors per trial
    rng = np.random.default_rng(1)
    lm, lc = np.log([0.5, 0.5]), np.log(bsc(0.05).matrix)
    errors = 0
    for _ in range(200):
        v = rng.integers(2, size=100)
        z = v ^ (rng.random(100) < 0.05)
        errors += ensemble_ml_decode(z, v, lm, lc, 2**20 - 1, math.log2(2**20 - 1), rng)[1]
    assert errors / 200 <= 0.05


# --- Wyner-Ziv ----------------------------------------------------------------------

def test_wz_independent_side_info_matches_p2p():
    src, ch = Pmf([0.5, 0.5]), bsc(0.1)
    jxz = product(src, Pmf([0.3, 0.7]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateRegionWarning)
        wz = run_wz(jxz, ch, V_EQ, D2, 0.8, 0.0, 60, 0.15, 300, 7)
        p2p = run_p2p(src, ch, D2, 0.8, 60, 0.15, 300, 8)
    assert wz.decode_error_rate == 0.0
    assert within(wz.mean_distortion[0], p2p.mean_distortion[0], wz.distortion_sigma(), p2p.distortion_sigma())


def test_wz_side_info_equals_source():
    jxz = JointPmf(np.diag([0.5, 0.5]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateRegionWarning)
        rep = run_wz(jxz, identity_channel(2), Z_EQ, D2, 0.2, 0.1, 20, 0.05, 50, 1)
    assert rep.mean_distortion[0] == 0.0 and rep.excess_freq == 0.0


def test_wz_reports_informations():
    jxz = compose(HALF, bsc(0.25))
    rep = run_wz(jxz, bsc(0.1), V_EQ, D2, 0.5, 0.05, 40, 0.15, 5, 1)
    h = lambda p: -p * math.log2(p) - (1 - p) * math.log2(1 - p)
    assert rep.info["I_XV"] == pytest.approx(1 - h(0.1))
    assert rep.info["I_VZ"] == pytest.approx(1 - h(0.3))
    assert rep.info["E_d"] == pytest.approx(0.1)


def test_wz_rate_warnings():
    jxz = compose(HALF, bsc(0.25))
    with pytest.warns(RateRegionWarning):
        rep = run_wz(jxz, bsc(0.1), V_EQ, D2, 0.40, 0.15, 40, 0.15, 3, 1)
    assert any("I(V;Z)" in w for w in rep.warnings)


def test_wz_materialized_and_ensemble_agree():
    jxz = compose(HALF, bsc(0.1))
    args = (jxz, bsc(0.1), V_EQ, D2, 0.55, 0.3, 14, 0.15, 1500, 3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateRegionWarning)
        m = run_wz(*args, codebook="materialized")
        e = run_wz(*args, codebook="ensemble")
    assert within(m.mean_distortion[0], e.mean_distortion[0], m.distortion_sigma(), e.distortion_sigma(), 4)


def test_bad_reconstruction_table():
    with pytest.raises(ConfigError):
        run_wz(compose(HALF, bsc(0.25)), bsc(0.1), [[0, 2], [1, 1]], D2, 0.5, 0.05, 10, 0.1, 2, 0)


# --- Berger-Tung --------------------------------------------------------------------

def test_bt_uninformative_second_source_reduces_to_p2p():
    joint = compose(HALF, bsc(0.25))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateRegionWarning)
        bt = run_bt(joint, bsc(0.1), constant_channel(2, [0.5, 0.5]), V_EQ, V_EQ, D2, D2,
                    0.8, 0.1, 0.0, 60, (0.15, 0.5), 300, 11)
        p2p = run_p2p(HALF, bsc(0.1), D2, 0.8, 60, 0.15, 300, 12)
    assert bt.decode_error_rate == 0.0
    assert within(bt.mean_distortion[0], p2p.mean_distortion[0], bt.distortion_sigma(0), p2p.distortion_sigma())


def test_bt_identical_sources_decoder_sees_x2():
    joint = JointPmf(np.diag([0.5, 0.5]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateRegionWarning)
        rep = run_bt(joint, identity_channel(2), bsc(0.2), V_EQ, V_EQ, D2, D2,
                     1.25, 0.2, 0.0, 12, (0.1, 0.1), 300, 5)
    assert rep.mean_distortion[1] < 0.05


def test_bt_c2_keeps_source_order():
    joint = JointPmf([[0.45, 0.05], [0.2, 0.3]])
    phi1, phi2 = [[0, 0], [1, 1]], [[0, 1], [0, 1]]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateRegionWarning)
        c2 = run_bt_corner("C2", joint, bsc(0.1), bsc(0.05), phi1, phi2, D2, D2,
                           0.7, 0.8, 0.02, 40, (0.2, 0.2), 200, 1)
    # source 2 goes through the sharper channel
    assert c2.mean_distortion[1] < c2.mean_distortion[0]
    with pytest.raises(ConfigError):
        run_bt_corner("C3", joint, bsc(0.1), bsc(0.05), phi1, phi2, D2, D2, 0.7, 0.8, 0.0, 4, (0.2, 0.2), 2, 1)
