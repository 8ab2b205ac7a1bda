import math
import warnings

import numpy as np
import pytest

from rdlab.binning import (
    BinningCodebook, comparison_csv, compare, generate_binning, binning_tv_mean, binning_tv,
    ppe_encode, ppe_law, ppe_weights, run_ppe, sw_decode,
)
from rdlab.errors import RateRegionWarning, SizeError
from rdlab.prob import Pmf, bsc, compose, iid_power
from rdlab.sources import hamming

HALF = Pmf([0.5, 0.5])


def table(n, member, bins, n_bins, k=2):
    m = np.array(member, dtype=bool)
    b = np.array(bins, dtype=np.int64)
    return BinningCodebook(n, k, 0.0, 0.0, m, b, n_bins, 0)


def test_generation_deterministic_and_sized():
    a = generate_binning(2, 10, 0.5, 0.3, 5)
    b = generate_binning(2, 10, 0.5, 0.3, 5)
    assert np.array_equal(a.member, b.member) and np.array_equal(a.bins, b.bins)
    assert a.n_bins == 32 and a.member.size == 1024
    assert abs(a.member.mean() - 2**-3) < 4 * math.sqrt(2**-3 / 1024)


def test_generation_budget():
    with pytest.raises(SizeError):
        generate_binning(2, 21, 0.5, 0.3, 0)


def test_full_codebook_single_bin_weight_one():
    bcb = table(3, [True] * 8, [0] * 8, 1)
    assert ppe_weights(bcb, bsc(0.2), [0, 1, 1])[0] == pytest.approx(0.0, abs=1e-12)


def test_singleton_codebook():
    member = [False] * 8
    member[5] = True
    bcb = table(3, member, [0, 1, 2, 3, 0, 2, 1, 3], 4)
    w = ppe_weights(bcb, bsc(0.2), [0, 0, 0])
    assert np.isfinite(w[2]) and np.isneginf(np.delete(w, 2)).all()
    rng = np.random.default_rng(0)
    assert all(ppe_encode(bcb, bsc(0.2), [0, 0, 0], rng)[0] == 2 for _ in range(20))


def test_n1_hand_weights_and_frequency():
    bcb = table(1, [True, True], [0, 1], 2)
    assert np.allclose(np.exp2(ppe_weights(bcb, bsc(0.1), [0])), [0.9, 0.1])
    rng = np.random.default_rng(1)
    hits = sum(ppe_encode(bcb, bsc(0.1), [0], rng)[0] == 0 for _ in range(20_000))
    assert abs(hits / 2e4 - 0.9) <= 3 * math.sqrt(0.09 / 2e4)


def test_single_bin_always_zero():
    bcb = generate_binning(2, 6, 0.0, 0.2, 3)
    rng = np.random.default_rng(2)
    assert all(ppe_encode(bcb, bsc(0.2), rng.integers(2, size=6), rng)[0] == 0 for _ in range(10))


def test_empty_codebook_falls_back():
    bcb = table(2, [False] * 4, [0, 1, 0, 1], 2)
    assert np.isneginf(ppe_weights(bcb, bsc(0.1), [0, 1])).all()
    assert np.allclose(ppe_law(bcb, bsc(0.1), [0, 1]), 0.5)
    m, intended, fb = ppe_encode(bcb, bsc(0.1), [0, 1], np.random.default_rng(0))
    assert fb and intended == -1


def test_weights_sum_to_codebook_mass():
    bcb = generate_binning(3, 7, 0.4, 0.2, 8)
    ch = np.random.default_rng(3).dirichlet(np.ones(3), size=2)
    from rdlab.prob import Channel
    fwd = Channel(ch)
    x = [0, 1, 1, 0, 1, 0, 0]
    direct = 0.0
    for flat in np.flatnonzero(bcb.member):
        y = bcb.sequence(flat)
        direct += np.prod(ch[x, y])
    assert np.exp2(ppe_weights(bcb, fwd, x)).sum() == pytest.approx(direct, abs=1e-12)


def test_encoder_law_matches_weights():
    bcb = generate_binning(2, 8, 0.5, 0.3, 4)
    x = [1, 0, 0, 1, 1, 1, 0, 1]
    law = ppe_law(bcb, bsc(0.15), x)
    rng = np.random.default_rng(5)
    counts = np.bincount([ppe_encode(bcb, bsc(0.15), x, rng)[0] for _ in range(20_000)], minlength=bcb.n_bins)
    sd = np.sqrt(law * (1 - law) / 20_000)
    assert np.all(np.abs(counts / 20_000 - law) <= 4.5 * sd + 1e-9)


def test_sw_decode_cases():
    prior = Pmf([0.8, 0.2])
    bcb = table(2, [True, False, True, True], [0, 0, 1, 0], 2)
    assert sw_decode(bcb, prior, 1) == (2, False)     # singleton bin
    assert sw_decode(bcb, prior, 0) == (0, False)     # (0,0) beats (1,1)
    empty = table(2, [False, True, False, False], [0, 1, 0, 0], 2)
    assert sw_decode(empty, prior, 0) == (0, True)
    ties = table(2, [False, True, True, False], [0, 0, 0, 0], 1)
    assert sw_decode(ties, prior, 0) == (1, False)    # equal prior: lexicographic first


def test_ppe_lossless_regime():
    # R' = 0 puts every sequence in the codebook; many bins make collisions unlikely
    rep = run_ppe(HALF, bsc(0.1), hamming(2), 3.0, 0.0, 4, 0.2, 2000, 1)
    assert rep.decode_error_rate <= 0.05
    assert abs(rep.mean_distortion[0] - 0.1) <= 3 * rep.distortion_sigma() + 0.1 * rep.decode_error_rate


def test_ppe_rate_warnings():
    with pytest.warns(RateRegionWarning):
        rep = run_ppe(HALF, bsc(0.1), hamming(2), 0.3, 0.5, 6, 0.2, 5, 1)
    assert len(rep.warnings) == 2


def test_compare_csv():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateRegionWarning)
        lik, ppe = compare(HALF, bsc(0.1), hamming(2), 0.75, 0.35, 8, 0.15, 20, 3)
    text = comparison_csv(8, 0.75, 0.35, lik, ppe)
    lines = text.splitlines()
    assert lines[0] == "encoder,n,R,Rprime,mean_distortion,excess_freq,decode_fail_rate"
    assert lines[1].startswith("lik,8,") and lines[2].startswith("ppe,8,")


def test_binning_tv_single_bin_is_zero():
    assert binning_tv(compose(HALF, bsc(0.1)), 4, 0.0, 1) < 1e-15


def test_binning_tv_matches_direct_enumeration():
    joint = compose(Pmf([0.3, 0.7]), bsc(0.2))
    n, rate, seed = 3, 0.5, 7
    got = binning_tv(joint, n, rate, seed)
    rng = np.random.default_rng(np.random.Philox(key=seed))
    bins = rng.integers(0, 2, size=8)
    p_xb = np.zeros((8, 2))
    for x in range(8):
        for y in range(8):
            xs, ys = [(x >> s) & 1 for s in (2, 1, 0)], [(y >> s) & 1 for s in (2, 1, 0)]
            p_xb[x, bins[y]] += np.prod(joint.probs[xs, ys])
    ideal = np.outer(iid_power(Pmf([0.3, 0.7]), 3), [0.5, 0.5])
    assert got == pytest.approx(0.5 * np.abs(p_xb - ideal).sum(), abs=1e-14)


def test_binning_tv_decreases_when_rate_below_collision_entropy():
    # BSC(0.3): H(Y|X) = 0.881, collision entropy 0.786, both above the binning rate
    joint = compose(HALF, bsc(0.3))
    assert binning_tv_mean(joint, 8, 0.35, 100, 1) < binning_tv_mean(joint, 4, 0.35, 100, 1)
