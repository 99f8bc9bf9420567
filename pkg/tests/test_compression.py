import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgtsim.compression import (
    CompressionError,
    CompressorProfile,
    Identity,
    NormSign,
    RandK,
    RescaledNormSign,
    RngStream,
    TopK,
    UnbiasedQuantize,
    analytic_profile,
    bit_cost,
    compress,
    compress_rows,
    compress_rows_multi,
    compressor_label,
    empirical_profile,
    estimate_contraction,
    estimate_variance_ratio,
    parse_compressor,
)
from cgtsim.compression import _apply_rows


def rng_for(agent=0, k=0, tag=0, seed=123):
    return RngStream(seed=seed, agent=agent, iteration=k, tag=tag)


# ---------------------------------------------------------------------------
# operator outputs


def test_top1_keeps_largest_absolute_value():
    out = compress(TopK(k=1), np.array([3.0, -5.0, 1.0]))
    assert np.array_equal(out.payload, [0.0, -5.0, 0.0])


def test_topk_tie_goes_to_lowest_index():
    out = compress(TopK(k=1), np.array([2.0, -2.0, 1.0]))
    assert np.array_equal(out.payload, [2.0, 0.0, 0.0])


def test_normsign_inf():
    out = compress(NormSign(q=math.inf), np.array([2.0, -1.0]))
    assert np.array_equal(out.payload, [2.0, -2.0])


def test_rescaled_normsign():
    out = compress(RescaledNormSign(q=math.inf, r=2.0), np.array([2.0, -1.0]))
    assert np.array_equal(out.payload, [1.0, -1.0])


def test_quantizer_with_zero_dither_recovers_exactly_representable():
    # scale 1/2, floor(2*|x|/1) = (2, 1), so (1/2)*(2, -1) = (1, -0.5)
    out = _apply_rows(UnbiasedQuantize(bits=2, q=math.inf),
                      np.array([[1.0, -0.5]]), np.zeros((1, 2)))
    assert np.array_equal(out[0], [1.0, -0.5])


def test_identity_returns_input_and_full_bit_cost():
    x = np.array([1.0, 2.0, -3.0])
    out = compress(Identity(), x)
    assert np.array_equal(out.payload, x)
    assert out.bit_cost == 64 * 3


@pytest.mark.parametrize("kind", [
    Identity(), TopK(k=2), RandK(k=2), NormSign(q=2),
    RescaledNormSign(q=2, r=4.0), UnbiasedQuantize(bits=3, q=1),
])
def test_zero_vector_maps_to_zero(kind):
    out = compress(kind, np.zeros(4), rng_for())
    assert np.array_equal(out.payload, np.zeros(4))


def test_compress_rejects_bad_inputs():
    with pytest.raises(CompressionError):
        compress(TopK(k=5), np.ones(3))
    with pytest.raises(CompressionError):
        compress(Identity(), np.array([1.0, np.nan]))
    with pytest.raises(CompressionError):
        compress(Identity(), np.array([np.inf, 1.0]))
    with pytest.raises(CompressionError):
        UnbiasedQuantize(bits=0, q=2)
    with pytest.raises(CompressionError):
        compress(RandK(k=1), np.ones(3))  # stochastic kind without a stream


# ---------------------------------------------------------------------------
# keyed streams


def test_stream_identical_keys_identical_sequences():
    a = RngStream(seed=9, agent=4, iteration=100, tag=2)
    b = RngStream(seed=9, agent=4, iteration=100, tag=2)
    assert np.array_equal(a.uniform(32), b.uniform(32))


def test_stream_distinct_keys_differ():
    base = RngStream(seed=9, agent=4, iteration=100, tag=2).uniform(32)
    for other in [RngStream(10, 4, 100, 2), RngStream(9, 5, 100, 2),
                  RngStream(9, 4, 101, 2), RngStream(9, 4, 100, 3)]:
        assert not np.array_equal(base, other.uniform(32))


def test_stream_uniform_statistics():
    u = RngStream(seed=77).uniform(200_000)
    assert 0.0 <= u.min() and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(u.var() - 1.0 / 12.0) < 0.005


def test_stream_subset_is_uniform_over_pairs():
    counts = np.zeros(4)
    for it in range(4000):
        s = RngStream(seed=5, iteration=it)
        for idx in s.subset(4, 2):
            counts[idx] += 1
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 0.25) < 0.02)


def test_compressed_message_determinism_byte_for_byte():
    x = np.linspace(-1, 1, 20)
    kind = UnbiasedQuantize(bits=2, q=math.inf)
    a = compress(kind, x, rng_for(agent=1, k=7, tag=1)).payload
    b = compress(kind, x, rng_for(agent=1, k=7, tag=1)).payload
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("kind", [
    UnbiasedQuantize(bits=2, q=math.inf), RandK(k=3), TopK(k=3), NormSign(q=1),
])
def test_compress_rows_matches_per_vector(kind):
    m = np.random.default_rng(2).standard_normal((6, 11))
    rows = compress_rows(kind, m, seed=4, iteration=9, tag=2)
    for i in range(6):
        one = compress(kind, m[i], RngStream(4, i, 9, 2)).payload
        assert np.array_equal(rows[i], one)


def test_compress_rows_multi_matches_single_tag_calls():
    m1 = np.random.default_rng(3).standard_normal((5, 8))
    m2 = np.random.default_rng(4).standard_normal((5, 8))
    kind = UnbiasedQuantize(bits=2, q=2)
    a1, a2 = compress_rows_multi(kind, [m1, m2], [1, 3], seed=6, iteration=2)
    assert np.array_equal(a1, compress_rows(kind, m1, 6, 2, 1))
    assert np.array_equal(a2, compress_rows(kind, m2, 6, 2, 3))


# ---------------------------------------------------------------------------
# bit accounting


@pytest.mark.parametrize("kind,p,expected", [
    (Identity(), 20, 1280),
    (UnbiasedQuantize(bits=2, q=math.inf), 20, 64 + 20 + 40),
    (TopK(k=1), 20, 64 + 5),
    (RandK(k=3), 20, 3 * (64 + 5)),
    (NormSign(q=2), 20, 64 + 20),
    (RescaledNormSign(q=2, r=20), 20, 64 + 20),
])
def test_bit_costs(kind, p, expected):
    assert bit_cost(kind, p) == expected


def test_bit_cost_independent_of_payload():
    kind = TopK(k=2)
    a = compress(kind, np.array([1.0, 5.0, 3.0, 0.0]))
    b = compress(kind, np.array([-9.0, 0.1, 0.0, 2.0]))
    assert a.bit_cost == b.bit_cost


# ---------------------------------------------------------------------------
# profiles and bounds


def test_analytic_profiles_table_values():
    p = 20
    prof = analytic_profile(NormSign(q=2), p)
    assert (prof.C, prof.delta, prof.r) == (19.0, 1 / 20, 20.0)
    prof = analytic_profile(NormSign(q=math.inf), p)
    assert (prof.C, prof.delta, prof.r) == (19.0, 1 / 400, 20.0)
    prof = analytic_profile(NormSign(q=1), p)
    assert (prof.C, prof.delta, prof.r) == (361.0, 1 / 20, 20.0)
    prof = analytic_profile(TopK(k=1), p)
    assert (prof.C, prof.delta, prof.r) == (0.95, 0.05, 1.0)
    prof = analytic_profile(Identity(), p)
    assert (prof.C, prof.delta, prof.r) == (0.0, 1.0, 1.0)
    assert analytic_profile(UnbiasedQuantize(bits=2, q=math.inf), p) is None


def test_estimate_variance_identity_and_full_topk_are_zero():
    assert estimate_variance_ratio(Identity(), 6, trials=1000) == 0.0
    assert estimate_variance_ratio(TopK(k=6), 6, trials=1000) == 0.0
    assert estimate_contraction(RandK(k=6), 1.0, 6, trials=1000) == 0.0


@pytest.mark.parametrize("q", [1, 2, math.inf])
@pytest.mark.parametrize("p", [2, 5, 20])
def test_normsign_bounds_hold_empirically(q, p):
    prof = analytic_profile(NormSign(q=q), p)
    ratio = estimate_variance_ratio(NormSign(q=q), p, trials=2000, rng=0)
    assert ratio <= prof.C * (1 + 1e-12)
    contr = estimate_contraction(NormSign(q=q), prof.r, p, trials=2000, rng=0)
    assert contr <= (1 - prof.delta) * (1 + 1e-12)


def test_topk_contraction_per_input():
    rng = np.random.default_rng(8)
    p, k = 12, 3
    for _ in range(200):
        x = rng.standard_normal(p)
        q = compress(TopK(k=k), x).payload
        assert np.sum((q - x) ** 2) <= (1 - k / p) * np.sum(x**2) * (1 + 1e-9)


def test_randk_exact_expectation_from_drop_probability():
    # each coordinate is dropped with probability 1 - k/p, so the expected
    # squared error is exactly (1 - k/p) ||x||^2
    p, k = 10, 3
    x = np.random.default_rng(1).standard_normal(p)
    reps = 4000
    total = 0.0
    for rep in range(reps):
        q = compress(RandK(k=k), x, RngStream(seed=2, iteration=rep)).payload
        total += float(np.sum((q - x) ** 2))
    expect = (1 - k / p) * float(np.sum(x**2))
    assert total / reps == pytest.approx(expect, rel=0.05)


def test_quantizer_unbiasedness():
    kind = UnbiasedQuantize(bits=2, q=math.inf)
    x = np.linspace(-1.0, 1.0, 10)
    reps = 20_000
    acc = np.zeros_like(x)
    acc_sq = np.zeros_like(x)
    for rep in range(reps):
        qv = compress(kind, x, RngStream(seed=3, iteration=rep)).payload
        acc += qv
        acc_sq += qv**2
    mean = acc / reps
    se = np.sqrt(np.maximum(acc_sq / reps - mean**2, 0) / reps)
    assert np.all(np.abs(mean - x) <= 5 * se + 1e-12)


def test_empirical_profile_quantizer_is_contractive_here():
    prof = empirical_profile(UnbiasedQuantize(bits=2, q=math.inf), 20, trials=2000)
    assert prof.provenance == "empirical"
    assert prof.C < 1.0
    assert prof.delta == pytest.approx(1.0 - prof.C)
    assert prof.r == 1.0


def test_estimate_requires_enough_trials():
    with pytest.raises(CompressionError):
        estimate_variance_ratio(Identity(), 4, trials=10)


def test_profile_validation():
    with pytest.raises(CompressionError):
        CompressorProfile(C=1.0, delta=0.0, r=1.0)
    with pytest.raises(CompressionError):
        CompressorProfile(C=-0.1, delta=0.5, r=1.0)


# ---------------------------------------------------------------------------
# config strings


@pytest.mark.parametrize("text,kind", [
    ("identity", Identity()),
    ("quant:b=2,q=inf", UnbiasedQuantize(bits=2, q=math.inf)),
    ("topk:k=1", TopK(k=1)),
    ("randk:k=4", RandK(k=4)),
    ("normsign:q=inf", NormSign(q=math.inf)),
    ("normsign-rescaled:q=inf,r=20", RescaledNormSign(q=math.inf, r=20.0)),
])
def test_parse_compressor_round_trip(text, kind):
    assert parse_compressor(text) == kind
    assert parse_compressor(compressor_label(kind)) == kind


def test_parse_compressor_errors():
    with pytest.raises(CompressionError):
        parse_compressor("huffman")
    with pytest.raises(CompressionError):
        parse_compressor("topk")  # missing k
    with pytest.raises(CompressionError):
        parse_compressor("quant:b=2,q=3")


# ---------------------------------------------------------------------------
# property tests


# magnitudes bounded away from the subnormal range: scaling by c must not
# underflow entries to zero, or the support genuinely changes
_entries = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False).map(
    lambda v: 0.0 if abs(v) < 1e-150 else v)


@given(st.lists(_entries, min_size=1, max_size=16),
       st.floats(min_value=1e-3, max_value=1e3))
@settings(max_examples=200, deadline=None)
def test_topk_support_invariant_under_positive_scaling(values, c):
    x = np.asarray(values)
    a = compress(TopK(k=1), x).payload
    b = compress(TopK(k=1), c * x).payload
    assert np.array_equal(a != 0, b != 0)
    assert np.array_equal(np.sign(a), np.sign(b))


@given(st.lists(_entries, min_size=2, max_size=16),
       st.floats(min_value=1e-3, max_value=1e3))
@settings(max_examples=200, deadline=None)
def test_normsign_sign_pattern_invariant_under_positive_scaling(values, c):
    x = np.asarray(values)
    a = compress(NormSign(q=math.inf), x).payload
    b = compress(NormSign(q=math.inf), c * x).payload
    assert np.array_equal(np.sign(a), np.sign(b))


@given(st.integers(min_value=0, max_value=2**31), st.integers(min_value=0, max_value=64),
       st.integers(min_value=0, max_value=10**6), st.integers(min_value=0, max_value=4))
@settings(max_examples=100, deadline=None)
def test_stream_determinism_property(seed, agent, k, tag):
    s1 = RngStream(seed=seed, agent=agent, iteration=k, tag=tag)
    s2 = RngStream(seed=seed, agent=agent, iteration=k, tag=tag)
    assert np.array_equal(s1.uniform(5), s2.uniform(5))
