import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcomp.rng import (
    BACKEND_KINDS,
    InvalidStateError,
    LFSR16_TAPS,
    LFSR32Backend,
    LongPeriodBackend,
    PBitVector,
    _xoshiro_fill,
    lfsr32_next,
    lfsr_next,
    make_backend,
    pbit_array_sample,
    pbit_sample,
    sigmoid,
    split_seed,
    uniform01,
)

M64 = (1 << 64) - 1


def ref_lfsr_bits(state_bits, taps, steps):
    """Bit-list simulation; state_bits[i] is bit i, stage p is bit width - p."""
    bits = list(state_bits)
    width = len(bits)
    out = []
    for _ in range(steps):
        fb = 0
        for p in taps:
            fb ^= bits[width - p]
        out.append(fb)
        bits = bits[1:] + [fb]
    return out, bits


def ref_xoshiro(s, n):
    s = list(s)
    rotl = lambda x, k: ((x << k) | (x >> (64 - k))) & M64
    out = []
    for _ in range(n):
        out.append((rotl((s[1] * 5) & M64, 7) * 9) & M64)
        t = (s[1] << 17) & M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
    return out


# --- LFSR -------------------------------------------------------------------


def test_lfsr32_all_ones():
    bit, state = lfsr32_next(0xFFFFFFFF)
    assert bit == 0
    assert state == 0x7FFFFFFF


def test_lfsr_zero_state_rejected():
    with pytest.raises(InvalidStateError):
        lfsr32_next(0)
    with pytest.raises(InvalidStateError):
        lfsr_next(0, 16, LFSR16_TAPS)


def test_lfsr16_full_period():
    start = 0xACE1
    state, period = start, 0
    while True:
        _, state = lfsr_next(state, 16, LFSR16_TAPS)
        period += 1
        if state == start:
            break
    assert period == 2**16 - 1


def gf2_mulmod(a, b, f, deg):
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> deg & 1:
            a ^= f
    return r


def gf2_x_pow(e, f, deg):
    result, base = 1, 2
    while e:
        if e & 1:
            result = gf2_mulmod(result, base, f, deg)
        base = gf2_mulmod(base, base, f, deg)
        e >>= 1
    return result


def lfsr_char_poly(width, taps):
    # s[n + width] = XOR over taps of s[n + width - p]
    f = 1 << width
    for p in taps:
        f |= 1 << (width - p)
    return f


def test_lfsr32_polynomial_is_primitive():
    # the order of x modulo the recurrence polynomial is 2**32 - 1 = 3 * 5 * 17 * 257 * 65537
    f = lfsr_char_poly(32, (32, 22, 2, 1))
    order = 2**32 - 1
    assert gf2_x_pow(order, f, 32) == 1
    for q in (3, 5, 17, 257, 65537):
        assert gf2_x_pow(order // q, f, 32) != 1


def test_lfsr16_polynomial_order_matches_period():
    f = lfsr_char_poly(16, LFSR16_TAPS)
    assert gf2_x_pow(2**16 - 1, f, 16) == 1
    for q in (3, 5, 17, 257):
        assert gf2_x_pow((2**16 - 1) // q, f, 16) != 1


@given(st.integers(1, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_lfsr32_matches_bit_list_reference(seed):
    ref, _ = ref_lfsr_bits([(seed >> i) & 1 for i in range(32)], (32, 22, 2, 1), 96)
    state, got = seed, []
    for _ in range(96):
        b, state = lfsr32_next(state)
        got.append(b)
    assert got == ref


def test_lfsr32_words_msb_first():
    b = LFSR32Backend(5)
    bits, _ = ref_lfsr_bits([(b.state >> i) & 1 for i in range(32)], (32, 22, 2, 1), 64)
    words = [int("".join(map(str, bits[k:k + 32])), 2) for k in (0, 32)]
    np.testing.assert_array_equal(b.uniforms(2), np.array(words) / 2.0**32)


def test_lfsr32_word_stream_quality():
    u = make_backend("lfsr32", 11).uniforms(10**6)
    assert abs(u.mean() - 0.5) < 0.002
    rho = np.corrcoef(u[:-1], u[1:])[0, 1]
    assert abs(rho) < 0.01


# --- long-period and counter backends ----------------------------------------


def test_xoshiro_published_vector():
    s = np.array([1, 2, 3, 4], dtype=np.uint64)
    out = np.empty(4)
    _xoshiro_fill(s, out)
    ref = ref_xoshiro([1, 2, 3, 4], 4)
    assert ref[0] == 11520
    np.testing.assert_array_equal(out, np.array([r >> 11 for r in ref]) / 2.0**53)


def test_longperiod_matches_reference():
    b = LongPeriodBackend(123)
    ref = ref_xoshiro([int(w) for w in b.state], 1000)
    np.testing.assert_array_equal(b.uniforms(1000), np.array([r >> 11 for r in ref]) / 2.0**53)


@pytest.mark.parametrize("kind", sorted(BACKEND_KINDS))
def test_determinism_and_range(kind):
    a = make_backend(kind, 99).uniforms(10**4)
    b = make_backend(kind, 99).uniforms(10**4)
    np.testing.assert_array_equal(a, b)
    assert np.all((a >= 0) & (a < 1))
    assert not np.array_equal(a, make_backend(kind, 100).uniforms(10**4))


@pytest.mark.parametrize("kind", sorted(BACKEND_KINDS))
def test_scalar_and_block_draws_agree(kind):
    a = make_backend(kind, 3)
    scalars = [uniform01(a) for _ in range(50)]
    block = make_backend(kind, 3).uniforms(50)
    np.testing.assert_array_equal(scalars, block)
    a2, b2 = make_backend(kind, 3), make_backend(kind, 3)
    chunks = np.concatenate([a2.uniforms(k) for k in (1, 7, 13, 0, 29)])
    np.testing.assert_array_equal(chunks, b2.uniforms(50))


@pytest.mark.parametrize("kind", sorted(BACKEND_KINDS))
def test_uniform_mean(kind):
    assert abs(make_backend(kind, 2024).uniforms(10**6).mean() - 0.5) < 0.002


def test_unknown_backend():
    with pytest.raises(ValueError, match="unknown backend"):
        make_backend("mersenne", 1)


def test_seed_range():
    with pytest.raises(ValueError):
        make_backend("longperiod", -1)
    with pytest.raises(ValueError):
        make_backend("counter", 2**64)
    make_backend("lfsr32", 2**64 - 1)


def test_split_seed_distinct_and_stable():
    seeds = [split_seed(7, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [split_seed(7, i) for i in range(100)]
    assert make_backend("counter", 7).split(3).seed == split_seed(7, 3)


# --- p-bits -------------------------------------------------------------------


def test_pbit_examples():
    assert pbit_sample(0.0, 0.3) == 1
    assert all(pbit_sample(20.0, u) == 1 for u in np.linspace(0, 0.999, 50))
    assert math.isclose(sigmoid(2.0), 0.8807970779778823, rel_tol=1e-15)
    assert pbit_sample(2.0, 0.9) == 0


def test_pbit_tie_convention():
    # sigma(I) > u is strict: a zero probability never fires even at u = 0
    assert pbit_sample(-1000.0, 0.0) == 0


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_pbit_rejects_nonfinite(bad):
    with pytest.raises(ValueError):
        pbit_sample(bad, 0.5)


@pytest.mark.parametrize("u", [-0.1, 1.0, 1.5])
def test_pbit_rejects_bad_uniform(u):
    with pytest.raises(ValueError):
        pbit_sample(0.0, u)


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0, 1, exclude_max=True))
def test_pbit_monotone_in_input(a, b, u):
    lo, hi = min(a, b), max(a, b)
    assert pbit_sample(lo, u) <= pbit_sample(hi, u)


@pytest.mark.parametrize("I", [-3.0, -0.5, 0.0, 1.0, 2.5])
def test_pbit_mean_converges(I):
    n = 10**5
    u = make_backend("longperiod", 77).uniforms(n)
    mean = (sigmoid(I) > u).mean()
    p = sigmoid(I)
    assert abs(mean - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_pbit_array_fair_coin():
    b = make_backend("counter", 5)
    total = sum(pbit_array_sample(np.zeros(1000), b).outputs.sum() for _ in range(100))
    assert abs(total / 10**5 - 0.5) < 0.005


def test_pbit_array_uses_one_uniform_per_pbit_in_order():
    inputs = np.linspace(-2, 2, 17)
    v = pbit_array_sample(inputs, make_backend("longperiod", 8))
    u = make_backend("longperiod", 8).uniforms(17)
    np.testing.assert_array_equal(v.outputs, (sigmoid(inputs) > u).astype(np.int8))
    np.testing.assert_array_equal(v.inputs, inputs)


def test_pbit_array_replay():
    a = pbit_array_sample(np.ones(50), make_backend("lfsr32", 1))
    b = pbit_array_sample(np.ones(50), make_backend("lfsr32", 1))
    np.testing.assert_array_equal(a.outputs, b.outputs)


def test_pbit_array_errors():
    with pytest.raises(ValueError):
        pbit_array_sample(np.zeros(0), make_backend())
    with pytest.raises(ValueError):
        pbit_array_sample(np.array([0.0, np.nan]), make_backend())


def test_pbit_vector_invariants():
    with pytest.raises(ValueError):
        PBitVector(np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        PBitVector(np.zeros(0), np.zeros(0))
    with pytest.raises(ValueError):
        PBitVector(np.zeros(2), np.array([0, 2]))
    with pytest.raises(ValueError):
        PBitVector(np.zeros(1), np.array([256]))  # would wrap to 0 as int8
