import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emleak.core import (
    RawKey,
    Symbol,
    Trace,
    TraceMeta,
    decode_symbols,
    encode_symbols,
    generate_key,
    rms,
    significance_threshold,
)


def test_symbol_codes_are_fixed():
    assert [int(s) for s in (Symbol.H, Symbol.V, Symbol.P, Symbol.M)] == [0, 1, 2, 3]


def test_key_counts_within_binomial_band():
    counts = np.bincount(generate_key(20000, 1).codes, minlength=4)
    assert counts.sum() == 20000
    assert np.all((counts >= 4800) & (counts <= 5200)), counts


def test_single_symbol_key_is_deterministic():
    a, b = generate_key(1, 7), generate_key(1, 7)
    assert len(a) == 1 and a == b


def test_independent_keys_disagree_three_quarters():
    a, b = generate_key(20000, 1), generate_key(20000, 2)
    hamming = int(np.sum(a.codes != b.codes))
    assert abs(hamming - 15000) <= 300


def test_key_reproducible_and_pinned():
    # Philox output is fixed by its specification, so these codes are stable
    # across platforms; a change here breaks every stored trace file.
    k = generate_key(12, 5)
    assert k.codes.tolist() == [2, 2, 0, 1, 0, 2, 2, 3, 3, 0, 0, 3]
    assert k.seed == 5


@pytest.mark.parametrize("length", [0, -3])
def test_key_length_must_be_positive(length):
    with pytest.raises(ValueError):
        generate_key(length, 0)


def test_raw_key_rejects_bad_codes():
    with pytest.raises(ValueError):
        RawKey(np.array([0, 4]))
    with pytest.raises(ValueError):
        RawKey(np.array([], dtype=np.int8))


def test_raw_key_is_read_only():
    k = generate_key(10, 0)
    with pytest.raises(ValueError):
        k.codes[0] = 1


@given(st.lists(st.sampled_from(list(Symbol)), min_size=1, max_size=50))
def test_encoding_round_trip(symbols):
    codes = encode_symbols(symbols)
    assert decode_symbols(codes) == symbols


def test_encode_accepts_names():
    assert encode_symbols(["H", "M", "P"]).tolist() == [0, 3, 2]


def test_rms_examples():
    assert rms(np.full(17, 2.0)) == pytest.approx(2.0)
    assert rms([3, -3, 3, -3]) == 3.0
    n = np.arange(100)
    assert abs(rms(1.7 * np.sin(2 * np.pi * n / 100)) - 1.7 / np.sqrt(2)) < 1e-9


def test_rms_empty_raises():
    with pytest.raises(ValueError):
        rms([])


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=64), st.randoms())
def test_rms_sign_and_permutation_invariant(values, rnd):
    x = np.array(values)
    perm = list(values)
    rnd.shuffle(perm)
    assert rms(-x) == pytest.approx(rms(x), rel=1e-12, abs=1e-12)
    assert rms(perm) == pytest.approx(rms(x), rel=1e-12, abs=1e-12)


def test_significance_threshold_closed_form():
    assert significance_threshold(20000) == pytest.approx(0.25 + 3 * np.sqrt(0.1875 / 20000))
    assert round(significance_threshold(20000), 4) == 0.2592
    with pytest.raises(ValueError):
        significance_threshold(0)


def test_trace_meta_geometry():
    m = TraceMeta()
    assert m.samples_per_symbol == 100
    with pytest.raises(ValueError):
        TraceMeta(sample_rate=10e9, clock_freq=3e9)


def test_trace_stores_float32_read_only():
    t = Trace(TraceMeta(), np.arange(300, dtype=np.float64))
    assert t.samples.dtype == np.float32
    assert t.n_symbols == 3
    with pytest.raises(ValueError):
        t.samples[0] = 1.0
    with pytest.raises(ValueError):
        Trace(TraceMeta(), np.zeros((2, 2)))
