import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpturnstile.hashing import (P, HashBank, PolyHash, SignHash, ceil_log2, default_k, horner, is_power_of_two,
                                 lsb, lsb_array, lsb_bucket, mulmod, universe_exponent)

from oracles import P61, lsb as lsb_ref, poly_hash

u61 = st.integers(0, P - 1)


def test_field_constant():
    assert P == P61 == 2**61 - 1


@given(st.lists(u61, min_size=1, max_size=50), st.lists(u61, min_size=1, max_size=50))
def test_mulmod_matches_bigint(a, b):
    n = min(len(a), len(b))
    got = mulmod(np.array(a[:n], dtype=np.uint64), np.array(b[:n], dtype=np.uint64))
    assert got.tolist() == [(x * y) % P for x, y in zip(a[:n], b[:n])]


def test_mulmod_extremes():
    edge = np.array([0, 1, P - 1, P - 2, 2**32, 2**32 - 1, 2**60], dtype=np.uint64)
    a, b = np.meshgrid(edge, edge)
    got = mulmod(a.ravel(), b.ravel())
    assert got.tolist() == [(int(x) * int(y)) % P for x, y in zip(a.ravel(), b.ravel())]


@settings(max_examples=60)
@given(st.lists(u61, min_size=1, max_size=14), st.lists(st.integers(0, 2**60), min_size=1, max_size=30),
       st.integers(1, 2**40))
def test_horner_and_polyhash_match_oracle(coeffs, keys, m):
    h = PolyHash(tuple(coeffs), m)
    expected = [poly_hash(coeffs, k, m) for k in keys]
    assert [h(k) for k in keys] == expected
    assert h.evaluate(np.array(keys, dtype=np.uint64)).tolist() == expected
    assert horner(np.array(coeffs, dtype=np.uint64), np.array(keys, dtype=np.uint64)).tolist() == [
        poly_hash(coeffs, k, P) for k in keys]


def test_constant_polynomial():
    h = PolyHash((12345, 0, 0, 0), 1000)
    assert {h(k) for k in range(200)} == {345}


def test_polyhash_determinism_and_errors():
    a = PolyHash.random(4, 97, 7, "x")
    b = PolyHash.random(4, 97, 7, "x")
    assert a == b and a.degree == 4
    assert [a(k) for k in range(50)] == [b(k) for k in range(50)]
    with pytest.raises(ValueError):
        PolyHash((), 10)
    with pytest.raises(ValueError):
        PolyHash((1,), 0)


def test_hashbank_rows_match_polyhash():
    bank = HashBank(5, 3, [2, 7, 64, 1000, 2**20], 3, "t")
    keys = list(range(1, 40))
    table = bank.table(keys)
    for i in range(5):
        row = bank.row(i)
        assert table[i].tolist() == [row(k) for k in keys]
    for k in keys[:5]:
        assert bank.at(k).tolist() == table[:, k - 1].tolist()
    assert bank.words() == 15


def test_pairwise_collision_rate():
    m, rows, pairs = 1024, 1000, 1000
    rng = np.random.default_rng(0)
    keys = rng.choice(2**40, size=2 * pairs, replace=False)
    table = HashBank(rows, 2, m, 1, "collide").table(keys)
    rate = float(np.mean(table[:, :pairs] == table[:, pairs:]))
    p = 1 / m
    sigma = math.sqrt(p * (1 - p) / (rows * pairs))
    assert abs(rate - p) <= 3 * sigma


def test_pairwise_joint_uniformity_chi_squared():
    # two fixed keys over 10^4 independent seeds, m = 16: 256 cells
    m, seeds = 16, 10_000
    bank = HashBank(seeds, 2, m, 2, "chi")
    hx, hy = bank.table([17, 40_000]).astype(np.int64).T
    counts = np.bincount(hx * m + hy, minlength=m * m)
    expected = seeds / (m * m)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    df, z = m * m - 1, 3.090232  # z for significance 0.001
    critical = df * (1 - 2 / (9 * df) + z * math.sqrt(2 / (9 * df))) ** 3  # Wilson-Hilferty
    assert chi2 < critical


def test_sign_hash():
    g = SignHash.random(5, 4, "g")
    keys = np.arange(1, 10**6 + 1, dtype=np.uint64)
    vals = g.evaluate(keys)
    assert set(np.unique(vals).tolist()) <= {-1, 1}
    assert abs(vals.mean()) <= 3 / math.sqrt(len(vals))
    assert [g(k) for k in range(1, 30)] == vals[:29].tolist()
    with pytest.raises(ValueError):
        SignHash(PolyHash((1, 2), 3))


def test_lsb_examples():
    assert lsb(4) == 2
    assert lsb(1) == 0
    assert lsb(6) == 1
    for bad in (0, -3):
        with pytest.raises(ValueError):
            lsb(bad)
    with pytest.raises(ValueError):
        lsb_array([1, 0])


@given(st.lists(st.integers(1, 2**62), min_size=1, max_size=100))
def test_lsb_array_matches_oracle(values):
    assert lsb_array(values).tolist() == [lsb_ref(v) for v in values]
    assert lsb(values[0]) == lsb_ref(values[0])


def test_lsb_bucket_maps_zero_to_top():
    assert lsb_bucket([0, 1, 8, 12], 16).tolist() == [4, 0, 3, 2]


def test_lsb_distribution_is_geometric():
    K = 16
    bank = HashBank(100, 2, 1 << K, 5, "lsb")
    buckets = lsb_bucket(bank.table(np.arange(1, 10_001)).ravel(), 1 << K)
    N = buckets.size
    for i in range(K - 2):
        p = 2.0 ** -(i + 1)
        freq = np.mean(buckets == i)
        assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / N), i


def test_small_helpers():
    assert [ceil_log2(x) for x in (1, 2, 3, 4, 5, 1024, 1025)] == [0, 1, 2, 2, 3, 10, 11]
    assert default_k(4096) == 13
    assert universe_exponent(1000) == 10 and universe_exponent(1024) == 10
    assert is_power_of_two(64) and not is_power_of_two(96) and not is_power_of_two(0)
    with pytest.raises(ValueError):
        ceil_log2(0)


def test_large_keys_are_reduced_consistently():
    h = PolyHash.random(3, 1 << 30, 11)
    key = random.Random(1).randrange(2**60)
    assert h(key) == int(h.evaluate(np.array([key], dtype=np.uint64))[0])


@pytest.mark.parametrize("key", [0, 1, 2**31, 2**32 - 1, 2**32, 2**45 + 7, 2**60 - 1])
def test_horner_small_and_wide_key_paths(key):
    # keys below 2^32 take a cheaper multiply; both paths must agree with big ints
    rng = np.random.default_rng(key % 1000)
    coeffs = rng.integers(P - 2**20, P, size=(20, 13), dtype=np.uint64)  # near the top of the field
    out = horner(coeffs, np.uint64(key))
    assert [int(v) for v in out] == [poly_hash([int(c) for c in row], key, P) for row in coeffs]
