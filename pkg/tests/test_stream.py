import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpturnstile.stream import (DENSE_LIMIT, ExactOracle, GeneratorKind, Model, Stream, StreamFormatError,
                                StreamMeta, StreamUpdate, StrictTurnstileViolation, f2_lowerbound_pair,
                                format_stream, gen_stream, oracle_update, parse_stream, read_stream, replay,
                                validate, write_stream)

from oracles import stream_stats

N = 12
general_updates = st.lists(st.tuples(st.integers(1, N), st.sampled_from([-1, 0, 1])), min_size=1, max_size=60)


def test_oracle_examples():
    o = ExactOracle(5)
    oracle_update(o, StreamUpdate(1, 1))
    assert (o.frequency(1), o.distinct, o.f2) == (1, 1, 1)
    o = ExactOracle(5)
    for u in [(1, 1), (1, 1), (1, -1)]:
        o.update(u)
    assert (o.frequency(1), o.distinct, o.f2) == (1, 1, 1)
    o = ExactOracle(10)
    for u in [(1, 1)] * 3 + [(2, 1)] * 4:
        o.update(u)
    assert (o.f2, o.distinct) == (25, 2)
    assert o.vector()[:3].tolist() == [3, 4, 0]


@given(general_updates)
def test_oracle_matches_recount(updates):
    o = ExactOracle(N)
    for u, (d, f2, tot) in zip(updates, stream_stats(updates, N)):
        o.update(u)
        assert (o.distinct, o.f2, o.total) == (d, f2, tot)


@given(general_updates)
def test_sparse_oracle_matches_dense(updates):
    dense, sparse = ExactOracle(N), ExactOracle(N)
    sparse._dense, sparse._x = False, {}
    for u in updates:
        dense.update(u)
        sparse.update(u)
        assert (dense.distinct, dense.f2) == (sparse.distinct, sparse.f2)
    np.testing.assert_array_equal(dense.vector(), sparse.vector())


def test_large_universe_uses_dict():
    o = ExactOracle(DENSE_LIMIT + 1)
    o.update((DENSE_LIMIT + 1, 1))
    assert isinstance(o._x, dict) and o.distinct == 1


def test_oracle_errors():
    o = ExactOracle(3, Model.STRICT_TURNSTILE)
    o.update((2, 1))
    with pytest.raises(StrictTurnstileViolation) as info:
        o.update((3, -1))
    assert info.value.t == 2 and "timestep 2" in str(info.value)
    with pytest.raises(ValueError):
        ExactOracle(3).update((4, 1))
    with pytest.raises(ValueError):
        ExactOracle(3).update((1, 2))
    with pytest.raises(ValueError):
        ExactOracle(3, Model.INSERTION_ONLY).update((1, 0))


def test_meta_validation():
    with pytest.raises(ValueError):
        StreamMeta(0, 5)
    with pytest.raises(ValueError):
        StreamMeta(5, 0)


def test_f2_lowerbound_pair_small():
    s, s2 = f2_lowerbound_pair(4)
    assert list(s) == [(1, 1)] * 4
    assert list(s2) == [(1, 1)] * 3 + [(2, 1)]


@pytest.mark.parametrize("T", [1, 2, 10, 1000])
def test_f2_lowerbound_values(T):
    s, s2 = f2_lowerbound_pair(T)
    meta = StreamMeta(2, T, Model.INSERTION_ONLY)
    f, f_ = replay(s, meta)[1][-1], replay(s2, meta)[1][-1]
    assert f == T * T and f_ == (T - 1) ** 2 + 1 and f - f_ == 2 * T - 2


@pytest.mark.parametrize("kind", ["uniform", "singleton-heavy", "phased"])
@pytest.mark.parametrize("model", [Model.STRICT_TURNSTILE, Model.GENERAL_TURNSTILE, Model.INSERTION_ONLY])
def test_generators_respect_model_and_are_deterministic(kind, model):
    meta = StreamMeta(50, 400, model)
    if kind == "phased" and model is Model.INSERTION_ONLY:
        with pytest.raises(ValueError):
            gen_stream(kind, meta, 1)
        return
    a = gen_stream(kind, meta, 1)
    assert a == gen_stream(kind, meta, 1)
    assert a != gen_stream(kind, meta, 2)
    assert len(a) == meta.T
    assert a.elements.min() >= 1 and a.elements.max() <= meta.n
    validate(a, meta)  # raises on any model violation
    assert format_stream(meta, a) == format_stream(meta, gen_stream(kind, meta, 1))


@settings(max_examples=30)
@given(st.integers(0, 2**32), st.integers(1, 300), st.integers(2, 40))
def test_strict_generators_never_go_negative(seed, T, n):
    meta = StreamMeta(n, T, Model.STRICT_TURNSTILE)
    for kind in ("uniform", "singleton-heavy"):
        s = gen_stream(kind, meta, seed)
        o = ExactOracle(n, Model.STRICT_TURNSTILE)
        for u in s:
            o.update(u)


def test_phased_support_profile():
    meta = StreamMeta(500, 1000, Model.STRICT_TURNSTILE)
    d = replay(gen_stream("phased", meta, 3, peak=100), meta)[0]
    assert d.max() == 100 and d[99] == 100 and d[199] == 0
    assert set(np.unique(d[:200])) == set(range(101))


def test_singleton_heavy_has_heavy_hitter():
    meta = StreamMeta(1000, 2000, Model.STRICT_TURNSTILE)
    s = gen_stream("singleton-heavy", meta, 4)
    o = ExactOracle(1000)
    for u in s:
        o.update(u)
    x = o.vector()
    assert x[0] > 500 and np.all(x[1:] <= 1)


def test_unknown_kind():
    with pytest.raises(ValueError):
        gen_stream("zipf", StreamMeta(4, 4), 0)
    with pytest.raises(ValueError):
        gen_stream(GeneratorKind.F2_LOWER_BOUND, StreamMeta(1, 4), 0)


def test_stream_file_round_trip(tmp_path):
    meta = StreamMeta(30, 200, Model.STRICT_TURNSTILE)
    s = gen_stream("uniform", meta, 5)
    path = tmp_path / "s.txt"
    write_stream(meta, s, path)
    meta2, s2 = read_stream(path)
    assert meta2 == meta and s2 == s
    assert path.read_text().splitlines()[:2] == ["# n=30 T=200 model=strict", f"1,{s[0].element},{s[0].sign}"]


@pytest.mark.parametrize(
    "text, line",
    [
        ("", None),
        ("n=3 T=1 model=strict\n1,1,1\n", 1),
        ("# n=3 T=1 model=weird\n1,1,1\n", 1),
        ("# n=3 T=2 model=general\n1,1,1\n", None),
        ("# n=3 T=1 model=general\n1,1\n", 2),
        ("# n=3 T=2 model=general\n1,1,1\n3,1,1\n", 3),
        ("# n=3 T=1 model=general\n1,x,1\n", 2),
        ("# n=3 T=1 model=general\n1,4,1\n", 2),
        ("# n=3 T=1 model=general\n1,1,2\n", 2),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(StreamFormatError) as info:
        parse_stream(text)
    assert info.value.line == line


def test_parse_rejects_model_violations():
    with pytest.raises(StrictTurnstileViolation):
        parse_stream("# n=3 T=2 model=strict\n1,1,1\n2,2,-1\n")
    with pytest.raises(StreamFormatError):
        parse_stream("# n=3 T=1 model=insertion\n1,1,-1\n")


def test_stream_helpers():
    s = Stream.from_updates([(1, 1), (2, -1)])
    assert s[1] == StreamUpdate(2, -1)
    assert s.replace(0, StreamUpdate(3, 0)) == Stream([3, 2], [0, -1])
    with pytest.raises(ValueError):
        Stream([1, 2], [1])
    with pytest.raises(ValueError):
        write_stream(StreamMeta(3, 5), s, "/dev/null")
