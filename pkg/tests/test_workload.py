import io
from itertools import islice

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdpsim.workload import (
    CacheRequest,
    Discrete,
    LogUniform,
    Op,
    SyntheticSpec,
    TraceError,
    TraceStats,
    WorkloadError,
    ZipfSampler,
    gen_synthetic,
    key_size_table,
    parse_trace,
    profile,
    strip_gets,
    take,
    write_trace,
)


def test_same_seed_same_stream():
    spec = SyntheticSpec(num_keys=5000, total_ops=20000, seed=7)
    assert list(gen_synthetic(spec)) == list(gen_synthetic(spec))


def test_different_seed_different_stream():
    a = take(gen_synthetic(SyntheticSpec(num_keys=5000, seed=1)), 100)
    b = take(gen_synthetic(SyntheticSpec(num_keys=5000, seed=2)), 100)
    assert a != b


def test_total_ops_bounds_stream():
    assert sum(1 for _ in gen_synthetic(SyntheticSpec(num_keys=100, total_ops=1234))) == 1234


def test_get_set_ratio_four_to_one():
    reqs = list(gen_synthetic(SyntheticSpec(num_keys=10000, total_ops=200000, get_fraction=0.8)))
    gets = sum(r.op is Op.GET for r in reqs)
    p = gets / len(reqs)
    sigma = (0.8 * 0.2 / len(reqs)) ** 0.5
    assert abs(p - 0.8) < 4 * sigma


def test_uniform_set_only_regime():
    spec = SyntheticSpec(num_keys=1000, zipf_alpha=0.0, get_fraction=0.0, total_ops=5000)
    assert all(r.op is Op.SET for r in gen_synthetic(spec))


def test_sizes_are_stable_per_key_and_class_faithful():
    spec = SyntheticSpec(num_keys=2000, total_ops=50000, get_fraction=0.0)
    n_small, table = key_size_table(spec)
    seen = {}
    for r in gen_synthetic(spec):
        assert seen.setdefault(r.key, r.value_size_bytes) == r.value_size_bytes
        assert r.value_size_bytes == table[r.key]
        if r.key < n_small:
            assert r.value_size_bytes <= spec.small_item_threshold
        else:
            assert r.value_size_bytes > spec.small_item_threshold


def test_zipf_alpha_zero_is_uniform_within_three_sigma():
    n, samples = 100, 1_000_000
    counts = np.bincount(ZipfSampler(n, 0.0).sample(np.random.default_rng(0), samples), minlength=n)
    p = 1 / n
    sigma = (samples * p * (1 - p)) ** 0.5
    # fixed seed: every bin lands inside the 3-sigma band
    assert np.all(np.abs(counts - samples * p) <= 3 * sigma)


def test_zipf_alpha_one_top_key_frequency():
    n, samples = 1000, 1_000_000
    harmonic = np.sum(1.0 / np.arange(1, n + 1))
    draws = ZipfSampler(n, 1.0).sample(np.random.default_rng(1), samples)
    top = np.count_nonzero(draws == 0) / samples
    assert top == pytest.approx(1.0 / harmonic, rel=0.05)


def test_zipf_through_generator_top_key():
    spec = SyntheticSpec(num_keys=500, zipf_alpha=1.0, get_fraction=0.0, small_object_op_fraction=1.0,
                         total_ops=400_000, seed=3)
    keys = np.fromiter((r.key for r in gen_synthetic(spec)), dtype=np.int64)
    harmonic = np.sum(1.0 / np.arange(1, 501))
    assert np.count_nonzero(keys == 0) / keys.size == pytest.approx(1.0 / harmonic, rel=0.05)


def test_oversized_table_is_rejected():
    with pytest.raises(WorkloadError, match="desk-scale"):
        SyntheticSpec(num_keys=10**9).validate()


@pytest.mark.parametrize(
    "kw",
    [
        {"get_fraction": 1.5},
        {"zipf_alpha": -1},
        {"num_keys": 0},
        {"small_size_dist": LogUniform(100, 4000)},
        {"large_size_dist": LogUniform(1000, 5000)},
    ],
)
def test_spec_validation(kw):
    with pytest.raises(WorkloadError):
        SyntheticSpec(**kw).validate()


def test_discrete_sizes():
    d = Discrete((100, 200), (1.0, 3.0))
    s = d.sample(np.random.default_rng(0), 40000)
    assert set(np.unique(s).tolist()) == {100, 200}
    assert np.mean(s == 200) == pytest.approx(0.75, abs=0.01)


def test_profiles_have_paper_op_ratios():
    assert profile("kv-cache").get_fraction == 0.8
    assert profile("twitter-c12").get_fraction == 0.2
    with pytest.raises(WorkloadError):
        profile("nope")


# -- strip_gets --------------------------------------------------------------------------


def test_strip_gets_examples():
    s = [CacheRequest(Op.GET, 1, 0)] * 4 + [CacheRequest(Op.SET, 1, 10)]
    assert list(strip_gets(s)) == [CacheRequest(Op.SET, 1, 10)]
    assert list(strip_gets([])) == []


def test_write_only_profile_preserves_set_sequence():
    full = profile("kv-cache", num_keys=3000, total_ops=30000)
    wo = profile("kv-cache-wo", num_keys=3000, total_ops=30000)
    assert list(gen_synthetic(wo)) == list(strip_gets(gen_synthetic(full)))


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from(list(Op)), st.integers(0, 50), st.integers(1, 99))))
def test_strip_gets_keeps_order(rows):
    reqs = [CacheRequest(*r) for r in rows]
    assert list(strip_gets(reqs)) == [r for r in reqs if r.op is not Op.GET]


# -- traces -------------------------------------------------------------------------------


def test_trace_rows():
    stats = TraceStats()
    out = list(parse_trace(["SET,42,100", "GET,42,0", "# note", "FROB,1,1"] + ["DELETE,3,0"] * 20, stats))
    assert out[0] == CacheRequest(Op.SET, 42, 100)
    assert out[1] == CacheRequest(Op.GET, 42, 0)
    assert stats.malformed == 1
    assert stats.comments == 1
    assert stats.unsupported_ops == {"FROB": 1}


def test_trace_aborts_when_mostly_garbage():
    with pytest.raises(TraceError):
        list(parse_trace(["junk"] * 30 + ["SET,1,1"] * 5))


def test_trace_unreadable_source(tmp_path):
    with pytest.raises(TraceError):
        list(parse_trace(tmp_path / "missing.csv"))


def test_trace_round_trip(tmp_path):
    reqs = take(gen_synthetic(SyntheticSpec(num_keys=100, seed=4)), 500)
    path = tmp_path / "t.csv"
    with open(path, "w") as fh:
        write_trace(reqs, fh)
    assert list(parse_trace(path)) == reqs


@given(key=st.integers(0, 2**64 - 1), size=st.integers(1, 10**6))
def test_trace_parses_any_valid_set(key, size):
    assert list(parse_trace(io.StringIO(f"SET,{key},{size}\n"))) == [CacheRequest(Op.SET, key, size)]


def test_unbounded_stream_keeps_going():
    assert len(list(islice(gen_synthetic(SyntheticSpec(num_keys=10)), 70000))) == 70000
