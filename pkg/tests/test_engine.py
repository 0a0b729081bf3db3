import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcomp.engine import (
    Kernel,
    KernelStepError,
    ParallelRunError,
    RunConfig,
    SampleStats,
    SchemaMismatchError,
    identity_kernel,
    integrated_autocorrelation,
    merge,
    run_chain,
    run_parallel,
    throughput_report,
)
from pcomp.rng import make_backend


def counting_kernel():
    """Observable is the step index; checks the recording schedule."""

    def step(pbits, state):
        return np.zeros(1), (float(state),), state + 1

    return Kernel(step, np.zeros(1), ("t",), 1)


def test_identity_kernel_fair_coin():
    n = 20_000
    stats, trace = run_chain(identity_kernel(), RunConfig(n), make_backend("longperiod", 1))
    assert stats.count == n and trace.shape == (n, 1)
    assert abs(stats["bit0"] - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_schedule_arithmetic():
    calls = []

    def step(pbits, state):
        calls.append(1)
        return np.zeros(1), (float(len(calls)),), state

    cfg = RunConfig(10, burn_in=5, thinning=2)
    stats, trace = run_chain(Kernel(step, np.zeros(1), ("t",)), cfg, make_backend())
    assert len(calls) == 25 == cfg.n_steps
    # steps 7, 9, ..., 25 are kept; the last step is always recorded
    np.testing.assert_array_equal(trace[:, 0], np.arange(7, 26, 2))


def test_run_chain_deterministic():
    cfg = RunConfig(500, burn_in=3, thinning=3)
    a = run_chain(identity_kernel(4), cfg, make_backend("lfsr32", 9))[1]
    b = run_chain(identity_kernel(4), cfg, make_backend("lfsr32", 9))[1]
    np.testing.assert_array_equal(a, b)


def test_kernel_error_carries_partial_trace():
    def step(pbits, state):
        if state == 6:
            raise RuntimeError("boom")
        return np.zeros(1), (float(state),), state + 1

    with pytest.raises(KernelStepError) as info:
        run_chain(Kernel(step, np.zeros(1), ("t",), 0), RunConfig(10), make_backend())
    err = info.value
    assert err.step == 6 and err.valid is False
    np.testing.assert_array_equal(err.partial_trace[:, 0], np.arange(6))


@pytest.mark.parametrize(
    "kw", [dict(n_samples=0), dict(n_samples=1, n_chains=0), dict(n_samples=1, thinning=0),
           dict(n_samples=1, burn_in=-1), dict(n_samples=1, master_seed=-1)]
)
def test_run_config_validation(kw):
    with pytest.raises(ValueError):
        RunConfig(**kw)


def test_parallel_merge_equals_concatenation():
    cfg = RunConfig(300, n_chains=4, master_seed=5)
    stats, traces = run_parallel(identity_kernel(2), cfg)
    direct = SampleStats.from_samples(("bit0",), np.concatenate(traces))
    assert stats.count == direct.count == 1200
    np.testing.assert_allclose(stats.mean, direct.mean, rtol=1e-14)
    np.testing.assert_allclose(stats.m2, direct.m2, rtol=1e-12)


def test_parallel_single_chain_reduces_to_run_chain():
    cfg = RunConfig(200, master_seed=11)
    stats, traces = run_parallel(identity_kernel(), cfg)
    ref_stats, ref_trace = run_chain(identity_kernel(), cfg, cfg.chain_backend(0))
    np.testing.assert_array_equal(traces[0], ref_trace)
    assert stats.count == ref_stats.count and np.array_equal(stats.mean, ref_stats.mean)


def test_parallel_chains_distinct():
    cfg = RunConfig(1000, n_chains=3, master_seed=1)
    _, traces = run_parallel(identity_kernel(), cfg)
    for i in range(3):
        for j in range(i + 1, 3):
            assert not np.array_equal(traces[i], traces[j])


def test_parallel_independent_of_worker_count():
    cfg = RunConfig(100, n_chains=3, master_seed=2)
    a = run_parallel(identity_kernel(), cfg)[1]
    b = run_parallel(identity_kernel(), cfg, max_workers=3)[1]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_parallel_failure_lists_chains():
    seen = []

    def step(pbits, state):
        seen.append(1)
        if pbits.outputs[0] == 1 and state > 2:
            raise ValueError("odd")
        return np.zeros(1), (0.0,), state + 1

    with pytest.raises(ParallelRunError) as info:
        run_parallel(Kernel(step, np.zeros(1), ("x",), 0), RunConfig(50, n_chains=2))
    assert sorted(info.value.failures) == [0, 1]


samples_st = st.lists(st.floats(-1e3, 1e3), min_size=0, max_size=40)


@given(samples_st, samples_st)
@settings(max_examples=60, deadline=None)
def test_merge_matches_direct(xs, ys):
    a = SampleStats.from_samples(("x",), xs)
    b = SampleStats.from_samples(("x",), ys)
    m = merge(a, b)
    d = SampleStats.from_samples(("x",), xs + ys)
    assert m.count == d.count
    np.testing.assert_allclose(m.mean, d.mean, rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(m.m2, d.m2, rtol=1e-9, atol=1e-6)


def test_merge_identity_commutativity_associativity():
    rng = np.random.default_rng(0)
    x = SampleStats.from_samples(("a", "b"), rng.normal(size=(300, 2)))
    y = SampleStats.from_samples(("a", "b"), rng.normal(3, 2, size=(200, 2)))
    z = SampleStats.from_samples(("a", "b"), rng.normal(-1, 5, size=(100, 2)))
    empty = SampleStats(("a", "b"))
    e = merge(x, empty)
    assert e.count == x.count and np.array_equal(e.mean, x.mean) and np.array_equal(e.m2, x.m2)
    xy, yx = merge(x, y), merge(y, x)
    assert xy.count == yx.count
    np.testing.assert_allclose(xy.mean, yx.mean, rtol=1e-15)
    left, right = merge(merge(x, y), z), merge(x, merge(y, z))
    np.testing.assert_allclose(left.variance, right.variance, rtol=1e-12)


def test_merge_halves_of_one_stream():
    x = make_backend("counter", 4).uniforms(1000)
    m = merge(SampleStats.from_samples(("u",), x[:500]), SampleStats.from_samples(("u",), x[500:]))
    d = SampleStats.from_samples(("u",), x)
    np.testing.assert_allclose(m.mean, d.mean, rtol=1e-12)
    np.testing.assert_allclose(m.variance, d.variance, rtol=1e-12)


def test_merge_schema_mismatch():
    with pytest.raises(SchemaMismatchError):
        merge(SampleStats(("a",)), SampleStats(("b",)))


def test_histogram_merges():
    cfg = RunConfig(100, n_chains=2)
    stats, traces = run_parallel(identity_kernel(), cfg, histogram=True)
    assert sum(stats.histogram.values()) == 200
    assert stats.histogram[(1.0,)] == int(np.concatenate(traces).sum())


def test_throughput_examples():
    r = throughput_report(2.0, RunConfig(10**6))
    assert r.samples_per_sec == 5e5
    assert r.ideal_rate is None
    assert throughput_report(1.0, RunConfig(10, n_chains=1), 125e6).ideal_rate == 125e6
    assert throughput_report(1.0, RunConfig(10, n_chains=2), 125e6).ideal_rate == 250e6
    assert "ideal_samples_per_sec=1.25e+08" in str(throughput_report(1.0, RunConfig(10), 125e6))


@given(st.integers(1, 10**7), st.integers(1, 64), st.floats(1e-6, 1e4))
def test_throughput_formula_exact(n_s, n_p, elapsed):
    r = throughput_report(elapsed, RunConfig(n_s, n_chains=n_p))
    assert r.samples_per_sec == n_p * n_s / elapsed
    assert r.total_samples == n_p * n_s


def test_throughput_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        throughput_report(0.0, RunConfig(1))


def test_autocorrelation_time_of_ar1():
    # AR(1) with coefficient a has tau = (1 + a) / (1 - a)
    rng = np.random.default_rng(3)
    a, n = 0.8, 200_000
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0]
    for t in range(1, n):
        x[t] = a * x[t - 1] + e[t]
    assert integrated_autocorrelation(x) == pytest.approx(9.0, rel=0.1)
    assert integrated_autocorrelation(rng.normal(size=50_000)) == pytest.approx(1.0, abs=0.1)
    assert integrated_autocorrelation(np.ones(10)) == 1.0
