import tracemalloc

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import fixtures as fx
from dynunc.core import linear_propagate
from dynunc.filter_unc import DigitalFilterU, smc_filter
from dynunc.mc import RunningStats, make_rng, mc_propagate, running_stats_update


def test_running_stats_small_cases():
    s = RunningStats(1)
    for v in (1.0, 2.0, 3.0):
        running_stats_update(s, [v])
    assert s.mean[0] == 2.0 and s.variance()[0] == 1.0
    c = RunningStats(3)
    for _ in range(50):
        c.update([0.1, -7.3, 1e9])
    assert np.all(c.variance() == 0)
    assert np.all(RunningStats(3).update_batch(np.full((40, 3), 0.3)).variance() == 0)


def test_running_stats_normal_draws_against_two_pass():
    z = np.random.default_rng(7).normal(5.0, 2.0, (100_000, 3))
    s = RunningStats(3)
    for row in z[:1000]:
        s.update(row)
    for i in range(1000, z.shape[0], 9999):
        s.update_batch(z[i : i + 9999])
    np.testing.assert_allclose(s.variance(), 4.0, rtol=0.02)
    np.testing.assert_allclose(s.variance(), z.var(axis=0, ddof=1), rtol=1e-10)
    np.testing.assert_allclose(s.mean, z.mean(axis=0), rtol=1e-10)


@settings(max_examples=50, deadline=None)
@given(
    arrays(float, st.tuples(st.integers(2, 200), st.integers(1, 4)),
           elements=st.floats(-1e6, 1e6)),
    st.integers(1, 50),
)
def test_running_stats_merge_order_matches_two_pass(x, split):
    a = RunningStats(x.shape[1], full_cov=True).update_batch(x[:split])
    b = RunningStats(x.shape[1], full_cov=True).update_batch(x[split:])
    s = a.merge(b)
    scale = max(np.abs(x).max(), 1.0) ** 2
    np.testing.assert_allclose(s.variance(), x.var(axis=0, ddof=1), rtol=1e-9, atol=1e-9 * scale)
    np.testing.assert_allclose(s.cov(), np.atleast_2d(np.cov(x.T)), rtol=1e-9, atol=1e-9 * scale)


def test_mc_linear_model_matches_closed_form():
    C, x, U = fx.linear_fixture()
    res = mc_propagate(lambda X: X @ C.T, x, U, draws=100_000, seed=3, vectorized=True,
                       full_cov=True)
    y, Uy = linear_propagate(C, x, U)
    np.testing.assert_allclose(res.std**2, np.diag(Uy), rtol=0.03)
    scale = np.sqrt(np.outer(np.diag(Uy), np.diag(Uy)))
    assert np.all(np.abs(res.cov - Uy) <= 0.03 * scale)
    np.testing.assert_allclose(res.mean, y, atol=0.01 * np.sqrt(np.diag(Uy)).max())


@pytest.mark.parametrize("draws", [100, 1000, 4321])
def test_mc_zero_covariance(draws):
    f = lambda v: np.array([v[0] * v[1], np.sin(v[0])])
    res = mc_propagate(f, [2.0, 3.0], np.zeros((2, 2)), draws=draws, seed=1)
    np.testing.assert_array_equal(res.mean, f([2.0, 3.0]))
    assert np.all(res.std == 0)


def test_mc_determinism_across_jobs_and_runs():
    C, x, U = fx.linear_fixture()
    kw = dict(draws=20_000, seed=11, vectorized=True, chunk=1500)
    r1 = mc_propagate(lambda X: X @ C.T, x, U, n_jobs=1, **kw)
    r2 = mc_propagate(lambda X: X @ C.T, x, U, n_jobs=4, **kw)
    r3 = mc_propagate(lambda X: X @ C.T, x, U, n_jobs=1, **kw)
    assert r1.mean.tobytes() == r2.mean.tobytes() == r3.mean.tobytes()
    assert r1.std.tobytes() == r2.std.tobytes() == r3.std.tobytes()


def test_mc_scalar_and_vectorized_models_agree():
    C, x, U = fx.linear_fixture()
    a = mc_propagate(lambda v: C @ v, x, U, draws=500, seed=2)
    b = mc_propagate(lambda X: X @ C.T, x, U, draws=500, seed=2, vectorized=True)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12)
    np.testing.assert_allclose(a.std, b.std, rtol=1e-12)


def test_mc_error_rate_is_inverse_sqrt_draws():
    C, x, U = fx.linear_fixture()
    exact = np.diag(linear_propagate(C, x, U)[1])
    errs = []
    for M in (1_000, 10_000, 100_000):
        e = [
            np.sqrt(np.mean((mc_propagate(lambda X: X @ C.T, x, U, draws=M, seed=s,
                                          vectorized=True).std ** 2 / exact - 1) ** 2))
            for s in range(20)
        ]
        errs.append(np.sqrt(np.mean(np.square(e))))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > np.sqrt(10) / 2) and np.all(ratios < 2 * np.sqrt(10))


def test_mc_failure_handling():
    def bad(v):
        if v[0] > 0:
            raise ArithmeticError("boom")
        return v

    with pytest.raises(ArithmeticError):
        mc_propagate(bad, [0.0], [[1.0]], draws=200, seed=0)
    res = mc_propagate(bad, [0.0], [[1.0]], draws=1000, seed=0, on_error="skip")
    assert 400 < res.failed < 600 and res.draws == 1000 - res.failed
    with pytest.raises(ValueError):
        mc_propagate(bad, [0.0], [[1.0]], draws=99)


def test_rng_is_counter_based_and_reproducible():
    a = make_rng(5).standard_normal(4)
    b = make_rng(5).standard_normal(4)
    assert a.tobytes() == b.tobytes()
    assert type(make_rng(5).bit_generator).__name__ == "Philox"


def _smc_peak(n, draws=1000):
    x = np.sin(np.arange(n) / 10.0)
    flt = DigitalFilterU([0.2, 0.3], [1.0, -0.5, 0.1], np.eye(4) * 1e-6)
    tracemalloc.start()
    smc_filter(x, 0.01, flt, draws=draws, seed=1, chunk=250, block=128)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return peak


def test_smc_memory_does_not_scale_with_draws_times_length():
    small, large = _smc_peak(1_000), _smc_peak(10_000)
    # the output statistics are O(N); the draws x N product (80 MB) must never appear
    growth = large - small
    assert growth < 12 * 9_000 * 8
    assert large < 1000 * 10_000 * 8 / 20
