import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import freqz, savgol_filter

import fixtures as fx
from dynunc.core import TimeSeriesU
from dynunc.filter_design import (
    FreqRespData,
    design_target,
    group_delay,
    inverse_variance_weights,
    isstable,
    kaiser_lowpass,
    lsfir,
    lsiir,
    passband_error,
    product_weights,
    savgol,
    savgol_coeffs,
)
from dynunc.filter_unc import DigitalFilterU, fir_unc_filter


def digital_response(b, a, f, fs=1.0):
    return freqz(b, a, worN=2 * np.pi * np.asarray(f) / fs)[1]


def test_freq_resp_data_invariants():
    with pytest.raises(ValueError):
        FreqRespData([0.0, 0.0], [1, 1])
    with pytest.raises(ValueError):
        FreqRespData([0.0, 1.0], [1, np.nan])
    with pytest.raises(ValueError):
        FreqRespData([0.0, 0.6], [1, 1], fs=1.0)
    H = FreqRespData([0.0, 0.5], [1, 1j], np.eye(4), fs=1.0)
    np.testing.assert_array_equal(H.reim, [1, 0, 0, 1])
    D = H.draws(5, np.random.default_rng(0))
    assert D.shape == (5, 2)


def test_weights():
    H = FreqRespData([0.0, 0.1], [2.0, 1j], np.diag([1.0, 4.0, 0.25, 1.0]))
    np.testing.assert_allclose(product_weights(H), [4.0, 1.0])
    w = inverse_variance_weights(H)
    assert w.shape == (2,) and np.all(w > 0)


def test_lsfir_identity_is_delayed_impulse():
    f = np.linspace(0, 0.5, 100)
    flt = lsfir(FreqRespData(f, np.ones(f.size), fs=1.0), 20, 5, 1.0)
    e = np.zeros(21)
    e[5] = 1.0
    assert np.abs(flt.b - e).max() < 1e-8
    assert flt.delay_n0 == 5 and flt.is_fir


def test_lsfir_sos_inverse_passband():
    f = fx.sos_design_grid()
    H = FreqRespData(f, fx.sos_response(f), fs=1.0)
    flt = lsfir(H, 48, 24, 1.0, weights=product_weights(H))
    # independent evaluation of the compensated response
    fp = f[f <= 0.8 * 0.125]
    dev = fx.sos_response(fp) * digital_response(flt.b, [1.0], fp) - np.exp(-2j * np.pi * fp * 24)
    assert np.abs(dev).max() < 1e-3
    assert passband_error(H, flt, 1.0, 0.1) == pytest.approx(np.abs(dev).max(), rel=1e-9)


def test_lsfir_errors_and_warning():
    f = np.linspace(0, 0.5, 10)
    H = FreqRespData(f, np.ones(10), fs=1.0)
    with pytest.raises(ValueError):
        lsfir(H, 20, 0, 1.0)
    with pytest.raises(TypeError):
        lsfir(np.ones(10), 4, 0, 1.0)
    f = np.linspace(0, 0.5, 200)
    Hs = FreqRespData(f, fx.sos_response(f), fs=1.0)
    with pytest.warns(RuntimeWarning, match="residual"):
        lsfir(Hs, 6, 0, 1.0)
    with pytest.raises(np.linalg.LinAlgError):
        lsfir(FreqRespData(np.linspace(0, 0.01, 60), np.ones(60), fs=1.0), 40, 0, 1.0)


def test_lsfir_coefficient_covariance_covers_ground_truth():
    f = fx.sos_design_grid(300)
    Htrue = fx.sos_response(f)
    rel = 2e-3
    cov = np.diag(np.r_[(rel * np.abs(Htrue)) ** 2, (rel * np.abs(Htrue)) ** 2])
    ref = lsfir(FreqRespData(f, Htrue, fs=1.0), 48, 24, 1.0, weights=np.abs(Htrue) ** 2)
    t = np.arange(400)
    y = np.exp(-0.5 * ((t - 100) / 6.0) ** 2) * np.cos(2 * np.pi * 0.11 * t)
    x = TimeSeriesU(y, 1.0)
    truth = fir_unc_filter(x, ref).values
    r = np.random.default_rng(12)
    fractions = []
    for i in range(10):
        R = np.r_[Htrue.real, Htrue.imag] + np.sqrt(np.diag(cov)) * r.standard_normal(2 * f.size)
        Hm = FreqRespData(f, R[: f.size] + 1j * R[f.size :], cov, fs=1.0)
        flt = lsfir(Hm, 48, 24, 1.0, weights=np.abs(Htrue) ** 2, mc_draws=1000, seed=i)
        est = fir_unc_filter(x, flt)
        live = est.std() > 0
        fractions.append(np.mean(np.abs(est.values - truth)[live] <= 2 * est.std()[live]))
    assert np.mean(fractions) >= 0.9


def test_lsiir_recovers_one_pole_filter():
    b0, a0 = [0.3], [1.0, -0.7]
    f = np.linspace(0, 0.5, 50)
    H = FreqRespData(f, digital_response(b0, a0, f), fs=1.0)
    flt, res, stab = lsiir(H, 0, 1, 0, 1.0, inv=False)
    np.testing.assert_allclose(flt.b, b0, atol=1e-6)
    np.testing.assert_allclose(flt.a, a0, atol=1e-6)
    assert not stab and res < 1e-8


def test_lsiir_identity():
    f = np.linspace(0, 0.5, 64)
    flt, res, _ = lsiir(FreqRespData(f, np.ones(64), fs=1.0), 4, 1, 2, 1.0)
    e = np.zeros(5)
    e[2] = 1.0
    np.testing.assert_allclose(flt.b, e, atol=1e-8)
    np.testing.assert_allclose(flt.a, [1.0, 0.0], atol=1e-8)


def test_lsiir_stabilizes_inverse_of_nonminimum_phase_system():
    f = np.linspace(0, 0.5, 64)
    H = FreqRespData(f, digital_response([1.0, -2.0], [1.0], f), fs=1.0)
    flt, _, stab = lsiir(H, 0, 1, 0, 1.0)
    assert stab and isstable(flt)
    assert np.abs(flt.poles()).max() < 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 6), st.integers(1, 4), st.booleans())
def test_lsiir_always_stable(seed, nb, na, inv):
    r = np.random.default_rng(seed)
    f = np.linspace(0, 0.5, 40)
    z = np.exp(-2j * np.pi * f)
    roots = r.uniform(0.2, 3.0, 3) * np.exp(1j * r.uniform(0, np.pi, 3))
    H = np.polyval(np.real(np.poly(np.r_[roots, roots.conj()]))[::-1], z)
    flt, res, _ = lsiir(FreqRespData(f, H, fs=1.0), nb, na, int(r.integers(0, 4)), 1.0, inv=inv)
    assert isstable(flt) and np.isfinite(res)


def test_design_target():
    f = np.array([0.0, 0.25])
    H = FreqRespData(f, [2.0, 1j], fs=1.0)
    np.testing.assert_allclose(design_target(H, 1, 1.0), [0.5, -1j * np.exp(-0.5j * np.pi)])
    np.testing.assert_allclose(design_target(H, 0, 1.0, inv=False), [2.0, 1j])


def test_kaiser_lowpass():
    low = kaiser_lowpass(64, 0.125, 1.0, 8.0)
    assert low.b.sum() == pytest.approx(1.0, abs=1e-3) and low.delay_n0 == 32
    f = np.linspace(1.5 * 0.125, 0.5, 2000)
    assert 20 * np.log10(np.abs(digital_response(low.b, [1.0], f)).max()) <= -40
    rect = kaiser_lowpass(16, 0.2, 1.0, 0.0)
    n = np.arange(17) - 8
    h = 0.4 * np.sinc(0.4 * n)
    np.testing.assert_allclose(rect.b, h / h.sum(), rtol=1e-12)
    np.testing.assert_allclose(rect.b, rect.b[::-1])
    for bad in (dict(order=15, cutoff=0.1), dict(order=16, cutoff=0.5), dict(order=16, cutoff=0.1, beta=-1)):
        with pytest.raises(ValueError):
            kaiser_lowpass(fs=1.0, **bad)


def test_group_delay_fir_cases():
    f = np.linspace(0, 0.45, 30)
    e = np.zeros(8)
    e[5] = 1.0
    np.testing.assert_allclose(group_delay(DigitalFilterU(e), f, 1.0), 5.0, atol=1e-12)
    b = np.random.default_rng(1).standard_normal(7)
    sym = np.r_[b, b[::-1]]
    g = group_delay(DigitalFilterU(sym), [0.01, 0.07], 1.0)
    np.testing.assert_allclose(g, (sym.size - 1) / 2, atol=1e-9)


def test_group_delay_one_pole_against_finite_difference():
    flt = DigitalFilterU([1.0], [1.0, -0.8])
    f = np.linspace(0.01, 0.49, 25)
    h = 1e-6
    ph = lambda ff: np.unwrap(np.angle(digital_response(flt.b, flt.a, ff)))
    fd = -(ph(f + h) - ph(f - h)) / (2 * np.pi * 2 * h)
    np.testing.assert_allclose(group_delay(flt, f, 1.0), fd, atol=1e-3)


def test_group_delay_zero_response():
    with pytest.raises(ValueError):
        group_delay(DigitalFilterU([1.0, 1.0]), [0.5], 1.0)


def test_isstable_cases():
    assert isstable(DigitalFilterU([1.0], [1.0, -0.5]))
    assert not isstable(DigitalFilterU([1.0], [1.0, -2.0]))
    assert isstable(DigitalFilterU([1.0, 2.0]))
    r = np.random.default_rng(3)
    for radius, expected in ((0.999, True), (1.001, False)):
        p = r.uniform(0.1, 0.9, 5) * np.exp(1j * r.uniform(0, np.pi, 5))
        p[0] = radius * p[0] / abs(p[0])
        a = np.real(np.poly(np.r_[p, p.conj()]))
        assert isstable(DigitalFilterU([1.0], a)) is expected


@given(st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_savgol_reproduces_polynomials(deg, seed):
    r = np.random.default_rng(seed)
    t = np.arange(60, dtype=float)
    x = np.polyval(r.uniform(-1, 1, deg + 1), t / 60)
    np.testing.assert_allclose(savgol(x, 11, 4), x, atol=1e-10)


def test_savgol_derivative_of_ramp():
    x = 3.5 * np.arange(50) * 0.1 + 2
    np.testing.assert_allclose(savgol(x, 7, 2, deriv=1, dt=0.1), 3.5, rtol=1e-10)


def test_savgol_reduces_noise():
    # the white-noise gain of the central window is 1/3.05; edge samples
    # are extrapolations with larger variance, so the interior is compared
    assert 1 / np.linalg.norm(savgol_coeffs(21, 3)) > 3
    r = np.random.default_rng(5)
    t = np.arange(20_000)
    clean = np.sin(2 * np.pi * t / 200)
    noisy = clean + 0.1 * r.standard_normal(t.size)
    inner = slice(10, -10)
    raw = np.sqrt(np.mean((noisy - clean)[inner] ** 2))
    smooth = np.sqrt(np.mean((savgol(noisy, 21, 3) - clean)[inner] ** 2))
    assert raw / smooth >= 3


@pytest.mark.parametrize("deriv", [0, 1, 2])
def test_savgol_matches_scipy(deriv):
    x = np.random.default_rng(0).standard_normal(80).cumsum()
    np.testing.assert_allclose(savgol(x, 15, 3, deriv, 0.5),
                               savgol_filter(x, 15, 3, deriv, 0.5, mode="interp"), atol=1e-10)
    c = savgol_coeffs(15, 3, deriv, 0.5)
    assert c.shape == (15,)


def test_savgol_errors():
    for args in ((np.ones(30), 10, 2), (np.ones(30), 5, 5), (np.ones(30), 5, 2, 3), (np.ones(3), 5, 2)):
        with pytest.raises(ValueError):
            savgol(*args)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 20), st.integers(1, 12), st.sampled_from([None, "product"]))
def test_lsfir_nested_orders_never_increase_ls_objective(delay, step, weights):
    f = fx.sos_design_grid(200)
    H = FreqRespData(f, fx.sos_response(f), fs=1.0)
    w = None if weights is None else product_weights(H)
    sw = np.ones(f.size) if w is None else np.sqrt(w)
    target = np.exp(-2j * np.pi * f * delay) / fx.sos_response(f)

    def objective(order):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            flt = lsfir(H, order, delay, 1.0, weights=w)
        return np.sum(np.abs(sw * (digital_response(flt.b, [1.0], f) - target)) ** 2)

    lo = objective(delay)
    assert objective(delay + step) <= lo * (1 + 1e-9)


def test_lsfir_band_error_decreases_with_order_while_order_limited():
    f = fx.sos_design_grid()
    H = FreqRespData(f, fx.sos_response(f), fs=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        err = [passband_error(H, lsfir(H, o, 8, 1.0, weights=product_weights(H)), 1.0, 0.1)
               for o in range(8, 17, 2)]
    assert np.all(np.diff(err) < 0)


def test_inverse_cascaded_with_lowpass():
    f = fx.sos_design_grid()
    H = FreqRespData(f, fx.sos_response(f), fs=1.0)
    inv = lsfir(H, 48, 24, 1.0, weights=product_weights(H))
    flt = inv.cascade(kaiser_lowpass(64, 0.2, 1.0, 8.0))
    assert flt.delay_n0 == 24 + 32
    fp, fst = f[f <= 0.1], f[f >= 0.3]
    dev = fx.sos_response(fp) * digital_response(flt.b, flt.a, fp) - np.exp(
        -2j * np.pi * fp * flt.delay_n0
    )
    assert np.abs(dev).max() < 1e-2
    assert np.abs(digital_response(flt.b, flt.a, fst)).max() < 1e-2
