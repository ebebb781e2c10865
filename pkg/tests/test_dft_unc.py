import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import fixtures as fx
from dynunc.core import AmpPhaseU, SpectrumU, TimeSeriesU
from dynunc.dft_unc import (
    DeconvolutionError,
    amp_phase_to_dft,
    dft_deconv,
    dft_multiply,
    dft_to_amp_phase,
    dft_transferfunction,
    gum_dft,
    gum_idft,
)


def explicit_jacobian(n):
    k = np.arange(n // 2 + 1)[:, None]
    arg = 2 * np.pi * k * np.arange(n)[None, :] / n
    return np.vstack([np.cos(arg), -np.sin(arg)])


def spectrum(z, U, n=None):
    return SpectrumU(np.r_[z.real, z.imag], np.arange(z.size, dtype=float), U, n)


def test_constant_signal():
    F = gum_dft(TimeSeriesU(np.full(10, 2.5), 1.0))
    assert F.re[0] == pytest.approx(25.0)
    np.testing.assert_allclose(F.values[1:], 0, atol=1e-13)
    assert np.all(F.cov == 0)


@pytest.mark.parametrize("n", [7, 8])
def test_unit_impulse_white_noise(n):
    x = np.zeros(n)
    x[0] = 1.0
    F = gum_dft(TimeSeriesU(x, 1.0, unc=1.0))
    np.testing.assert_allclose(F.re, 1.0)
    np.testing.assert_array_equal(F.im, 0.0)
    J = explicit_jacobian(n)
    np.testing.assert_allclose(F.cov, J @ J.T, atol=1e-12)


def test_shock_covariance_against_monte_carlo(oracles):
    x, s = fx.shock64()
    F = gum_dft(TimeSeriesU(x, 1.0, unc=s))
    d = np.diag(F.cov)
    ref = oracles["gum_dft_shock64_var"]
    live = d > 0
    np.testing.assert_allclose(d[live], ref[live], rtol=0.03)
    assert np.all(ref[~live] < 1e-20)


@pytest.mark.parametrize("n", [9, 16])
@pytest.mark.parametrize("unc", ["scalar", "vector", "full"])
def test_fft_path_equals_dense_path(n, unc):
    r = np.random.default_rng(n)
    u = {"scalar": 0.3, "vector": r.uniform(0.1, 1, n), "full": fx.random_spd(r, n)}[unc]
    x = TimeSeriesU(r.standard_normal(n), 0.01, unc=u)
    a, b = gum_dft(x), gum_dft(x, method="dense")
    np.testing.assert_allclose(a.reim, b.reim, atol=1e-12)
    np.testing.assert_allclose(a.cov, b.cov, atol=1e-12)
    bins = np.array([0, 2, n // 2])
    c = gum_dft(x, bins=bins)
    sel = np.r_[bins, bins + a.m]
    np.testing.assert_allclose(c.cov, a.cov[np.ix_(sel, sel)], atol=1e-12)
    ia, ib = gum_idft(a), gum_idft(a, method="dense")
    np.testing.assert_allclose(ia.cov(), ib.cov(), atol=1e-12)


def test_single_cosine_bin():
    reim = np.zeros(10)
    reim[3] = 1.0
    x = gum_idft(SpectrumU(reim, np.arange(5) / 8.0, None, 8))
    np.testing.assert_allclose(x.values, (2 / 8) * np.cos(2 * np.pi * 3 * np.arange(8) / 8), atol=1e-15)
    assert x.ts == pytest.approx(1.0)


def test_idft_rejects_inconsistent_length():
    F = gum_dft(TimeSeriesU(np.ones(8), 1.0))
    with pytest.raises(ValueError):
        gum_idft(F, 11)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 80), st.integers(0, 2**32 - 1))
def test_round_trip_parseval_and_edges(n, seed):
    r = np.random.default_rng(seed)
    x = TimeSeriesU(r.standard_normal(n) * 10.0 ** r.uniform(-3, 3), 1.0, unc=fx.random_spd(r, n))
    F = gum_dft(x)
    back = gum_idft(F, n)
    np.testing.assert_allclose(back.values, x.values, atol=1e-10 * max(1, np.abs(x.values).max()))
    U = x.cov()
    assert np.linalg.norm(back.cov() - U) <= 1e-8 * np.linalg.norm(U)
    X = F.values
    w = np.full(F.m, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    assert np.sum(w * np.abs(X) ** 2) / n == pytest.approx(np.sum(x.values**2), rel=1e-9)
    # imaginary parts at DC and Nyquist carry no value or uncertainty
    edges = [F.m] + ([2 * F.m - 1] if n % 2 == 0 else [])
    assert np.all(F.reim[edges] == 0) and np.all(F.cov[edges] == 0)
    assert np.array_equal(F.cov, F.cov.T)
    assert np.linalg.eigvalsh(F.cov).min() >= -1e-10 * np.trace(F.cov)


def test_multiply_identity_and_rotation():
    x, Ux, h, Uh = fx.spectrum_pair()
    X = spectrum(x, Ux)
    Y = dft_multiply(X, spectrum(np.ones(16, complex), None))
    np.testing.assert_allclose(Y.reim, X.reim)
    np.testing.assert_allclose(Y.cov, X.cov, atol=1e-18)
    s = 0.2
    Y = dft_multiply(spectrum(np.array([1 + 0j]), np.diag([s**2, 0.0])), spectrum(np.array([1j]), None))
    assert Y.values[0] == pytest.approx(1j)
    assert Y.cov[1, 1] == pytest.approx(s**2) and Y.cov[0, 0] == pytest.approx(0.0)


def test_multiply_against_monte_carlo(oracles):
    x, Ux, h, Uh = fx.spectrum_pair()
    Y = dft_multiply(spectrum(x, Ux), spectrum(h, Uh))
    np.testing.assert_allclose(np.diag(Y.cov), oracles["dft_multiply_16_var"], rtol=0.03)


def test_deconv_scalar_division():
    x, Ux, _, _ = fx.spectrum_pair()
    Y = dft_deconv(spectrum(x, Ux), spectrum(np.full(16, 2 + 0j), None))
    np.testing.assert_allclose(Y.values, x / 2)
    np.testing.assert_allclose(Y.cov, Ux / 4, atol=1e-18)


def test_deconv_against_monte_carlo(oracles):
    x, Ux, h, Uh = fx.spectrum_pair()
    Y = dft_deconv(spectrum(x, Ux), spectrum(h, Uh))
    np.testing.assert_allclose(np.diag(Y.cov), oracles["dft_deconv_16_var"], rtol=0.03)


def test_deconv_variance_inflation_follows_inverse_squared_magnitude():
    x, Ux, _, _ = fx.spectrum_pair()
    mags = np.array([1.0, 0.1, 0.01])
    v = [np.diag(dft_deconv(spectrum(x, Ux), spectrum(np.full(16, g + 0j), None)).cov) for g in mags]
    np.testing.assert_allclose(v[1] / v[0], 100.0, rtol=1e-10)
    np.testing.assert_allclose(v[2] / v[0], 1e4, rtol=1e-10)


def test_deconv_magnitude_floor():
    h = np.ones(6, complex)
    h[[2, 4]] = 1e-9
    with pytest.raises(DeconvolutionError) as exc:
        dft_deconv(spectrum(np.ones(6, complex), None), spectrum(h, None))
    assert list(exc.value.bins) == [2, 4]
    dft_deconv(spectrum(np.ones(6, complex), None), spectrum(h, None), mag_floor=1e-12)


def test_transferfunction_self_and_delay():
    r = np.random.default_rng(4)
    y = TimeSeriesU(r.standard_normal(32), 1.0)
    H = dft_transferfunction(y, y)
    np.testing.assert_allclose(H.values, 1.0, atol=1e-12)
    d = 3
    xm = y.replace(values=np.roll(y.values, d))
    H = dft_transferfunction(y, xm)
    k = np.arange(H.m)
    np.testing.assert_allclose(np.abs(H.values), 1.0, rtol=1e-10)
    np.testing.assert_allclose(H.values, np.exp(2j * np.pi * k * d / 32), atol=1e-10)


def test_transferfunction_compensation_covers_reference():
    n, fs = 256, 256.0
    t = np.arange(n) / fs
    freqs = np.fft.rfftfreq(n, 1 / fs)
    harm = [4, 8, 12]
    # sensor: a fixed response distorting amplitude and phase of each harmonic
    G = 1.0 / (1 + 1j * freqs / 20.0) * np.exp(-2j * np.pi * freqs * 0.004)

    def sensor(sig):
        return np.fft.irfft(np.fft.rfft(sig) * G, n)

    def sines(amps, phases):
        return sum(a * np.sin(2 * np.pi * k * t + p) for a, p, k in zip(amps, phases, harm))

    s = 0.01
    r = np.random.default_rng(9)
    yref = sines([1.0, 0.3, 0.1], [0.0, 0.5, 1.0])
    xm = sensor(yref) + s * r.standard_normal(n)
    yref_n = yref + s * r.standard_normal(n)
    mask = np.isin(np.arange(freqs.size), harm)
    H = dft_transferfunction(TimeSeriesU(yref_n, 1 / fs, unc=s), TimeSeriesU(xm, 1 / fs, unc=s),
                             mask=mask)
    truth = sines([0.8, 0.5, 0.2], [1.0, -0.3, 2.0])
    x2 = TimeSeriesU(sensor(truth) + s * r.standard_normal(n), 1 / fs, unc=s)
    est = gum_idft(dft_multiply(gum_dft(x2), H))
    inside = np.abs(est.values - truth) <= 2 * est.std()
    assert inside.mean() >= 0.9


def test_amp_phase_to_reim_simple():
    F = amp_phase_to_dft(AmpPhaseU([1.0], [0.0], [0.0], np.diag([0.01, 0.0])))
    np.testing.assert_allclose(F.reim, [1.0, 0.0])
    np.testing.assert_allclose(np.diag(F.cov), [0.01, 0.0], atol=1e-18)
    F = amp_phase_to_dft(AmpPhaseU([1.0], [np.pi / 2], [0.0], np.diag([0.0, 0.01])))
    np.testing.assert_allclose(F.reim, [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(np.diag(F.cov), [0.01, 0.0], atol=1e-18)


def test_amp_phase_conversions_against_monte_carlo(oracles):
    A, phi, U = fx.amp_phase_bins()
    F = amp_phase_to_dft(AmpPhaseU(A, phi, np.arange(A.size, dtype=float), U))
    np.testing.assert_allclose(np.diag(F.cov), oracles["amp_phase_to_reim_var"], rtol=0.03)
    z, U = fx.reim_bins()
    ap = dft_to_amp_phase(spectrum(z, U), unwrap=False)
    np.testing.assert_allclose(np.diag(ap.cov), oracles["reim_to_amp_phase_var"], rtol=0.03)


def test_reim_to_amp_phase_simple_and_unwrap():
    ap = dft_to_amp_phase(spectrum(np.array([1j]), None))
    assert ap.amplitude[0] == pytest.approx(1.0) and ap.phase[0] == pytest.approx(np.pi / 2)
    z = np.exp(-1j * 0.9 * np.pi * np.arange(6))
    ap = dft_to_amp_phase(spectrum(z, None))
    np.testing.assert_allclose(np.diff(ap.phase), -0.9 * np.pi)
    with pytest.raises(ValueError):
        dft_to_amp_phase(spectrum(np.array([0j, 1 + 0j]), None))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_conversion_round_trip(m, seed):
    r = np.random.default_rng(seed)
    z = r.uniform(0.1, 3, m) * np.exp(1j * r.uniform(-3, 3, m))
    U = fx.random_spd(r, 2 * m, 1e-4)
    F = spectrum(z, U)
    back = amp_phase_to_dft(dft_to_amp_phase(F))
    np.testing.assert_allclose(back.values, z, rtol=1e-12)
    np.testing.assert_allclose(back.cov, U, atol=1e-12 * np.abs(U).max())
