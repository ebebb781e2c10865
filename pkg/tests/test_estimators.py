import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import fixtures as fx
from dynunc.core import SpectrumU, TimeSeriesU
from dynunc.estimators import (
    DFTDeconvolver,
    FIRDeconvolver,
    IIRDeconvolver,
    SavitzkyGolaySmoother,
    SecondOrderSystemFitter,
)
from dynunc.filter_design import FreqRespData


def sensor_output(y, fs):
    n = y.size
    f = np.fft.rfftfreq(n, 1 / fs)
    return np.fft.irfft(np.fft.rfft(y) * fx.sos_response(f, 1.0, 0.1, fs / 8), n)


def test_params_and_clone():
    est = FIRDeconvolver(order=30, delay=15, fs=2.0)
    assert est.get_params()["order"] == 30
    c = clone(est).set_params(order=40)
    assert c.order == 40 and est.order == 30


def test_second_order_fitter():
    f = np.linspace(0, 200, 30)
    S = fx.sos_response(f, 0.5, 0.2, 80.0)
    s = 1e-3 * np.abs(S)
    m = SecondOrderSystemFitter(draws=300, seed=0).fit(f, S, np.diag(np.r_[s**2, s**2]))
    np.testing.assert_allclose(m.params_.vector, [0.5, 0.2, 80.0], rtol=1e-9)
    np.testing.assert_allclose(m.predict(f), S, rtol=1e-9)
    with pytest.raises(NotFittedError):
        SecondOrderSystemFitter().predict(f)


@pytest.mark.parametrize("model, fmax", [
    (FIRDeconvolver(order=48, delay=24, fs=1.0, lowpass_cutoff=0.2, lowpass_order=32), 0.5),
    # low-order IIR inverses need band-limited calibration data
    (IIRDeconvolver(nb=6, na=4, delay=3, fs=1.0, lowpass_cutoff=0.2, lowpass_order=32), 0.2),
])
def test_filter_deconvolvers_recover_measurand(model, fmax):
    f = np.linspace(0, fmax, 300)
    model.fit(FreqRespData(f, fx.sos_response(f, 1.0, 0.1, 0.125), fs=1.0))
    t = np.arange(512)
    y = np.exp(-0.5 * ((t - 150) / 12.0) ** 2)
    x = TimeSeriesU(sensor_output(y, 1.0), 1.0, unc=1e-3)
    est = model.transform(x)
    d = model.filter_.delay_n0
    err = est.values[d + 100 : 400] - y[100 : 400 - d]
    assert np.abs(err).max() < 0.02
    assert np.all(est.std() > 0)
    with pytest.raises(ValueError):
        model.transform(TimeSeriesU(x.values, 0.5))
    with pytest.raises(TypeError):
        model.transform(x.values)


def test_deconvolver_requires_fit():
    with pytest.raises(NotFittedError):
        FIRDeconvolver().transform(TimeSeriesU(np.zeros(4), 1.0))


def test_dft_deconvolver():
    n = 256
    t = np.arange(n)
    y = np.exp(-0.5 * ((t - 100) / 10.0) ** 2)
    x = TimeSeriesU(sensor_output(y, 1.0), 1.0, unc=1e-4)
    f = np.fft.rfftfreq(n)
    H = SpectrumU.from_complex(fx.sos_response(f, 1.0, 0.1, 0.125), f, None, n)
    est = DFTDeconvolver(lowpass_cutoff=0.3, lowpass_order=32).fit(H).transform(x)
    assert np.abs(est.values - y).max() < 0.01
    with pytest.raises(TypeError):
        DFTDeconvolver().fit(np.ones(3))


def test_savgol_smoother():
    x = np.arange(30.0) ** 2
    sm = SavitzkyGolaySmoother(window=7, polyorder=2)
    np.testing.assert_allclose(sm.fit_transform(x), x, atol=1e-9)
    d = SavitzkyGolaySmoother(window=7, polyorder=2, deriv=1).transform(TimeSeriesU(x, 0.5))
    np.testing.assert_allclose(d.values, 2 * np.arange(30.0) / 0.5, atol=1e-8)
