"""
Estimator-style wrappers around the functional API.

Parameters are set at construction and exposed through ``get_params``;
``fit`` learns from calibration data and ``transform``/``predict``
apply the result. Inputs and outputs are the library's own types
(TimeSeriesU, FreqRespData, SpectrumU), not feature matrices.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import SpectrumU, TimeSeriesU
from .dft_unc import DEFAULT_MAG_FLOOR, dft_deconv, dft_multiply, gum_dft, gum_idft
from .filter_design import FreqRespData, kaiser_lowpass, lsfir, lsiir, product_weights, savgol
from .filter_unc import deconvolve
from .sos import fit_sos, sos_freq_resp

__all__ = [
    "SecondOrderSystemFitter",
    "FIRDeconvolver",
    "IIRDeconvolver",
    "DFTDeconvolver",
    "SavitzkyGolaySmoother",
]


class SecondOrderSystemFitter(BaseEstimator):
    """Fit ``(S0, delta, f0)`` to a frequency response; predict responses."""

    def __init__(self, weighting=False, draws=2000, seed=None):
        self.weighting = weighting
        self.draws = draws
        self.seed = seed

    def fit(self, freqs, S, US=None):
        self.params_ = fit_sos(freqs, S, US, self.weighting, self.draws, self.seed)
        return self

    def predict(self, freqs):
        check_is_fitted(self, "params_")
        return sos_freq_resp(self.params_, freqs)


class _FilterDeconvolver(BaseEstimator, TransformerMixin):
    def _lowpass(self, fs):
        if not self.lowpass_cutoff:
            return None
        return kaiser_lowpass(self.lowpass_order, self.lowpass_cutoff, fs, self.beta)

    def transform(self, x):
        """Deconvolved signal (TimeSeriesU) with propagated uncertainty."""
        check_is_fitted(self, "filter_")
        if not isinstance(x, TimeSeriesU):
            raise TypeError("x must be a TimeSeriesU")
        if not np.isclose(1.0 / x.ts, self.fs, rtol=1e-9):
            raise ValueError("sampling rate of x differs from the design rate")
        return deconvolve(x, self.filter_).y


class FIRDeconvolver(_FilterDeconvolver):
    """Least-squares FIR inverse of a frequency response, optionally
    cascaded with a Kaiser low-pass filter."""

    def __init__(self, order=48, delay=24, fs=1.0, weights="product", lowpass_order=64,
                 lowpass_cutoff=None, beta=8.0, mc_draws=None, seed=None):
        self.order = order
        self.delay = delay
        self.fs = fs
        self.weights = weights
        self.lowpass_order = lowpass_order
        self.lowpass_cutoff = lowpass_cutoff
        self.beta = beta
        self.mc_draws = mc_draws
        self.seed = seed

    def fit(self, H, y=None):
        if not isinstance(H, FreqRespData):
            raise TypeError("H must be FreqRespData")
        w = product_weights(H) if self.weights == "product" else None
        flt = lsfir(H, self.order, self.delay, self.fs, weights=w,
                    mc_draws=self.mc_draws, seed=self.seed)
        low = self._lowpass(self.fs)
        self.inverse_ = flt
        self.filter_ = flt if low is None else flt.cascade(low)
        return self


class IIRDeconvolver(_FilterDeconvolver):
    """Least-squares IIR inverse of a frequency response (stable by construction)."""

    def __init__(self, nb=4, na=2, delay=0, fs=1.0, max_iter=10, lowpass_order=64,
                 lowpass_cutoff=None, beta=8.0):
        self.nb = nb
        self.na = na
        self.delay = delay
        self.fs = fs
        self.max_iter = max_iter
        self.lowpass_order = lowpass_order
        self.lowpass_cutoff = lowpass_cutoff
        self.beta = beta

    def fit(self, H, y=None):
        flt, self.residual_, self.stabilized_ = lsiir(
            H, self.nb, self.na, self.delay, self.fs, self.max_iter
        )
        low = self._lowpass(self.fs)
        self.inverse_ = flt
        self.filter_ = flt if low is None else flt.cascade(low)
        return self


class DFTDeconvolver(BaseEstimator, TransformerMixin):
    """Frequency-domain deconvolution ``IDFT(X H_low / H)``.

    `fit` takes the system response as a SpectrumU on the DFT grid of the
    signals to be transformed.
    """

    def __init__(self, lowpass_order=64, lowpass_cutoff=None, beta=8.0,
                 mag_floor=DEFAULT_MAG_FLOOR):
        self.lowpass_order = lowpass_order
        self.lowpass_cutoff = lowpass_cutoff
        self.beta = beta
        self.mag_floor = mag_floor

    def fit(self, H, y=None):
        if not isinstance(H, SpectrumU):
            raise TypeError("H must be a SpectrumU")
        self.response_ = H
        return self

    def transform(self, x):
        check_is_fitted(self, "response_")
        H = self.response_
        Y = dft_deconv(gum_dft(x), H, self.mag_floor)
        if self.lowpass_cutoff:
            fs = 1.0 / x.ts
            low = kaiser_lowpass(self.lowpass_order, self.lowpass_cutoff, fs, self.beta)
            Hl = np.abs(low.response(H.freqs, fs)).astype(complex)
            Y = dft_multiply(Y, SpectrumU.from_complex(Hl, H.freqs, None, H.n))
        y = gum_idft(Y, x.n)
        return TimeSeriesU(y.values, x.ts, x.t0, y.unc)


class SavitzkyGolaySmoother(BaseEstimator, TransformerMixin):
    """Savitzky-Golay smoothing or differentiation of 1-D signals."""

    def __init__(self, window=21, polyorder=3, deriv=0, dt=1.0):
        self.window = window
        self.polyorder = polyorder
        self.deriv = deriv
        self.dt = dt

    def fit(self, x=None, y=None):
        return self

    def transform(self, x):
        if isinstance(x, TimeSeriesU):
            return x.replace(values=savgol(x.values, self.window, self.polyorder,
                                           self.deriv, x.ts), unc=None)
        return savgol(x, self.window, self.polyorder, self.deriv, self.dt)
