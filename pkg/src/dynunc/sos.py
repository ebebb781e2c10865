"""
Second-order system (damped resonator) sensor model.

The frequency response is ``S(w) = S0 w0^2 / (w0^2 + 2j w delta w0 - w^2)``
with static gain ``S0``, damping ``delta`` and resonance frequency
``f0 = w0 / (2 pi)``.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import as_vector, check_covariance, check_int, check_positive, frozen
from .core import AmpPhaseU, chol_psd
from .filter_design import FreqRespData
from .filter_unc import DigitalFilterU
from .mc import RunningStats, make_rng

__all__ = [
    "SosParams",
    "sos_freq_resp",
    "sos_phys2filter",
    "sos_mc_response",
    "fit_sos",
    "bilinear_discretize",
]


@dataclass(frozen=True, eq=False)
class SosParams:
    """Parameters ``(s0, delta, f0)`` and their 3x3 covariance."""

    s0: float
    delta: float
    f0: float
    cov: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "s0", float(self.s0))
        object.__setattr__(self, "delta", check_positive(self.delta, "delta"))
        object.__setattr__(self, "f0", check_positive(self.f0, "f0"))
        cov = np.zeros((3, 3)) if self.cov is None else self.cov
        cov = check_covariance(cov, 3, "cov")
        if np.linalg.eigvalsh(cov).min() < -1e-10 * max(np.trace(cov), np.finfo(float).tiny):
            raise ValueError("cov must be positive semi-definite")
        object.__setattr__(self, "cov", frozen(cov))

    @property
    def omega0(self):
        return 2 * np.pi * self.f0

    @property
    def vector(self):
        return np.array([self.s0, self.delta, self.f0])

    def std(self):
        return np.sqrt(np.diag(self.cov))


def _resp(s0, delta, f0, freqs):
    # broadcasts over parameter arrays of shape (k, 1)
    w = 2 * np.pi * freqs
    w0 = 2 * np.pi * f0
    return s0 * w0**2 / (w0**2 + 2j * w * delta * w0 - w**2)


def sos_freq_resp(p, freqs):
    """Complex response of the second-order system at `freqs` (Hz)."""
    freqs = np.asarray(freqs, dtype=float)
    if np.any(freqs < 0):
        raise ValueError("freqs must be non-negative")
    return _resp(p.s0, p.delta, p.f0, freqs)


def sos_phys2filter(p):
    """Continuous-time transfer function ``(num, den)`` in powers of s."""
    w0 = p.omega0
    return np.array([p.s0 * w0**2]), np.array([1.0, 2 * p.delta * w0, w0**2])


def sos_mc_response(p, freqs, draws=2000, form="reim", seed=None, chunk=1000):
    """Monte Carlo propagation of parameter uncertainty to the response.

    Draws with ``delta <= 0`` or ``f0 <= 0`` are rejected and replaced.

    Parameters
    ----------
    p : SosParams
    freqs : array_like
        Frequencies in Hz, strictly increasing.
    draws : int
        Number of accepted draws, at least 100.
    form : {"reim", "ampphase"}
        Return a :class:`FreqRespData` over stacked real/imaginary parts
        or an :class:`AmpPhaseU` over stacked amplitude/phase.

    Returns
    -------
    FreqRespData or AmpPhaseU
        Mean response and full covariance of the stacked components.
    """
    freqs = as_vector(freqs, "freqs")
    draws = check_int(draws, "draws", minimum=100)
    if form not in ("reim", "ampphase"):
        raise ValueError("form must be 'reim' or 'ampphase'")
    rng = make_rng(seed)
    L = chol_psd(p.cov)
    m = freqs.size
    stats = RunningStats(2 * m, full_cov=True)
    accepted = rejected = 0
    ref_phase = np.unwrap(np.angle(sos_freq_resp(p, freqs)))
    while accepted < draws:
        k = min(chunk, draws - accepted)
        theta = p.vector + rng.standard_normal((k, 3)) @ L.T
        ok = (theta[:, 1] > 0) & (theta[:, 2] > 0)
        rejected += int(np.count_nonzero(~ok))
        if rejected > 0.5 * (accepted + rejected + k):
            raise RuntimeError(
                f"{rejected} draws rejected for non-positive damping or resonance "
                "frequency; parameter uncertainty is too large"
            )
        theta = theta[ok]
        S = _resp(theta[:, :1], theta[:, 1:2], theta[:, 2:3], freqs)
        if form == "reim":
            stats.update_batch(np.hstack([S.real, S.imag]))
        else:
            phase = np.angle(S)
            # keep every draw on the branch of the nominal phase
            phase = phase + 2 * np.pi * np.round((ref_phase - phase) / (2 * np.pi))
            stats.update_batch(np.hstack([np.abs(S), phase]))
        accepted += theta.shape[0]
    mean, cov = stats.mean, stats.cov()
    if form == "reim":
        return FreqRespData(freqs, mean[:m] + 1j * mean[m:], cov)
    return AmpPhaseU(mean[:m], mean[m:], freqs, cov)


def _sos_design(freqs, K, weights):
    w = 2 * np.pi * freqs
    # K = c1 + c2 jw - c3 w^2; real rows: c1 - c3 w^2, imaginary rows: c2 w
    A = np.zeros((2 * freqs.size, 3))
    A[: freqs.size, 0] = 1.0
    A[: freqs.size, 2] = -(w**2)
    A[freqs.size :, 1] = w
    rhs = np.r_[K.real, K.imag]
    sw = np.sqrt(weights)
    A = A * sw[:, None]
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0):
        raise np.linalg.LinAlgError("singular design: frequencies do not determine all coefficients")
    return A / scale, rhs * sw, scale


def _coeffs_to_params(c):
    c1, c2, c3 = c[..., 0], c[..., 1], c[..., 2]
    w0 = np.sqrt(c1 / c3)
    return np.stack([1.0 / c1, c2 * w0 / (2 * c1), w0 / (2 * np.pi)], axis=-1)


def fit_sos(freqs, S, US=None, weighting=False, draws=2000, seed=None):
    """Identify second-order system parameters from a frequency response.

    The reciprocal ``K = 1/S = c1 + c2 jw - c3 w^2`` is linear in
    ``c = (1/S0, 2 delta / (S0 w0), 1 / (S0 w0^2))`` and is solved by
    least squares on the stacked real and imaginary parts.

    Parameters
    ----------
    freqs : array_like
        At least three distinct frequencies in Hz.
    S : array_like of complex
        Measured response.
    US : array_like, optional
        Covariance of the stacked (real, imaginary) parts of `S`. If
        given, the parameter covariance is estimated by refitting on
        `draws` Monte Carlo draws of `S`.
    weighting : bool
        Weight the equations by the inverse variances of ``Re K`` and
        ``Im K`` (requires `US`).

    Returns
    -------
    SosParams
    """
    freqs = as_vector(freqs, "freqs")
    S = np.asarray(S, dtype=complex).ravel()
    if S.size != freqs.size:
        raise ValueError("S and freqs must have equal length")
    if np.unique(freqs).size < 3:
        raise ValueError("at least three distinct frequencies are required")
    if np.any(S == 0):
        raise ValueError("S must be non-zero at every frequency")
    m = freqs.size
    if US is not None:
        US = check_covariance(US, 2 * m, "US")
    K = 1.0 / S
    weights = np.ones(2 * m)
    if weighting:
        if US is None:
            raise ValueError("weighting requires US")
        # Jacobian of 1/S w.r.t. (Re S, Im S) is the analytic factor -1/S^2
        g = -(K**2)
        p, q, r, s = g.real, -g.imag, g.imag, g.real
        Urr, Uri, Uii = US[:m, :m].diagonal(), US[:m, m:].diagonal(), US[m:, m:].diagonal()
        var_re = p**2 * Urr + 2 * p * q * Uri + q**2 * Uii
        var_im = r**2 * Urr + 2 * r * s * Uri + s**2 * Uii
        var = np.r_[var_re, var_im]
        # imaginary rows at w = 0 carry no information
        var[var <= 0] = np.inf
        weights = 1.0 / var
        weights[~np.isfinite(weights)] = 0.0
        weights = weights / weights[weights > 0].max()
    A, rhs, scale = _sos_design(freqs, K, weights)
    if np.linalg.matrix_rank(A) < 3:
        raise np.linalg.LinAlgError("singular design: frequencies do not determine all coefficients")
    pinv = np.linalg.pinv(A)
    c = (pinv @ rhs) / scale
    if c[0] <= 0 or c[2] <= 0:
        raise ValueError(
            f"fit gives non-physical coefficients c1={c[0]:.3g}, c3={c[2]:.3g}; "
            "the data are not described by a second-order system"
        )
    est = _coeffs_to_params(c)
    cov = None
    if US is not None and np.any(US):
        draws = check_int(draws, "draws", minimum=100)
        rng = make_rng(seed)
        L = chol_psd(US)
        R = np.r_[S.real, S.imag] + rng.standard_normal((draws, 2 * m)) @ L.T
        Kd = 1.0 / (R[:, :m] + 1j * R[:, m:])
        Cd = (np.hstack([Kd.real, Kd.imag]) * np.sqrt(weights)) @ pinv.T / scale
        ok = (Cd[:, 0] > 0) & (Cd[:, 2] > 0)
        if np.count_nonzero(ok) < 0.5 * draws:
            raise RuntimeError("most refits are non-physical; response uncertainty is too large")
        stats = RunningStats(3, full_cov=True).update_batch(_coeffs_to_params(Cd[ok]))
        cov = stats.cov()
    return SosParams(est[0], est[1], est[2], cov)


def bilinear_discretize(num, den, fs, prewarp_f=None):
    """Discretize a continuous transfer function by the bilinear transform.

    Substitutes ``s = K (1 - z^-1) / (1 + z^-1)`` with ``K = 2 fs``, or
    ``K = w_p / tan(w_p / (2 fs))`` when prewarping at ``prewarp_f`` so
    that the discrete response equals the continuous one there.

    Parameters
    ----------
    num, den : array_like
        Polynomial coefficients in descending powers of s.

    Returns
    -------
    DigitalFilterU
        Normalized so that ``a[0] = 1``.
    """
    num = np.trim_zeros(np.atleast_1d(np.asarray(num, dtype=float)), "f")
    den = np.trim_zeros(np.atleast_1d(np.asarray(den, dtype=float)), "f")
    if den.size == 0:
        raise ValueError("denominator must not be zero")
    if num.size == 0:
        num = np.zeros(1)
    fs = check_positive(fs, "fs")
    if num.size > den.size:
        raise ValueError("numerator degree exceeds denominator degree")
    if prewarp_f is None:
        K = 2 * fs
    else:
        prewarp_f = check_positive(prewarp_f, "prewarp_f")
        if prewarp_f >= fs / 2:
            raise ValueError("prewarp_f must lie below fs/2")
        wp = 2 * np.pi * prewarp_f
        K = wp / np.tan(wp / (2 * fs))
    n = den.size - 1
    minus = np.array([1.0, -1.0])  # 1 - z^-1
    plus = np.array([1.0, 1.0])  # 1 + z^-1

    def substitute(poly):
        # sum_i c_i s^(deg - i) -> multiply through by (1 + z^-1)^n
        out = np.zeros(n + 1)
        deg = poly.size - 1
        for i, c in enumerate(poly):
            p = deg - i
            term = np.polynomial.polynomial.polypow(minus, p) if p else np.ones(1)
            term = np.convolve(term, np.polynomial.polynomial.polypow(plus, n - p))
            out += c * K**p * term
        return out

    b = substitute(num)
    a = substitute(den)
    if a[0] == 0 or not np.isfinite(a[0]):
        raise ValueError("degenerate denominator after substitution")
    return DigitalFilterU(b / a[0], a / a[0])
