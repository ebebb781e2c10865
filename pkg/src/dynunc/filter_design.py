"""
Least-squares design of deconvolution filters and DSP utilities.

Deconvolution filters approximate the delayed reciprocal of a
calibrated frequency response, ``exp(-j w n0 / fs) / H(j w)``, in a
least-squares sense. High-frequency attenuation is added by cascading a
Kaiser-windowed low-pass filter. Coefficient uncertainties of designed
filters are obtained by Monte Carlo over draws of the frequency
response, refitting for every draw.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from ._validation import as_vector, check_covariance, check_int, check_positive, frozen
from .core import chol_psd
from .filter_unc import DigitalFilterU
from .mc import RunningStats, make_rng

__all__ = [
    "FreqRespData",
    "lsfir",
    "lsiir",
    "kaiser_lowpass",
    "group_delay",
    "isstable",
    "savgol",
    "savgol_coeffs",
    "design_target",
    "product_weights",
    "inverse_variance_weights",
    "passband_error",
]


@dataclass(frozen=True, eq=False)
class FreqRespData:
    """Complex frequency response on a strictly increasing grid (Hz).

    ``cov`` is the covariance of the stacked (real, imaginary) parts or
    ``None`` for exactly known values.
    """

    freqs: np.ndarray
    values: np.ndarray
    cov: np.ndarray = None
    fs: float = None

    def __post_init__(self):
        freqs = as_vector(self.freqs, "freqs")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("freqs must be strictly increasing")
        values = np.array(self.values, dtype=complex).ravel()
        if values.size != freqs.size:
            raise ValueError("values and freqs must have equal length")
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain non-finite entries")
        cov = None
        if self.cov is not None:
            cov = frozen(check_covariance(self.cov, 2 * freqs.size, "cov"))
        fs = self.fs
        if fs is not None:
            fs = check_positive(fs, "fs")
            if freqs[0] < 0 or freqs[-1] > fs / 2 * (1 + 1e-12):
                raise ValueError("freqs must lie within [0, fs/2]")
        object.__setattr__(self, "freqs", frozen(freqs))
        object.__setattr__(self, "values", frozen(values))
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "fs", fs)

    @classmethod
    def from_spectrum(cls, F, fs=None):
        return cls(F.freqs, F.values, F.cov if np.any(F.cov) else None, fs)

    @property
    def reim(self):
        return np.r_[self.values.real, self.values.imag]

    def draws(self, k, rng):
        """`k` random responses drawn from ``N(values, cov)``, shape (k, M)."""
        if self.cov is None:
            return np.tile(self.values, (k, 1))
        L = chol_psd(self.cov)
        R = self.reim + rng.standard_normal((k, 2 * self.freqs.size)) @ L.T
        m = self.freqs.size
        return R[:, :m] + 1j * R[:, m:]


def design_target(H, delay_n0, fs, inv=True):
    """Delayed reciprocal (or delayed copy) of a frequency response."""
    values = H.values if isinstance(H, FreqRespData) else np.asarray(H, dtype=complex)
    freqs = H.freqs if isinstance(H, FreqRespData) else None
    delay = np.exp(-2j * np.pi * freqs * delay_n0 / fs)
    if inv:
        if np.any(values == 0):
            raise ValueError("cannot invert a response with zero bins")
        return delay / values
    return delay * values


def _fir_design_matrix(freqs, order, fs, weights):
    w = 2 * np.pi * freqs / fs
    E = np.exp(-1j * np.outer(w, np.arange(order + 1)))
    A = np.vstack([E.real, E.imag])
    sw = np.sqrt(np.r_[weights, weights])
    return A, sw


def _check_weights(weights, m):
    if weights is None:
        return np.ones(m)
    if isinstance(weights, str):
        raise ValueError("weights must be an array or None")
    weights = as_vector(weights, "weights")
    if weights.size != m or np.any(weights < 0):
        raise ValueError("weights must be non-negative with one entry per frequency")
    return weights


def inverse_variance_weights(H):
    """Per-frequency weights ``1 / (var(Re H) + var(Im H))``."""
    if H.cov is None:
        return np.ones(H.freqs.size)
    m = H.freqs.size
    v = np.diag(H.cov)
    tot = v[:m] + v[m:]
    if np.any(tot <= 0):
        raise ValueError("inverse-variance weights need positive variances")
    return 1.0 / tot


def product_weights(H):
    """Per-frequency weights ``|H|^2``.

    With these weights the inverse-design objective ``sum |F - T|^2``
    becomes the deviation of the compensated response,
    ``sum |H F - exp(-j w n0 / fs)|^2``.
    """
    return np.abs(H.values) ** 2


def lsfir(
    H,
    order,
    delay_n0,
    fs,
    weights=None,
    inv=True,
    mc_draws=None,
    seed=None,
    residual_warn=1e-2,
):
    """Least-squares FIR fit to a delayed (inverse) frequency response.

    Fits ``F(e^{j w / fs}) = sum_n b_n exp(-j w n / fs)`` to
    ``exp(-j w n0 / fs) / H(j w)`` (``inv=True``) or to
    ``exp(-j w n0 / fs) H(j w)`` using the stacked real and imaginary
    equations.

    Parameters
    ----------
    H : FreqRespData
        Frequency response, optionally with covariance.
    order : int
        Filter order ``Nb`` (``Nb + 1`` coefficients).
    delay_n0 : int
        Delay in samples.
    fs : float
        Sampling rate in Hz.
    weights : array_like, optional
        Non-negative per-frequency weights (default uniform). See
        :func:`product_weights` and :func:`inverse_variance_weights`.
    mc_draws : int, optional
        If given and `H` has a covariance, the coefficient covariance is
        estimated from this many refits on draws of `H`.

    Returns
    -------
    DigitalFilterU
        FIR filter with ``delay_n0`` attached.
    """
    if not isinstance(H, FreqRespData):
        raise TypeError("H must be FreqRespData")
    order = check_int(order, "order", minimum=1)
    delay_n0 = check_int(delay_n0, "delay_n0", minimum=0)
    fs = check_positive(fs, "fs")
    m = H.freqs.size
    if 2 * (order + 1) > 2 * m:
        raise ValueError(
            f"{order + 1} coefficients but only {m} frequencies; reduce the order"
        )
    weights = _check_weights(weights, m)
    A, sw = _fir_design_matrix(H.freqs, order, fs, weights)
    Aw = A * sw[:, None]
    sv = np.linalg.svd(Aw, compute_uv=False)
    if sv[-1] <= sv[0] * max(Aw.shape) * np.finfo(float).eps:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    pinv = np.linalg.pinv(Aw)

    def solve(target):
        return pinv @ (np.r_[target.real, target.imag] * sw)

    target = design_target(H, delay_n0, fs, inv)
    b = solve(target)
    rel = np.linalg.norm(Aw @ b - np.r_[target.real, target.imag] * sw) / max(
        np.linalg.norm(np.r_[target.real, target.imag] * sw), np.finfo(float).tiny
    )
    if rel > residual_warn:
        warnings.warn(
            f"relative LS residual {rel:.2e}; consider a larger delay or order",
            RuntimeWarning,
            stacklevel=2,
        )
    Ub = None
    if mc_draws is not None and H.cov is not None:
        mc_draws = check_int(mc_draws, "mc_draws", minimum=2)
        rng = make_rng(seed)
        delay = np.exp(-2j * np.pi * H.freqs * delay_n0 / fs)
        stats = RunningStats(order + 1, full_cov=True)
        step = 500
        for start in range(0, mc_draws, step):
            k = min(step, mc_draws - start)
            Hd = H.draws(k, rng)
            T = delay / Hd if inv else delay * Hd
            rhs = np.hstack([T.real, T.imag]) * sw
            stats.update_batch(rhs @ pinv.T)
        Ub = stats.cov()
    return DigitalFilterU(b, [1.0], Ub, delay_n0)


def _fit_iir_equation_error(freqs, target, nb, na, fs, weights):
    """Linearized fit of ``B(z) - T A(z) = 0`` with ``a_0 = 1``."""
    w = 2 * np.pi * freqs / fs
    Eb = np.exp(-1j * np.outer(w, np.arange(nb + 1)))
    Ea = np.exp(-1j * np.outer(w, np.arange(1, na + 1)))
    M = np.hstack([Eb, -target[:, None] * Ea])
    A = np.vstack([M.real, M.imag])
    rhs = np.r_[target.real, target.imag]
    sw = np.sqrt(np.r_[weights, weights])
    sol, *_ = np.linalg.lstsq(A * sw[:, None], rhs * sw, rcond=None)
    return sol[: nb + 1], np.r_[1.0, sol[nb + 1 :]]


def _fit_numerator(freqs, target, a, nb, fs, weights):
    """Output-error LS for ``b`` with the denominator held fixed."""
    w = 2 * np.pi * freqs / fs
    Ea = np.exp(-1j * np.outer(w, np.arange(a.size))) @ a
    Eb = np.exp(-1j * np.outer(w, np.arange(nb + 1))) / Ea[:, None]
    A = np.vstack([Eb.real, Eb.imag])
    rhs = np.r_[target.real, target.imag]
    sw = np.sqrt(np.r_[weights, weights])
    b, *_ = np.linalg.lstsq(A * sw[:, None], rhs * sw, rcond=None)
    return b


def _reflect_poles(a, max_radius=1 - 1e-6):
    """Replace poles outside (or on) the unit circle by 1 / conj(p)."""
    p = np.roots(a)
    r = np.abs(p)
    out = r >= 1
    if not np.any(out):
        return a, False
    p = p.copy()
    p[out] = 1.0 / np.conj(p[out])
    # poles on the unit circle do not move under reflection
    r = np.abs(p)
    edge = r >= max_radius
    p[edge] = p[edge] / r[edge] * max_radius
    anew = np.real_if_close(np.poly(p), tol=1e6)
    return np.real(anew), True


def _iir_residual(freqs, target, b, a, fs, weights):
    w = 2 * np.pi * freqs / fs
    F = (np.exp(-1j * np.outer(w, np.arange(b.size))) @ b) / (
        np.exp(-1j * np.outer(w, np.arange(a.size))) @ a
    )
    return float(np.sqrt(np.sum(weights * np.abs(F - target) ** 2) / np.sum(weights)))


def lsiir(H, nb, na, delay_n0, fs, max_iter=10, inv=True, weights=None):
    """Least-squares IIR fit to a delayed (inverse) frequency response.

    The equation-error problem ``B - T A = 0`` is solved by linear least
    squares and iterated with weights ``1 / |A_prev|^2`` (Steiglitz-McBride
    style) to approach the output error. Poles on or outside the unit
    circle are reflected to ``1 / conj(p)``, after which the numerator is
    refit with the denominator fixed.

    Returns
    -------
    flt : DigitalFilterU
        Stable filter (``isstable(flt)`` holds).
    residual : float
        Weighted RMS deviation ``|F - T|`` on the design grid.
    stabilized : bool
        True if any pole had to be reflected.
    """
    if not isinstance(H, FreqRespData):
        raise TypeError("H must be FreqRespData")
    nb = check_int(nb, "nb", minimum=0)
    na = check_int(na, "na", minimum=1)
    delay_n0 = check_int(delay_n0, "delay_n0", minimum=0)
    fs = check_positive(fs, "fs")
    max_iter = check_int(max_iter, "max_iter", minimum=1)
    if nb + na + 1 > 2 * H.freqs.size:
        raise ValueError("not enough frequencies for the requested orders")
    base_w = _check_weights(weights, H.freqs.size)
    target = design_target(H, delay_n0, fs, inv)
    w_rad = 2 * np.pi * H.freqs / fs
    Ea = np.exp(-1j * np.outer(w_rad, np.arange(na + 1)))

    best = None
    stabilized = False
    a_prev = None
    for _ in range(max_iter):
        wts = base_w if a_prev is None else base_w / np.abs(Ea @ a_prev) ** 2
        b, a = _fit_iir_equation_error(H.freqs, target, nb, na, fs, wts)
        a, moved = _reflect_poles(a)
        if moved:
            stabilized = True
            b = _fit_numerator(H.freqs, target, a, nb, fs, base_w)
        res = _iir_residual(H.freqs, target, b, a, fs, base_w)
        if best is None or res < best[2] * (1 - 1e-12):
            best = (b, a, res)
        elif a_prev is not None and np.allclose(a, a_prev, rtol=1e-10, atol=1e-13):
            break
        a_prev = a
    b, a, res = best
    flt = DigitalFilterU(b, a, None, delay_n0)
    assert flt.is_stable()
    return flt, res, stabilized


def passband_error(H, flt, fs, f_max, inv=True):
    """Maximum of ``|H F - exp(-j w n0 / fs)|`` over ``freqs <= f_max``.

    With ``inv=False`` the deviation ``|F - H exp(-j w n0 / fs)|`` is
    returned instead.
    """
    sel = H.freqs <= f_max
    f = H.freqs[sel]
    F = flt.response(f, fs)
    delay = np.exp(-2j * np.pi * f * flt.delay_n0 / fs)
    if inv:
        dev = H.values[sel] * F - delay
    else:
        dev = F - H.values[sel] * delay
    return float(np.max(np.abs(dev)))


def kaiser_lowpass(order, cutoff, fs, beta=8.0):
    """Linear-phase FIR low-pass filter (windowed sinc, Kaiser window).

    Coefficients are normalized to unit DC gain; the filter delay
    ``order / 2`` is attached as ``delay_n0``.
    """
    order = check_int(order, "order", minimum=2)
    if order % 2:
        raise ValueError("order must be even for an integer delay")
    fs = check_positive(fs, "fs")
    cutoff = check_positive(cutoff, "cutoff")
    if cutoff >= fs / 2:
        raise ValueError("cutoff must lie in (0, fs/2)")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    fc = cutoff / fs
    n = np.arange(order + 1) - order / 2
    h = 2 * fc * np.sinc(2 * fc * n) * np.kaiser(order + 1, beta)
    h /= h.sum()
    return DigitalFilterU(h, [1.0], None, order // 2)


def _ramped_ratio(c, zinv):
    num = zinv[:, : c.size] @ (np.arange(c.size) * c)
    den = zinv[:, : c.size] @ c
    return num, den


def group_delay(flt, freqs, fs):
    """Group delay in samples, ``-d(phase)/d(omega)``.

    Uses ``Re{DFT(n c) / DFT(c)}`` for numerator and denominator.

    Raises
    ------
    ValueError
        If the numerator or denominator response vanishes at a requested
        frequency.
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    fs = check_positive(fs, "fs")
    w = 2 * np.pi * freqs / fs
    L = max(flt.b.size, flt.a.size)
    zinv = np.exp(-1j * np.outer(w, np.arange(L)))
    nb_, db_ = _ramped_ratio(flt.b, zinv)
    na_, da_ = _ramped_ratio(flt.a, zinv)
    tiny = 1e3 * np.finfo(float).eps
    if np.any(np.abs(db_) <= tiny * np.abs(flt.b).sum()) or np.any(
        np.abs(da_) <= tiny * np.abs(flt.a).sum()
    ):
        raise ValueError("filter response is zero at a requested frequency")
    return np.real(nb_ / db_) - np.real(na_ / da_)


def isstable(flt):
    """True iff all poles lie strictly inside the unit circle."""
    return flt.is_stable()


def savgol_coeffs(window, polyorder, deriv=0, dt=1.0, pos=None):
    """Coefficients evaluating the local LS polynomial (derivative) at `pos`.

    Returned in "dot" order: ``value = coeffs @ x[window]``.
    """
    if pos is None:
        pos = window // 2
    t = np.arange(window) - pos
    V = np.vander(t, polyorder + 1, increasing=True)
    P = np.linalg.pinv(V)
    fact = np.prod(np.arange(1, deriv + 1)) if deriv else 1.0
    return P[deriv] * fact / dt**deriv


def savgol(x, window, polyorder, deriv=0, dt=1.0):
    """Savitzky-Golay smoothing or differentiation.

    Interior samples use the centred local least-squares polynomial; the
    first and last ``window // 2`` samples are evaluated from the
    polynomial fitted to the first or last full window.
    """
    x = as_vector(x, "x")
    window = check_int(window, "window", minimum=1)
    polyorder = check_int(polyorder, "polyorder", minimum=0)
    deriv = check_int(deriv, "deriv", minimum=0)
    if window % 2 == 0:
        raise ValueError("window must be odd")
    if polyorder >= window:
        raise ValueError("polyorder must be less than window")
    if deriv > polyorder:
        raise ValueError("deriv must not exceed polyorder")
    dt = check_positive(dt, "dt")
    if x.size < window:
        raise ValueError("signal is shorter than the window")
    half = window // 2
    c = savgol_coeffs(window, polyorder, deriv, dt)
    y = np.convolve(x, c[::-1], mode="same")
    y[half:-half or None] = np.convolve(x, c[::-1], mode="valid")
    for i in range(half):
        y[i] = savgol_coeffs(window, polyorder, deriv, dt, pos=i) @ x[:window]
        j = x.size - half + i
        y[j] = savgol_coeffs(window, polyorder, deriv, dt, pos=half + 1 + i) @ x[-window:]
    return y
