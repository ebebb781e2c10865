"""
Digital filters as measurement models.

A filter is applied with zero initial conditions,

    y[n] = sum_k b_k x[n-k] - sum_{k>=1} a_k y[n-k],

and the uncertainty of the output is evaluated in closed form for FIR
filters, by a state-space recursion for IIR filters with exact
coefficients, or by sequential Monte Carlo (``smc_filter``) for the
general case.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np
from scipy.signal import lfilter

from ._validation import as_vector, check_covariance, check_int, frozen
from .core import (
    LinearModel,
    SpectrumU,
    StateSpace,
    TimeSeriesU,
    chol_psd,
    linear_propagate,
)
from .dft_unc import gum_dft
from .mc import RunningStats, make_rng, spawn_seeds

__all__ = [
    "DigitalFilterU",
    "DeconvResult",
    "fir_unc_filter",
    "iir_ss_filter",
    "filter_state_space",
    "smc_filter",
    "dynamic_error_bound",
    "deconvolve",
    "transient_length",
    "UnstableFilterError",
]


class UnstableFilterError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DigitalFilterU:
    """Digital filter ``b(z) / a(z)`` with uncertain coefficients.

    Parameters
    ----------
    b : array_like
        Numerator coefficients ``b_0 .. b_Nb``.
    a : array_like
        Denominator coefficients with ``a[0] == 1``; ``(1,)`` for FIR.
    Uba : array_like, optional
        Joint covariance of ``b`` followed by ``a[1:]``.
    delay_n0 : int
        Nominal delay of the filter in samples.
    """

    b: np.ndarray
    a: np.ndarray = (1.0,)
    Uba: np.ndarray = None
    delay_n0: int = 0

    def __post_init__(self):
        b = as_vector(self.b, "b")
        a = as_vector(self.a, "a")
        if a[0] != 1.0:
            raise ValueError("a[0] must be exactly 1; use DigitalFilterU.normalized")
        k = b.size + a.size - 1
        Uba = np.zeros((k, k)) if self.Uba is None else check_covariance(self.Uba, k, "Uba")
        object.__setattr__(self, "b", frozen(b))
        object.__setattr__(self, "a", frozen(a))
        object.__setattr__(self, "Uba", frozen(Uba))
        object.__setattr__(self, "delay_n0", check_int(self.delay_n0, "delay_n0", minimum=0))

    @classmethod
    def normalized(cls, b, a, delay_n0=0):
        """Exact filter with ``a`` scaled so that ``a[0] == 1``."""
        b = as_vector(b, "b")
        a = as_vector(a, "a")
        if a[0] == 0:
            raise ValueError("a[0] must be nonzero")
        return cls(b / a[0], a / a[0], None, delay_n0)

    @property
    def nb(self):
        return self.b.size - 1

    @property
    def na(self):
        return self.a.size - 1

    @property
    def is_fir(self):
        return self.a.size == 1

    @property
    def theta(self):
        """Stacked parameter vector ``(b, a[1:])``."""
        return np.r_[self.b, self.a[1:]]

    @property
    def Ub(self):
        return self.Uba[: self.b.size, : self.b.size]

    @property
    def has_coefficient_uncertainty(self):
        return bool(np.any(self.Uba))

    def response(self, freqs, fs):
        """Complex frequency response at `freqs` (Hz) for sampling rate `fs`."""
        w = 2 * np.pi * np.asarray(freqs, dtype=float) / fs
        zinv = np.exp(-1j * np.outer(w, np.arange(max(self.b.size, self.a.size))))
        num = zinv[:, : self.b.size] @ self.b
        den = zinv[:, : self.a.size] @ self.a
        return num / den

    def poles(self):
        if self.is_fir:
            return np.array([], dtype=complex)
        return np.roots(self.a)

    def is_stable(self):
        p = self.poles()
        return bool(p.size == 0 or np.max(np.abs(p)) < 1.0)

    def cascade(self, other):
        """Series connection; coefficient covariance propagated to first order."""
        b = np.convolve(self.b, other.b)
        a = np.convolve(self.a, other.a)
        J1 = _cascade_jacobian(self, other)
        J2 = _cascade_jacobian(other, self)
        U = np.zeros((b.size + a.size - 1,) * 2)
        if self.has_coefficient_uncertainty:
            U = U + linear_propagate(LinearModel(J1), self.theta, self.Uba)[1]
        if other.has_coefficient_uncertainty:
            U = U + linear_propagate(LinearModel(J2), other.theta, other.Uba)[1]
        return DigitalFilterU(b, a, U, self.delay_n0 + other.delay_n0)


def _conv_matrix(h, n):
    """Matrix C with ``C @ v == np.convolve(h, v)`` for len(v) == n."""
    C = np.zeros((h.size + n - 1, n))
    for j in range(n):
        C[j : j + h.size, j] = h
    return C


def _cascade_jacobian(f, g):
    """d(theta of f*g) / d(theta of f)."""
    nb = f.b.size + g.b.size - 1
    na = f.a.size + g.a.size - 2
    J = np.zeros((nb + na, f.theta.size))
    J[:nb, : f.b.size] = _conv_matrix(g.b, f.b.size)
    if f.na:
        Ja = _conv_matrix(g.a, f.a.size)
        J[nb:, f.b.size :] = Ja[1:, 1:]
    return J


@dataclass(frozen=True, eq=False)
class DeconvResult:
    """Estimate of the measurand and a bound on the dynamic error."""

    y: TimeSeriesU
    delta_bound: np.ndarray

    def __post_init__(self):
        bound = as_vector(self.delta_bound, "delta_bound")
        if np.any(bound < 0):
            raise ValueError("delta_bound must be >= 0")
        object.__setattr__(self, "delta_bound", frozen(bound))


def transient_length(flt):
    """Number of leading output samples affected by zero initial conditions.

    ``max(Nb, 3 * tau)`` with ``tau`` the time constant (in samples) of
    the slowest pole.
    """
    n = flt.nb
    p = flt.poles()
    if p.size:
        r = float(np.max(np.abs(p)))
        if r >= 1:
            raise UnstableFilterError("filter is unstable")
        if r > 0:
            n = max(n, math.ceil(-3.0 / math.log(r)))
    return int(n)


def _as_timeseries(x):
    if not isinstance(x, TimeSeriesU):
        raise TypeError("x must be a TimeSeriesU")
    return x


def fir_unc_filter(x, flt, second_order=True):
    """Apply an FIR filter with uncertain coefficients in closed form.

    The variance at sample ``n`` is ``r_n' Ux r_n + xt_n' Ub xt_n`` with
    ``r_n`` the coefficients aligned to the signal window and ``xt_n``
    the regressor of past inputs. With `second_order` the product term
    ``trace(Ub Ux_window)`` is added, which makes the result exact for
    independent normal inputs and coefficients.

    Parameters
    ----------
    x : TimeSeriesU
        Input signal; its uncertainty may be scalar, pointwise or full.
    flt : DigitalFilterU
        FIR filter (``a == (1,)``).

    Returns
    -------
    TimeSeriesU
        Filtered signal with pointwise standard uncertainties.
    """
    x = _as_timeseries(x)
    if not flt.is_fir:
        raise ValueError("fir_unc_filter requires an FIR filter (a == (1,))")
    b = flt.b
    N = x.n
    y = lfilter(b, [1.0], x.values)

    kind = x.unc_kind
    if kind == "full":
        Ux = x.cov()
        BU = lfilter(b, [1.0], Ux, axis=0)
        var = np.zeros(N)
        for k, bk in enumerate(b[:N]):
            rows = np.arange(k, N)
            var[k:] += bk * BU[rows, rows - k]
    else:
        varx = x.variance()
        var = lfilter(b**2, [1.0], varx)

    Ub = flt.Ub
    if np.any(Ub):
        L = b.size
        Xt = np.zeros((N, L))
        for k in range(min(L, N)):
            Xt[k:, k] = x.values[: N - k]
        var = var + np.einsum("nk,kl,nl->n", Xt, Ub, Xt)
        if second_order and kind != "none":
            if kind == "full":
                for k in range(min(L, N)):
                    for l in range(min(L, N)):
                        if Ub[k, l] == 0:
                            continue
                        s = max(k, l)
                        rows = np.arange(s, N)
                        var[s:] += Ub[k, l] * Ux[rows - k, rows - l]
            else:
                var = var + lfilter(np.diag(Ub), [1.0], varx)
    return TimeSeriesU(y, x.ts, x.t0, np.sqrt(np.clip(var, 0.0, None)))


def filter_state_space(flt):
    """Discrete state-space realization of ``b(z) / a(z)``.

    Returns matrices of the recursion ``z[n] = C z[n-1] + D x[n-1]``,
    ``y[n] = E z[n] + F x[n]`` (controllable canonical form).
    """
    L = max(flt.b.size, flt.a.size)
    b = np.zeros(L)
    a = np.zeros(L)
    b[: flt.b.size] = flt.b
    a[: flt.a.size] = flt.a
    n = L - 1
    C = np.zeros((n, n))
    if n:
        C[0, :] = -a[1:]
        C[1:, :-1] = np.eye(n - 1)
    D = np.zeros((n, 1))
    if n:
        D[0, 0] = 1.0
    E = (b[1:] - b[0] * a[1:]).reshape(1, n)
    F = np.array([[b[0]]])
    return StateSpace(C, D, E, F)


def iir_ss_filter(x, flt):
    """Apply an IIR filter with exact coefficients via its state-space form.

    The state covariance follows ``P[n] = C P[n-1] C' + D var(x[n-1]) D'``
    and ``u_y^2[n] = E P[n] E' + F^2 var(x[n])``.

    Raises
    ------
    UnstableFilterError
        If the denominator has a root on or outside the unit circle.
    ValueError
        If the coefficients are uncertain (use :func:`smc_filter`) or the
        input carries a full covariance matrix.
    """
    x = _as_timeseries(x)
    if flt.has_coefficient_uncertainty:
        raise ValueError(
            "iir_ss_filter handles input noise only; use smc_filter for "
            "uncertain filter coefficients"
        )
    if x.unc_kind == "full":
        raise ValueError("iir_ss_filter requires scalar or pointwise input noise")
    if not flt.is_stable():
        raise UnstableFilterError("filter is unstable")
    ss = filter_state_space(flt)
    C, D, E, F = ss.C, ss.D[:, 0], ss.E[0], ss.F[0, 0]
    xs = x.values
    varx = x.variance()
    N = x.n
    n = ss.order
    y = np.empty(N)
    vy = np.empty(N)
    z = np.zeros(n)
    P = np.zeros((n, n))
    x_prev = 0.0
    v_prev = 0.0
    for i in range(N):
        z = C @ z + D * x_prev
        P = C @ P @ C.T + np.outer(D, D) * v_prev
        y[i] = E @ z + F * xs[i]
        vy[i] = E @ P @ E + F * F * varx[i]
        x_prev = xs[i]
        v_prev = varx[i]
    return TimeSeriesU(y, x.ts, x.t0, np.sqrt(np.clip(vy, 0.0, None)))


def _draw_stable_theta(rng, flt, k, budget):
    """Draw `k` coefficient vectors, rejecting unstable denominators."""
    theta0 = flt.theta
    if not flt.has_coefficient_uncertainty:
        return np.tile(theta0, (k, 1)), 0
    L = chol_psd(flt.Uba)
    nb = flt.b.size
    accepted = []
    attempts = 0
    while sum(len(t) for t in accepted) < k:
        need = k - sum(len(t) for t in accepted)
        if attempts + need > budget:
            raise UnstableFilterError(
                "too many unstable coefficient draws; the coefficient "
                "covariance implies an unstable filter"
            )
        attempts += need
        th = theta0 + rng.standard_normal((need, theta0.size)) @ L.T
        if not flt.is_fir:
            ok = np.array(
                [DigitalFilterU(t[:nb], np.r_[1.0, t[nb:]]).is_stable() for t in th]
            )
            th = th[ok]
        accepted.append(th)
    return np.vstack(accepted)[:k], attempts - k


class _LockstepFilter:
    """`k` filter instances with private state advanced together."""

    def __init__(self, theta, nb):
        k = theta.shape[0]
        b = theta[:, :nb]
        a = np.hstack([np.ones((k, 1)), theta[:, nb:]])
        self.L = max(b.shape[1], a.shape[1])
        self.b = np.zeros((k, self.L))
        self.a = np.zeros((k, self.L))
        self.b[:, :nb] = b
        self.a[:, : a.shape[1]] = a
        self.fir = a.shape[1] == 1
        self.state = np.zeros((k, self.L - 1))

    def run(self, xb):
        """Filter a block `xb` of shape (k, B); returns (k, B)."""
        if self.L == 1:
            return self.b[:, :1] * xb
        if self.fir:
            # state holds the last L-1 inputs, most recent last
            ext = np.hstack([self.state, xb])
            B = xb.shape[1]
            y = np.zeros_like(xb)
            for j in range(self.L):
                y += self.b[:, j : j + 1] * ext[:, self.L - 1 - j : self.L - 1 - j + B]
            self.state = ext[:, B:]
            return y
        # transposed direct form II
        z = self.state
        b, a = self.b, self.a
        y = np.empty_like(xb)
        for i in range(xb.shape[1]):
            xi = xb[:, i : i + 1]
            yi = b[:, :1] * xi + z[:, :1]
            znew = np.empty_like(z)
            znew[:, :-1] = z[:, 1:] + b[:, 1:-1] * xi - a[:, 1:-1] * yi
            znew[:, -1:] = b[:, -1:] * xi - a[:, -1:] * yi
            z = znew
            y[:, i] = yi[:, 0]
        self.state = z
        return y


def _smc_chunk(xv, noise, flt, k, block, seed, budget):
    rng = make_rng(seed)
    theta, _ = _draw_stable_theta(rng, flt, k, budget)
    bank = _LockstepFilter(theta, flt.b.size)
    N = xv.size
    stats = RunningStats(N)
    mean = np.empty(N)
    m2 = np.empty(N)
    noisy = np.any(noise > 0)
    for start in range(0, N, block):
        stop = min(start + block, N)
        xb = np.broadcast_to(xv[start:stop], (k, stop - start))
        if noisy:
            # time-major draws keep the stream independent of the block size
            e = rng.standard_normal((stop - start, k)).T
            xb = xb + e * noise[start:stop]
        yb = bank.run(np.array(xb))
        shift = yb[0]
        mb = shift + (yb - shift).mean(axis=0)
        mean[start:stop] = mb
        d = yb - mb
        m2[start:stop] = np.einsum("ij,ij->j", d, d)
    stats.count = k
    stats.mean = mean
    stats.m2 = m2
    return stats


def smc_filter(
    x,
    noise_std,
    flt,
    draws=10000,
    block=512,
    seed=None,
    chunk=1000,
    ts=1.0,
    n_jobs=1,
):
    """Sequential Monte Carlo propagation through a digital filter.

    `draws` filter instances run in lockstep over the signal; only their
    states are kept, so memory scales with ``chunk * order + chunk *
    block`` and never with ``draws * len(x)``. Coefficient vectors are
    drawn from ``N(theta, Uba)``; unstable draws are rejected and
    redrawn (at most ``10 * draws`` attempts in total). Per-sample mean
    and variance are accumulated with a shifted two-pass reduction per
    chunk and Chan's pairwise merge across chunks, in chunk order.

    Parameters
    ----------
    x : array_like or TimeSeriesU
        Input signal estimate.
    noise_std : float or array_like
        Standard deviation of white input noise (scalar or per sample).
    flt : DigitalFilterU
    draws : int
        Number of Monte Carlo trials, at least 100.
    block : int
        Number of samples processed per step; does not change results.
    seed : int or None
    ts : float
        Sampling interval, used when `x` is a plain array.

    Returns
    -------
    TimeSeriesU
        Mean output and pointwise standard deviation.
    """
    t0 = 0.0
    if isinstance(x, TimeSeriesU):
        ts, t0, xv = x.ts, x.t0, np.array(x.values)
    else:
        xv = as_vector(x, "x")
    draws = check_int(draws, "draws", minimum=100)
    block = check_int(block, "block", minimum=1)
    chunk = check_int(chunk, "chunk", minimum=1)
    noise = np.broadcast_to(np.asarray(noise_std, dtype=float), xv.shape).copy()
    if np.any(noise < 0):
        raise ValueError("noise_std must be >= 0")
    if not flt.is_stable():
        raise UnstableFilterError("nominal filter is unstable")
    sizes = [chunk] * (draws // chunk)
    if draws % chunk:
        sizes.append(draws % chunk)
    seeds = spawn_seeds(seed, len(sizes))
    budgets = [10 * k for k in sizes]

    def work(args):
        k, s, bud = args
        return _smc_chunk(xv, noise, flt, k, block, s, bud)

    jobs = list(zip(sizes, seeds, budgets))
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]
    total = RunningStats(xv.size)
    for p in parts:
        total.merge(p)
    return TimeSeriesU(total.mean, ts, t0, total.std())


def _response_on_grid(H, freqs):
    if hasattr(H, "freqs") and hasattr(H, "values"):
        if H.freqs.size != freqs.size or not np.allclose(H.freqs, freqs, rtol=1e-9):
            raise ValueError("frequency grid of H does not match the spectrum")
        return np.asarray(H.values, dtype=complex)
    H = np.asarray(H, dtype=complex)
    if H.shape != freqs.shape:
        raise ValueError(f"H must have shape {freqs.shape}, got {H.shape}")
    return H


def dynamic_error_bound(flt, H, X, measurand=False, delay_n0=None):
    """Pointwise bound on the dynamic error of a deconvolution filter.

    With the residual response ``R = H F - exp(-j w n0 Ts)`` on the DFT
    grid of `X`, the error of the filter output relative to the delayed
    measurand has the spectrum ``R * Y``. The triangle inequality on its
    inverse DFT gives, for every sample,

        |Delta[n]| <= (1/N) sum_k w_k |R_k| |Y_k|

    with Hermitian weights ``w_k`` (1 at DC and Nyquist, else 2).

    Parameters
    ----------
    flt : DigitalFilterU or array_like
        Deconvolution filter, or its complex response on the grid of `X`
        (then `delay_n0` is required).
    H : array_like or object with ``freqs``/``values``
        System frequency response on the grid of `X`.
    X : SpectrumU
        Spectrum of the measured signal (or of the measurand if
        ``measurand=True``).
    measurand : bool
        If false, the measurand spectrum is estimated as ``X / H``.

    Returns
    -------
    ndarray
        Bound for every sample of the length-N signal (constant in time).
    """
    if not isinstance(X, SpectrumU):
        raise TypeError("X must be a SpectrumU")
    freqs = X.freqs
    n = X.n
    fs = n * freqs[1]
    Hv = _response_on_grid(H, freqs)
    if isinstance(flt, DigitalFilterU):
        F = flt.response(freqs, fs)
        n0 = flt.delay_n0 if delay_n0 is None else delay_n0
    else:
        if delay_n0 is None:
            raise ValueError("delay_n0 is required when a response array is given")
        F = _response_on_grid(flt, freqs)
        n0 = delay_n0
    R = Hv * F - np.exp(-2j * np.pi * freqs * n0 / fs)
    Y = np.abs(X.values)
    if not measurand:
        if np.any(Hv == 0):
            raise ValueError("H has zero bins; pass the measurand spectrum instead")
        Y = Y / np.abs(Hv)
    w = np.full(X.m, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return np.full(n, np.sum(w * np.abs(R) * Y) / n)


def deconvolve(x, flt, H=None):
    """Apply a deconvolution filter and bound its dynamic error.

    FIR filters use :func:`fir_unc_filter`; IIR filters with exact
    coefficients use :func:`iir_ss_filter`. When the system response
    `H` on the DFT grid of `x` is given, the bound of
    :func:`dynamic_error_bound` is attached, otherwise it is zero.
    """
    if flt.is_fir:
        y = fir_unc_filter(x, flt)
    else:
        y = iir_ss_filter(x, flt)
    if H is None:
        bound = np.zeros(x.n)
    else:
        X = gum_dft(x.replace(unc=None))
        bound = dynamic_error_bound(flt, H, X)
    return DeconvResult(y, bound)
