"""
Discrete Fourier transform and frequency-domain arithmetic with
propagation of the full covariance.

Conventions: the forward transform is un-normalized,
``X_k = sum_n x_n exp(-2j pi k n / N)``, the inverse carries ``1/N``.
Spectra are half-spectra of real signals, stored as stacked real and
imaginary parts (see :class:`~dynunc.core.SpectrumU`).

Products and quotients assume the two operands are statistically
independent.
"""

import numpy as np

from ._validation import check_int
from .core import AmpPhaseU, SpectrumU, TimeSeriesU, symmetrize

__all__ = [
    "DeconvolutionError",
    "dft_matrix",
    "idft_matrix",
    "gum_dft",
    "gum_idft",
    "dft_multiply",
    "dft_deconv",
    "dft_transferfunction",
    "amp_phase_to_dft",
    "dft_to_amp_phase",
]

DEFAULT_MAG_FLOOR = 1e-6


class DeconvolutionError(ValueError):
    """Division by a response whose magnitude is below the floor."""

    def __init__(self, message, bins):
        super().__init__(message)
        self.bins = np.asarray(bins)


def dft_matrix(n):
    """Sensitivity matrix (2M x N) mapping a real signal to stacked Re/Im."""
    n = check_int(n, "n", minimum=2)
    m = n // 2 + 1
    k = np.arange(m)[:, None]
    arg = 2 * np.pi * ((k * np.arange(n)[None, :]) % n) / n
    J = np.vstack([np.cos(arg), -np.sin(arg)])
    J[m] = 0.0
    if n % 2 == 0:
        J[2 * m - 1] = 0.0
    return J


def _hermitian_weights(n, m):
    w = np.full(m, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def idft_matrix(n):
    """Sensitivity matrix (N x 2M) mapping stacked Re/Im back to the signal."""
    n = check_int(n, "n", minimum=2)
    m = n // 2 + 1
    w = _hermitian_weights(n, m)
    arg = 2 * np.pi * ((np.arange(n)[:, None] * np.arange(m)[None, :]) % n) / n
    return np.hstack([w * np.cos(arg), -w * np.sin(arg)]) / n


def _rfft_stack(A, axis):
    F = np.fft.rfft(A, axis=axis)
    return np.concatenate([F.real, F.imag], axis=axis)


def _irfft_stack(A, n, axis):
    m = A.shape[axis] // 2
    re, im = np.split(A, [m], axis=axis)
    return np.fft.irfft(re + 1j * im, n=n, axis=axis)


def _diag_input_cov(var, k):
    # product-to-sum identities: every entry of J diag(var) J^T is a
    # combination of the DFT of `var` at k - l and k + l
    V = np.fft.fft(var)
    diff = V[(k[:, None] - k[None, :]) % var.size]
    summ = V[(k[:, None] + k[None, :]) % var.size]
    rr = 0.5 * (diff.real + summ.real)
    ii = 0.5 * (diff.real - summ.real)
    ri = 0.5 * (summ.imag - diff.imag)
    return np.block([[rr, ri], [ri.T, ii]])


def gum_dft(x, method="fft", bins=None):
    """DFT of a real signal with propagation of its covariance.

    Parameters
    ----------
    x : TimeSeriesU
        Signal of length N >= 2.
    method : {"fft", "dense"}
        ``"dense"`` forms the sensitivity matrix explicitly; ``"fft"``
        applies the same linear map with FFTs.
    bins : array_like of int or bool, optional
        Return only these bins of the half-spectrum. For signals with
        pointwise uncertainty only the retained part of the covariance
        is formed, which keeps long records tractable.

    Returns
    -------
    SpectrumU
        Half-spectrum (``N // 2 + 1`` bins, or the selected ones) and the
        covariance of its stacked real and imaginary parts.
    """
    if not isinstance(x, TimeSeriesU):
        raise TypeError("x must be a TimeSeriesU")
    n = x.n
    if n < 2:
        raise ValueError("at least two samples are required")
    m = n // 2 + 1
    if bins is None:
        k = np.arange(m)
    else:
        k = np.asarray(bins)
        k = np.flatnonzero(k) if k.dtype == bool else k.astype(int).ravel()
        if k.size == 0 or k.min() < 0 or k.max() >= m or np.any(np.diff(k) <= 0):
            raise ValueError(f"bins must be increasing indices in [0, {m})")
    mk = k.size
    freqs = np.fft.rfftfreq(n, x.ts)[k]
    kind = x.unc_kind
    if method == "dense":
        J = dft_matrix(n)[np.r_[k, k + m]]
        reim = J @ x.values
        if kind in ("none", "scalar", "vector"):
            cov = (J * x.variance()) @ J.T
        else:
            cov = J @ x.cov() @ J.T
    elif method == "fft":
        reim = _rfft_stack(x.values, axis=0)[np.r_[k, k + m]]
        if kind == "none":
            cov = np.zeros((2 * mk, 2 * mk))
        elif kind in ("scalar", "vector"):
            cov = _diag_input_cov(x.variance(), k)
        else:
            sel = np.r_[k, k + m]
            W = _rfft_stack(x.cov(), axis=1)[:, sel]
            cov = _rfft_stack(W, axis=0)[sel]
    else:
        raise ValueError("method must be 'fft' or 'dense'")
    cov = symmetrize(cov)
    # imaginary parts at DC and Nyquist are exactly zero
    edges = np.flatnonzero((k == 0) | ((n % 2 == 0) & (k == m - 1)))
    reim[mk + edges] = 0.0
    cov[mk + edges, :] = 0.0
    cov[:, mk + edges] = 0.0
    return SpectrumU(reim, freqs, cov, n)


def gum_idft(F, nout=None, method="fft"):
    """Inverse DFT of a half-spectrum with covariance propagation.

    Parameters
    ----------
    F : SpectrumU
        Half-spectrum with M bins.
    nout : int, optional
        Length of the reconstructed signal, ``2 * (M - 1)`` or
        ``2 * M - 1``. Defaults to ``F.n``.

    Returns
    -------
    TimeSeriesU
        Signal with full covariance. The sampling interval is inferred
        from the frequency grid.
    """
    if not isinstance(F, SpectrumU):
        raise TypeError("F must be a SpectrumU")
    n = F.n if nout is None else check_int(nout, "nout", minimum=2)
    if n // 2 + 1 != F.m:
        raise ValueError(
            f"nout={n} is incompatible with {F.m} frequency bins "
            f"(expected {2 * (F.m - 1)} or {2 * F.m - 1})"
        )
    ts = 1.0 / (n * F.freqs[1]) if F.m > 1 and F.freqs[1] > 0 else 1.0
    if method == "dense":
        K = idft_matrix(n)
        x = K @ F.reim
        Ux = K @ F.cov @ K.T
    elif method == "fft":
        x = _irfft_stack(F.reim, n, axis=0)
        A = _irfft_stack(F.cov, n, axis=0)
        Ux = _irfft_stack(A, n, axis=1)
    else:
        raise ValueError("method must be 'fft' or 'dense'")
    return TimeSeriesU(x, ts, 0.0, symmetrize(Ux))


def _sandwich(U, p, q, r, s):
    """``J U J^T`` for the per-bin 2x2 Jacobian ``[[p, q], [r, s]]``.

    `U` is 2M x 2M in stacked (Re, Im) order; p, q, r, s are length-M
    vectors. Rows of the result are (first component, second component).
    """
    m = p.size
    U11, U12 = U[:m, :m], U[:m, m:]
    U21, U22 = U[m:, :m], U[m:, m:]
    T1 = np.hstack([p[:, None] * U11 + q[:, None] * U21, p[:, None] * U12 + q[:, None] * U22])
    T2 = np.hstack([r[:, None] * U11 + s[:, None] * U21, r[:, None] * U12 + s[:, None] * U22])
    T = np.vstack([T1, T2])
    out = np.empty_like(T)
    out[:, :m] = T[:, :m] * p + T[:, m:] * q
    out[:, m:] = T[:, :m] * r + T[:, m:] * s
    return out


def _analytic_jacobian(g):
    """Jacobian blocks of a complex-analytic map with derivative `g`."""
    return g.real, -g.imag, g.imag, g.real


def _check_grids(X, H):
    if X.m != H.m or not np.allclose(X.freqs, H.freqs, rtol=1e-9, atol=0.0):
        raise ValueError("frequency grids of the operands do not match")


def dft_multiply(X, H):
    """Bin-wise product ``Y = X * H`` of two independent spectra."""
    _check_grids(X, H)
    x, h = X.values, H.values
    cov = _sandwich(X.cov, *_analytic_jacobian(h))
    if np.any(H.cov):
        cov = cov + _sandwich(H.cov, *_analytic_jacobian(x))
    return SpectrumU.from_complex(x * h, X.freqs, symmetrize(cov), X.n)


def _check_floor(h, mag_floor):
    mag = np.abs(h)
    bad = np.flatnonzero(mag < mag_floor * mag.max()) if mag.max() > 0 else np.arange(h.size)
    if bad.size:
        raise DeconvolutionError(
            f"|H| below {mag_floor:g} * max|H| at bins {bad.tolist()[:10]}"
            f"{' ...' if bad.size > 10 else ''}; regularize (low-pass) or "
            "restrict the retained bins",
            bad,
        )


def dft_deconv(X, H, mag_floor=DEFAULT_MAG_FLOOR):
    """Bin-wise quotient ``Y = X / H`` of two independent spectra.

    Raises
    ------
    DeconvolutionError
        If ``|H_k| < mag_floor * max|H|`` on any bin; ``err.bins`` lists
        the offending bins.
    """
    _check_grids(X, H)
    x, h = X.values, H.values
    _check_floor(h, mag_floor)
    y = x / h
    cov = _sandwich(X.cov, *_analytic_jacobian(1.0 / h))
    if np.any(H.cov):
        cov = cov + _sandwich(H.cov, *_analytic_jacobian(-y / h))
    return SpectrumU.from_complex(y, X.freqs, symmetrize(cov), X.n)


def dft_transferfunction(yref, xmeas, mag_floor=DEFAULT_MAG_FLOOR, mask=None, method="fft"):
    """Transfer function ``DFT(yref) / DFT(xmeas)`` with covariance.

    Parameters
    ----------
    yref, xmeas : TimeSeriesU
        Reference and sensor signal of equal length and sampling interval.
    mask : array_like of bool, optional
        Bins to retain. Other bins are set to an exact zero, which
        suppresses them when the transfer function is applied.
    """
    if yref.n != xmeas.n or not np.isclose(yref.ts, xmeas.ts, rtol=1e-9):
        raise ValueError("signals must have equal length and sampling interval")
    Fr = gum_dft(yref, method)
    Fm = gum_dft(xmeas, method)
    if mask is None:
        return dft_deconv(Fr, Fm, mag_floor)
    mask = np.asarray(mask, dtype=bool)
    sub = dft_deconv(Fr.select(mask), Fm.select(mask), mag_floor)
    m = Fr.m
    idx = np.flatnonzero(mask)
    full = np.r_[idx, idx + m]
    reim = np.zeros(2 * m)
    reim[full] = sub.reim
    cov = np.zeros((2 * m, 2 * m))
    cov[np.ix_(full, full)] = sub.cov
    return SpectrumU(reim, Fr.freqs, cov, Fr.n)


def amp_phase_to_dft(ap):
    """Convert amplitude/phase (radians) to stacked real/imaginary parts."""
    if not isinstance(ap, AmpPhaseU):
        raise TypeError("ap must be an AmpPhaseU")
    A, phi = ap.amplitude, ap.phase
    c, s = np.cos(phi), np.sin(phi)
    cov = _sandwich(ap.cov, c, -A * s, s, A * c)
    return SpectrumU(np.r_[A * c, A * s], ap.freqs, symmetrize(cov), ap.n)


def dft_to_amp_phase(F, unwrap=True):
    """Convert stacked real/imaginary parts to amplitude and phase.

    Raises
    ------
    ValueError
        If any bin has zero magnitude (phase undefined).
    """
    if not isinstance(F, SpectrumU):
        raise TypeError("F must be a SpectrumU")
    re, im = F.re, F.im
    A = np.hypot(re, im)
    if np.any(A == 0):
        raise ValueError(f"zero magnitude at bins {np.flatnonzero(A == 0).tolist()}")
    phi = np.arctan2(im, re)
    if unwrap:
        phi = np.unwrap(phi)
    A2 = A**2
    cov = _sandwich(F.cov, re / A, im / A, -im / A2, re / A2)
    return AmpPhaseU(A, phi, F.freqs, symmetrize(cov), F.n)
