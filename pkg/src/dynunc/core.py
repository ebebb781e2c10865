"""
Shared value types and covariance algebra.

All types are immutable after construction (their arrays are flagged
read-only). Covariances are dense; the time-series type additionally
accepts a scalar or per-sample standard uncertainty so that white noise
does not force an N x N matrix into memory.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import (
    as_matrix,
    as_vector,
    check_covariance,
    check_int,
    check_positive,
    frozen,
    is_symmetric,
)

__all__ = [
    "TimeSeriesU",
    "SpectrumU",
    "AmpPhaseU",
    "LinearModel",
    "StateSpace",
    "linear_propagate",
    "cumulative_mean_model",
    "chol_psd",
    "clip_psd",
    "symmetrize",
    "PSD_TOL",
]

# eigenvalues down to -PSD_TOL * trace are treated as rounding noise
PSD_TOL = 1e-10


def symmetrize(U):
    U = np.asarray(U, dtype=float)
    return 0.5 * (U + U.T)


def clip_psd(U, tol=PSD_TOL):
    """Symmetric eigen-clipping of a covariance matrix.

    Negative eigenvalues not smaller than ``-tol * trace(U)`` are set to
    zero. Larger negative eigenvalues raise ``ValueError``.
    """
    U = symmetrize(U)
    if U.size == 0:
        return U
    w, V = np.linalg.eigh(U)
    budget = tol * max(np.trace(U), 0.0)
    if w[0] < -budget:
        raise ValueError(
            f"covariance is indefinite: smallest eigenvalue {w[0]:.3e} "
            f"below tolerance {-budget:.3e}"
        )
    if w[0] >= 0:
        return U
    w = np.clip(w, 0.0, None)
    return symmetrize((V * w) @ V.T)


@dataclass(frozen=True, eq=False)
class TimeSeriesU:
    """Equidistantly sampled signal with uncertainty.

    Parameters
    ----------
    values : array_like
        Signal values.
    ts : float
        Sampling interval in seconds.
    t0 : float
        Time of the first sample in seconds.
    unc : None, float, 1-D or 2-D array_like
        ``None`` (exact values), a scalar standard uncertainty (white
        noise), a vector of pointwise standard uncertainties or the full
        covariance matrix of the values.
    """

    values: np.ndarray
    ts: float
    t0: float = 0.0
    unc: object = None

    def __post_init__(self):
        values = frozen(as_vector(self.values, "values"))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ts", check_positive(self.ts, "ts"))
        object.__setattr__(self, "t0", float(self.t0))
        unc = self.unc
        n = values.size
        if unc is None:
            pass
        elif np.ndim(unc) == 0:
            unc = check_positive(float(unc), "unc", strict=False)
        elif np.ndim(unc) == 1:
            unc = as_vector(unc, "unc")
            if unc.size != n:
                raise ValueError(f"unc has length {unc.size}, values {n}")
            if np.any(unc < 0):
                raise ValueError("pointwise standard uncertainties must be >= 0")
            unc = frozen(unc)
        else:
            unc = frozen(check_covariance(unc, n, "unc"))
        object.__setattr__(self, "unc", unc)

    @property
    def n(self):
        return self.values.size

    @property
    def time(self):
        return self.t0 + self.ts * np.arange(self.n)

    @property
    def unc_kind(self):
        if self.unc is None:
            return "none"
        if np.ndim(self.unc) == 0:
            return "scalar"
        return "vector" if np.ndim(self.unc) == 1 else "full"

    def variance(self):
        """Pointwise variance of the values."""
        kind = self.unc_kind
        if kind == "none":
            return np.zeros(self.n)
        if kind == "scalar":
            return np.full(self.n, self.unc**2)
        if kind == "vector":
            return self.unc**2
        return np.diag(self.unc).copy()

    def std(self):
        return np.sqrt(np.clip(self.variance(), 0.0, None))

    def cov(self):
        """Full covariance matrix of the values."""
        if self.unc_kind == "full":
            return np.array(self.unc)
        return np.diag(self.variance())

    def replace(self, **changes):
        kw = dict(values=self.values, ts=self.ts, t0=self.t0, unc=self.unc)
        kw.update(changes)
        return TimeSeriesU(**kw)


def _half_spectrum_length(n):
    return n // 2 + 1


@dataclass(frozen=True, eq=False)
class SpectrumU:
    """Half-spectrum of a real signal with joint covariance.

    ``reim`` stacks the real parts of the M retained bins followed by the
    imaginary parts; ``cov`` is the 2M x 2M covariance of that vector.
    ``n`` is the length of the time-domain signal the bins belong to
    (default ``2 * (M - 1)``); it is needed to transform back.
    """

    reim: np.ndarray
    freqs: np.ndarray
    cov: np.ndarray = None
    n: int = None

    def __post_init__(self):
        reim = as_vector(self.reim, "reim")
        if reim.size % 2:
            raise ValueError("reim must have even length 2M")
        m = reim.size // 2
        freqs = as_vector(self.freqs, "freqs")
        if freqs.size != m:
            raise ValueError(f"freqs has length {freqs.size}, expected {m}")
        cov = np.zeros((2 * m, 2 * m)) if self.cov is None else check_covariance(
            self.cov, 2 * m, "cov"
        )
        n = max(2 * (m - 1), 1) if self.n is None else check_int(self.n, "n", minimum=1)
        object.__setattr__(self, "reim", frozen(reim))
        object.__setattr__(self, "freqs", frozen(freqs))
        object.__setattr__(self, "cov", frozen(cov))
        object.__setattr__(self, "n", n)

    @classmethod
    def from_complex(cls, values, freqs, cov=None, n=None):
        values = np.asarray(values, dtype=complex).ravel()
        return cls(np.r_[values.real, values.imag], freqs, cov, n)

    @property
    def m(self):
        return self.freqs.size

    @property
    def re(self):
        return self.reim[: self.m]

    @property
    def im(self):
        return self.reim[self.m :]

    @property
    def values(self):
        """Complex bin values."""
        return self.re + 1j * self.im

    def std(self):
        """Pointwise standard uncertainties, stacked like ``reim``."""
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def select(self, mask):
        """Sub-spectrum on the bins where `mask` is true."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.m,):
            raise ValueError(f"mask must have shape ({self.m},)")
        idx = np.flatnonzero(mask)
        full = np.r_[idx, idx + self.m]
        return SpectrumU(
            self.reim[full], self.freqs[idx], self.cov[np.ix_(full, full)], self.n
        )


@dataclass(frozen=True, eq=False)
class AmpPhaseU:
    """Amplitude/phase representation of a half-spectrum.

    ``cov`` is the covariance of the stacked vector (amplitudes, phases);
    phases are in radians.
    """

    amplitude: np.ndarray
    phase: np.ndarray
    freqs: np.ndarray
    cov: np.ndarray = None
    n: int = None

    def __post_init__(self):
        amp = as_vector(self.amplitude, "amplitude")
        phase = as_vector(self.phase, "phase")
        freqs = as_vector(self.freqs, "freqs")
        if not amp.size == phase.size == freqs.size:
            raise ValueError("amplitude, phase and freqs must have equal length")
        if np.any(amp < 0):
            raise ValueError("amplitude must be >= 0")
        m = amp.size
        cov = np.zeros((2 * m, 2 * m)) if self.cov is None else check_covariance(
            self.cov, 2 * m, "cov"
        )
        n = max(2 * (m - 1), 1) if self.n is None else check_int(self.n, "n", minimum=1)
        object.__setattr__(self, "amplitude", frozen(amp))
        object.__setattr__(self, "phase", frozen(phase))
        object.__setattr__(self, "freqs", frozen(freqs))
        object.__setattr__(self, "cov", frozen(cov))
        object.__setattr__(self, "n", n)

    @property
    def m(self):
        return self.freqs.size


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Multivariate linear measurement model ``y = sens @ x``."""

    sens: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sens", frozen(as_matrix(self.sens, "sens")))

    @property
    def shape(self):
        return self.sens.shape

    def __call__(self, x):
        return self.sens @ np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Linear state-space system.

    Uses the naming ``z' = C z + D x``, ``y = E z + F x``: ``C`` is the
    n x n state matrix, ``D`` the n x p input matrix, ``E`` the q x n
    output matrix and ``F`` the q x p feed-through.
    """

    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        mats = {}
        for name in "CDEF":
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 2:
                raise ValueError(f"{name} must be two-dimensional")
            mats[name] = arr
        n = mats["C"].shape[0]
        p = mats["D"].shape[1]
        q = mats["E"].shape[0]
        expected = {"C": (n, n), "D": (n, p), "E": (q, n), "F": (q, p)}
        for name, shape in expected.items():
            if mats[name].shape != shape:
                raise ValueError(
                    f"{name} has shape {mats[name].shape}, expected {shape}"
                )
            object.__setattr__(self, name, frozen(mats[name]))

    @property
    def order(self):
        return self.C.shape[0]


def linear_propagate(model, x, Ux):
    """Propagate an estimate and its covariance through a linear model.

    Parameters
    ----------
    model : LinearModel or array_like
        Sensitivity matrix C of shape (K, N).
    x : array_like
        Input estimate of length N.
    Ux : array_like
        N x N covariance of `x`.

    Returns
    -------
    y : ndarray
        ``C @ x``
    Uy : ndarray
        ``C @ Ux @ C.T``, symmetrized.
    """
    if not isinstance(model, LinearModel):
        model = LinearModel(model)
    C = model.sens
    x = as_vector(x, "x")
    if C.shape[1] != x.size:
        raise ValueError(
            f"model expects {C.shape[1]} inputs, x has length {x.size}"
        )
    Ux = check_covariance(Ux, x.size, "Ux")
    return C @ x, symmetrize(C @ Ux @ C.T)


def cumulative_mean_model(n, dt):
    """Trapezoidal running-mean model.

    Row ``j`` (0-based, ``j >= 1``) averages ``x[0..j]`` with the
    trapezoidal rule, i.e. it returns the integral over ``[t_0, t_j]``
    divided by ``t_j - t_0``. Row 0 is zero.
    """
    n = check_int(n, "n", minimum=2)
    dt = check_positive(dt, "dt")
    C = np.zeros((n, n))
    for j in range(1, n):
        row = np.full(j + 1, dt)
        row[0] = row[-1] = 0.5 * dt
        C[j, : j + 1] = row / (j * dt)
    return LinearModel(C)


def chol_psd(U, jitter=1e-10):
    """Lower Cholesky factor of a symmetric positive semi-definite matrix.

    A diagonal jitter ``eps`` with ``eps <= jitter * trace(U) / N`` is
    added only if the plain factorization fails, so that
    ``L @ L.T == U + eps * I``. Rows/columns with zero variance are
    excluded from the factorization and left zero. Deterministic for a
    fixed input.

    Raises
    ------
    ValueError
        If `U` is not symmetric or is indefinite beyond the jitter budget.
    """
    U = as_matrix(U, "U")
    if U.shape[0] != U.shape[1]:
        raise ValueError("U must be square")
    if not is_symmetric(U):
        raise ValueError("U must be symmetric")
    U = symmetrize(U)
    n = U.shape[0]
    L = np.zeros_like(U)
    d = np.diag(U)
    if np.any(d < 0):
        raise ValueError("U has negative diagonal entries")
    idx = np.flatnonzero(d > 0)
    if idx.size == 0:
        return L
    sub = U[np.ix_(idx, idx)]
    budget = jitter * np.trace(sub) / idx.size
    eye = np.eye(idx.size)
    for eps in (0.0, budget * 1e-6, budget * 1e-4, budget * 1e-2, budget):
        try:
            Ls = np.linalg.cholesky(sub + eps * eye)
        except np.linalg.LinAlgError:
            continue
        L[np.ix_(idx, idx)] = Ls
        return L
    # accumulated rounding can leave tiny negative eigenvalues
    clipped = clip_psd(sub, tol=max(jitter, PSD_TOL))
    try:
        Ls = np.linalg.cholesky(clipped + budget * eye)
    except np.linalg.LinAlgError as err:
        raise ValueError("U is indefinite beyond the jitter budget") from err
    L[np.ix_(idx, idx)] = Ls
    return L
