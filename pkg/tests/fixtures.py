"""Deterministic fixture inputs shared by the tests and the oracle generator."""

import numpy as np

SEED = 20240611


def rng(tag):
    return np.random.default_rng([SEED, tag])


def ar1_cov(n, rho, sigma=1.0):
    i = np.arange(n)
    return sigma**2 * rho ** np.abs(i[:, None] - i[None, :])


def random_spd(r, n, scale=1.0):
    A = r.standard_normal((n, n))
    return scale * (A @ A.T / n + 0.1 * np.eye(n))


def linear_fixture():
    r = rng(1)
    C = r.standard_normal((8, 6))
    x = r.standard_normal(6)
    U = random_spd(r, 6)
    return C, x, U


def doublet(n, t0, sigma, r=0.4, d=None, w=1.2):
    t = np.arange(n, dtype=float)
    d = 2 * sigma if d is None else d
    return np.exp(-((t - t0) ** 2) / (2 * sigma**2)) - r * np.exp(
        -((t - t0 - d) ** 2) / (2 * (w * sigma) ** 2)
    )


def shock64():
    return doublet(64, 20.0, 3.0), 0.01


def spectrum_pair(m=16, rel=0.01):
    """Two independent complex vectors with small correlated uncertainties."""
    r = rng(2)
    x = r.standard_normal(m) + 1j * r.standard_normal(m)
    h = (1.0 + r.uniform(0.5, 1.5, m)) * np.exp(1j * r.uniform(-np.pi, np.pi, m))

    def cov(v):
        s = rel * np.abs(v)
        A = random_spd(r, 2 * v.size, 1.0)
        d = np.sqrt(np.diag(A))
        Corr = A / np.outer(d, d)
        ss = np.r_[s, s]
        return Corr * np.outer(ss, ss)

    return x, cov(x), h, cov(h)


def amp_phase_bins(m=12, rel=0.005):
    r = rng(3)
    A = r.uniform(0.5, 2.0, m)
    phi = r.uniform(-3.0, 3.0, m)
    sA = rel * A
    sphi = np.full(m, rel)
    return A, phi, np.diag(np.r_[sA**2, sphi**2])


def reim_bins(m=12, rel=0.005):
    r = rng(4)
    z = r.uniform(0.5, 2.0, m) * np.exp(1j * r.uniform(-3.0, 3.0, m))
    s = rel * np.abs(z)
    return z, np.diag(np.r_[s**2, s**2])


def fir12():
    r = rng(5)
    b = r.standard_normal(12) / 4
    Ub = random_spd(r, 12, 1e-4)
    x = np.sin(2 * np.pi * np.arange(200) / 37.0) + 0.3 * r.standard_normal(200)
    return b, Ub, x, 0.05


def sos_iir(fs=1000.0, f0=50.0, delta=0.2):
    """Digital second-order resonator from scipy's bilinear transform."""
    from scipy.signal import bilinear

    w0 = 2 * np.pi * f0
    b, a = bilinear([w0**2], [1.0, 2 * delta * w0, w0**2], fs)
    r = rng(6)
    x = np.cos(2 * np.pi * 7.0 * np.arange(300) / fs) + 0.1 * r.standard_normal(300)
    return b, a, x, 0.02


def sos_response(f, s0=1.0, delta=0.05, f0=0.125):
    """Continuous second-order response, written out independently of the package."""
    w, w0 = 2 * np.pi * np.asarray(f, dtype=float), 2 * np.pi * f0
    return s0 * w0**2 / (w0**2 + 2j * delta * w0 * w - w**2)


def sos_design_grid(npts=500, fs=1.0):
    return np.linspace(0.0, fs / 2, npts)
