"""
Test signals for validating dynamic measurement analyses.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np

from ._validation import check_int, check_positive
from .core import TimeSeriesU
from .mc import make_rng

__all__ = ["SignalSpec", "shock_like", "primitive_signal", "add_noise", "time_grid"]

KINDS = ("shock", "gauss", "rect", "squarepulse", "sine")

_PARAMS = {
    "shock": {"t0", "sigma", "m0", "r", "d", "w"},
    "gauss": {"t0", "sigma", "m0"},
    "rect": {"t0", "t1", "height"},
    "squarepulse": {"height", "count", "width", "period", "t0"},
    "sine": {"amplitude", "frequency", "phase"},
}
_REQUIRED = {
    "shock": ("t0", "sigma", "m0"),
    "gauss": ("t0", "sigma", "m0"),
    "rect": ("t0", "t1", "height"),
    "squarepulse": ("height", "count", "width", "period"),
    "sine": ("amplitude", "frequency"),
}


def time_grid(fs, duration):
    fs = check_positive(fs, "fs")
    duration = check_positive(duration, "duration")
    n = int(round(duration * fs))
    if n < 1:
        raise ValueError("duration is shorter than one sample")
    return np.arange(n) / fs


@dataclass(frozen=True)
class SignalSpec:
    """Named test signal with its parameters, sampling rate and duration."""

    kind: str
    fs: float
    duration: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        check_positive(self.fs, "fs")
        check_positive(self.duration, "duration")
        unknown = set(self.params) - _PARAMS[self.kind]
        if unknown:
            raise ValueError(f"parameters {sorted(unknown)} do not apply to kind {self.kind!r}")
        missing = [k for k in _REQUIRED[self.kind] if k not in self.params]
        if missing:
            raise ValueError(f"kind {self.kind!r} requires parameters {missing}")
        for name in ("sigma", "width", "period"):
            if name in self.params:
                check_positive(self.params[name], name)


def _gauss(t, t0, sigma, m0):
    return m0 * np.exp(-((t - t0) ** 2) / (2 * sigma**2))


def shock_like(t0, sigma, m0, fs, duration, r=0.4, d=None, w=1.2):
    """Shock-like pulse: a Gaussian followed by a smaller, wider Gaussian
    of opposite sign.

    ``g(t) = m0 exp(-(t-t0)^2 / (2 s^2)) - r m0 exp(-(t-t0-d)^2 / (2 (w s)^2))``

    Parameters
    ----------
    t0 : float
        Centre of the main lobe in seconds.
    sigma : float
        Width of the main lobe in seconds.
    m0 : float
        Height of the main lobe.
    r, d, w : float
        Relative height, offset (default ``2 sigma``) and relative width
        of the opposite lobe. ``r = 0`` gives a plain Gaussian pulse.
    """
    sigma = check_positive(sigma, "sigma")
    t = time_grid(fs, duration)
    d = 2 * sigma if d is None else float(d)
    if r < 0:
        raise ValueError("r must be non-negative")
    w = check_positive(w, "w")
    end = max(t0 + 5 * sigma, t0 + d + 5 * w * sigma if r else -np.inf)
    if t0 - 5 * sigma < 0 or end >= t[-1] + 1 / fs:
        warnings.warn("pulse is truncated by the time window", RuntimeWarning, stacklevel=2)
    x = _gauss(t, t0, sigma, m0)
    if r:
        x = x - _gauss(t, t0 + d, w * sigma, r * m0)
    return TimeSeriesU(x, 1.0 / fs, 0.0)


def _rect(t, fs, t0, t1, height):
    # sample n is inside the pulse iff t0 <= n / fs < t1, up to rounding of t
    n = t.size
    start = max(int(np.ceil(t0 * fs - 1e-9)), 0)
    stop = min(int(np.ceil(t1 * fs - 1e-9)), n)
    x = np.zeros(n)
    if stop > start:
        x[start:stop] = height
    return x


def primitive_signal(spec):
    """Sample the primitive described by `spec`.

    kinds and parameters:

    - ``gauss``: t0, sigma, m0
    - ``shock``: t0, sigma, m0 and optionally r, d, w (see :func:`shock_like`)
    - ``rect``: t0, t1, height; samples with ``t0 <= t < t1``
    - ``squarepulse``: height, count, width, period, t0 (default 0)
    - ``sine``: amplitude, frequency, phase (default 0)
    """
    p = dict(spec.params)
    t = time_grid(spec.fs, spec.duration)
    ts = 1.0 / spec.fs
    if spec.kind == "shock":
        return shock_like(fs=spec.fs, duration=spec.duration, **p)
    if spec.kind == "gauss":
        x = _gauss(t, p["t0"], p["sigma"], p["m0"])
    elif spec.kind == "rect":
        if p["t1"] <= p["t0"]:
            raise ValueError("t1 must exceed t0")
        x = _rect(t, spec.fs, p["t0"], p["t1"], p["height"])
    elif spec.kind == "squarepulse":
        count = check_int(p["count"], "count", minimum=1)
        if p["width"] > p["period"]:
            raise ValueError("width must not exceed period")
        t0 = p.get("t0", 0.0)
        x = np.zeros(t.size)
        for i in range(count):
            a = t0 + i * p["period"]
            x += _rect(t, spec.fs, a, a + p["width"], p["height"])
    else:
        x = p["amplitude"] * np.sin(2 * np.pi * p["frequency"] * t + p.get("phase", 0.0))
    return TimeSeriesU(x, ts, 0.0)


def add_noise(x, sigma, seed=None):
    """Add white Gaussian noise and account for it in the uncertainty.

    Existing uncertainty is combined with the noise variance; a full
    covariance receives the noise variance on its diagonal.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
        raise ValueError("sigma must be finite and non-negative")
    if sigma.ndim > 1 or (sigma.ndim == 1 and sigma.size != x.n):
        raise ValueError("sigma must be a scalar or have one entry per sample")
    if not np.any(sigma):
        return x
    rng = make_rng(seed)
    values = x.values + sigma * rng.standard_normal(x.n)
    kind = x.unc_kind
    if kind == "none":
        unc = float(sigma) if sigma.ndim == 0 else sigma
    elif kind == "full":
        unc = x.cov() + np.diag(np.broadcast_to(sigma**2, (x.n,)))
    elif kind == "scalar" and sigma.ndim == 0:
        unc = float(np.sqrt(x.unc**2 + sigma**2))
    else:
        unc = np.sqrt(x.variance() + sigma**2)
    return x.replace(values=values, unc=unc)
