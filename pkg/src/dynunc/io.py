"""
CSV and JSON input/output for signals, spectra, filters and reports.

Numbers are written with 17 significant digits so that a write/read
round trip reproduces every float exactly.
"""

import csv
import json
import os
from pathlib import Path

import numpy as np

from .core import AmpPhaseU, SpectrumU, TimeSeriesU
from .filter_design import FreqRespData
from .filter_unc import DigitalFilterU

__all__ = [
    "read_timeseries_csv",
    "write_timeseries_csv",
    "read_spectrum_csv",
    "write_spectrum_csv",
    "read_response_csv",
    "read_amp_phase_csv",
    "write_amp_phase_csv",
    "write_response_csv",
    "write_filter_json",
    "read_filter_json",
    "write_results",
    "fmt",
]

SPACING_RTOL = 1e-9


def fmt(v):
    return format(float(v), ".17g")


def _read_table(path, required):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if header[: len(required)] != list(required):
        raise ValueError(f"{path}: header must start with {','.join(required)}")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as err:
        raise ValueError(f"{path}: {err}") from None
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: every row needs {len(header)} columns")
    return header, data


def _sidecar(path):
    path = Path(path)
    return path.with_name(path.stem + ".cov.csv")


def read_timeseries_csv(path):
    """Read ``t,value[,unc]``; a ``<name>.cov.csv`` sidecar adds a full covariance."""
    header, data = _read_table(path, ("t", "value"))
    if len(header) > 3 or (len(header) == 3 and header[2] != "unc"):
        raise ValueError(f"{path}: expected columns t,value[,unc]")
    t, x = data[:, 0], data[:, 1]
    if t.size < 2:
        raise ValueError(f"{path}: at least two samples are required")
    dt = np.diff(t)
    ts = (t[-1] - t[0]) / (t.size - 1)
    # timestamps carry rounding of order eps * |t| regardless of ts
    tol = SPACING_RTOL * ts + 4 * np.finfo(float).eps * np.abs(t).max()
    if ts <= 0 or np.max(np.abs(dt - ts)) > tol:
        raise ValueError(f"{path}: time grid is not uniform")
    unc = data[:, 2] if len(header) == 3 else None
    side = _sidecar(path)
    if side.exists():
        U = np.loadtxt(side, delimiter=",", ndmin=2)
        if U.shape != (t.size, t.size):
            raise ValueError(f"{side}: expected a {t.size}x{t.size} matrix, got {U.shape}")
        unc = U
    return TimeSeriesU(x, ts, t[0], unc)


def write_timeseries_csv(path, x):
    """Write ``t,value,unc``; a full covariance also goes to the sidecar."""
    path = Path(path)
    t = x.time
    s = x.std()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("t,value,unc\n")
        for row in zip(t, x.values, s):
            fh.write(",".join(fmt(v) for v in row) + "\n")
    if x.unc_kind == "full":
        np.savetxt(_sidecar(path), x.cov(), delimiter=",", fmt="%.17g")
    return path


def write_spectrum_csv(path, F):
    path = Path(path)
    s = F.std()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("f,re,im,unc_re,unc_im\n")
        for row in zip(F.freqs, F.re, F.im, s[: F.m], s[F.m :]):
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def read_spectrum_csv(path, n=None):
    """Read ``f,re,im,unc_re,unc_im`` into a SpectrumU (diagonal covariance)."""
    header, data = _read_table(path, ("f", "re", "im"))
    reim = np.r_[data[:, 1], data[:, 2]]
    cov = None
    if len(header) >= 5:
        cov = np.diag(np.r_[data[:, 3], data[:, 4]] ** 2)
    return SpectrumU(reim, data[:, 0], cov, n)


def read_response_csv(path, fs=None):
    """Read a frequency response ``f,re,im[,unc_re,unc_im]`` (Hz)."""
    header, data = _read_table(path, ("f", "re", "im"))
    cov = None
    if len(header) >= 5:
        cov = np.diag(np.r_[data[:, 3], data[:, 4]] ** 2)
    return FreqRespData(data[:, 0], data[:, 1] + 1j * data[:, 2], cov, fs)


def read_amp_phase_csv(path):
    """Read ``f,amplitude,phase[,unc_amplitude,unc_phase]`` (phase in rad)."""
    header, data = _read_table(path, ("f", "amplitude", "phase"))
    cov = None
    if len(header) >= 5:
        cov = np.diag(np.r_[data[:, 3], data[:, 4]] ** 2)
    return AmpPhaseU(data[:, 1], data[:, 2], data[:, 0], cov)


def write_amp_phase_csv(path, ap):
    path = Path(path)
    s = np.sqrt(np.clip(np.diag(ap.cov), 0.0, None))
    m = ap.freqs.size
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("f,amplitude,phase,unc_amplitude,unc_phase\n")
        for row in zip(ap.freqs, ap.amplitude, ap.phase, s[:m], s[m:]):
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def write_response_csv(path, H):
    path = Path(path)
    m = H.freqs.size
    s = np.zeros(2 * m) if H.cov is None else np.sqrt(np.clip(np.diag(H.cov), 0.0, None))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("f,re,im,unc_re,unc_im\n")
        for row in zip(H.freqs, H.values.real, H.values.imag, s[:m], s[m:]):
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def _filter_dict(flt):
    return {
        "b": [float(v) for v in flt.b],
        "a": [float(v) for v in flt.a],
        "delay_n0": int(flt.delay_n0),
        "Uba": None if flt.Uba is None else [[float(v) for v in r] for r in flt.Uba],
    }


def write_filter_json(path, flt, extra=None):
    d = _filter_dict(flt)
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=1) + "\n", encoding="utf-8")
    return Path(path)


def read_filter_json(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return DigitalFilterU(d["b"], d.get("a", [1.0]), d.get("Uba"), d.get("delay_n0", 0))
    except KeyError as err:
        raise ValueError(f"{path}: missing field {err}") from None


def _report_value(v):
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_report_value(e) for e in np.ravel(v))
    return str(v)


def write_report(path, report):
    lines = []
    for key, value in report.items():
        if isinstance(value, dict):
            lines.append(f"[{key}]")
            lines.extend(f"{k} = {_report_value(v)}" for k, v in value.items())
        else:
            lines.append(f"{key} = {_report_value(value)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def write_results(directory, artifacts):
    """Write pipeline artifacts to `directory`.

    Recognized keys of `artifacts`: ``estimate`` (TimeSeriesU),
    ``spectrum`` (SpectrumU), ``filter`` (DigitalFilterU) and ``report``
    (mapping, possibly nested one level). ``report.txt`` is always
    written. Returns the list of written paths.
    """
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    written = []
    if artifacts.get("estimate") is not None:
        written.append(write_timeseries_csv(directory / "estimate.csv", artifacts["estimate"]))
    if artifacts.get("spectrum") is not None:
        written.append(write_spectrum_csv(directory / "spectrum.csv", artifacts["spectrum"]))
    if artifacts.get("filter") is not None:
        written.append(write_filter_json(directory / "filter.json", artifacts["filter"]))
    for name, series in (artifacts.get("extra_series") or {}).items():
        written.append(write_timeseries_csv(directory / f"{name}.csv", series))
    written.append(write_report(directory / "report.txt", artifacts.get("report") or {}))
    return written
