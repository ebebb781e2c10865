"""
Declarative analysis pipelines.

A pipeline is described by an INI file with one section per stage. The
``[pipeline]`` section names the ``kind`` and optionally ``seed`` and
``output``; ``[inputs]`` lists data files (paths relative to the config
file). Without input files every pipeline generates synthetic data from
the ``[truth]`` section so that its result can be checked against a
known measurand.

Kinds
-----
shock
    Parametric calibration of an accelerometer from a shock measurement:
    DFT of acceleration and charge, their quotient, second-order fit and
    Monte Carlo validation with a digital filter per parameter draw.
compensate
    Transfer function from a reference/sensor pair, applied to a new
    sensor measurement in the frequency domain.
hydrophone
    Frequency-domain deconvolution with the reciprocal response and a
    low-pass filter, followed by peak extraction.
ibp
    Second-order fit to sinusoidal calibration data, design of an FIR
    deconvolution filter and comparison of closed-form and sequential
    Monte Carlo uncertainties.
demo_ringing
    Ringing of a resonant sensor excited by a shock, raw versus
    deconvolved estimation error.
"""

import configparser
from contextlib import contextmanager
from dataclasses import dataclass, field
import os
from io import StringIO
from pathlib import Path
import warnings

import numpy as np
from scipy.signal import lfilter

from .core import AmpPhaseU, SpectrumU, TimeSeriesU, chol_psd
from .dft_unc import (
    amp_phase_to_dft,
    dft_deconv,
    dft_multiply,
    dft_transferfunction,
    gum_dft,
    gum_idft,
)
from .filter_design import (
    FreqRespData,
    kaiser_lowpass,
    lsfir,
    lsiir,
    passband_error,
    product_weights,
)
from .filter_unc import (
    dynamic_error_bound,
    fir_unc_filter,
    smc_filter,
    transient_length,
)
from .io import read_amp_phase_csv, read_response_csv, read_timeseries_csv, write_results
from .mc import RunningStats, make_rng, spawn_seeds
from .signals import add_noise, shock_like
from .sos import (
    SosParams,
    bilinear_discretize,
    fit_sos,
    sos_freq_resp,
    sos_mc_response,
    sos_phys2filter,
)

__all__ = [
    "ConfigError",
    "StageError",
    "PipelineConfig",
    "run_pipeline",
    "execute",
    "DEFAULTS",
    "KINDS",
    "default_seed",
]

KINDS = ("shock", "compensate", "hydrophone", "ibp", "demo_ringing")
SEED_ENV = "DYNUNC_SEED"
FALLBACK_SEED = 12345


class ConfigError(ValueError):
    """Invalid or inconsistent pipeline configuration."""


class StageError(RuntimeError):
    """Numerical failure inside a named pipeline stage."""

    def __init__(self, stage, error):
        super().__init__(f"stage '{stage}': {type(error).__name__}: {error}")
        self.stage = stage
        self.error = error


@contextmanager
def stage(name):
    try:
        yield
    except (StageError, ConfigError):
        raise
    except Exception as err:
        raise StageError(name, err) from err


def default_seed():
    """Seed used when none is configured; overridable by ``DYNUNC_SEED``."""
    value = os.environ.get(SEED_ENV)
    if value is None or value.strip() == "":
        return FALLBACK_SEED
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {value!r}") from None


# Defaults per kind: section -> key -> value. The type of each default
# fixes the type a configured value is parsed as.
DEFAULTS = {
    "demo_ringing": {
        "truth": {"fs": 100e3, "n": 2048, "s0": 1.0, "delta": 0.05, "f0": 8e3,
                  "t0": 2e-3, "sigma": 50e-6, "m0": 1.0, "noise": 1e-3},
        "design": {"order": 48, "delay": 24, "lowpass_order": 64,
                   "lowpass_cutoff": 15e3, "beta": 8.0},
    },
    "shock": {
        "truth": {"fs": 10e6, "n": 16384, "s0": 0.3, "delta": 0.03, "f0": 40e3,
                  "t0": 100e-6, "sigma": 8e-6, "m0": 1000.0,
                  "accel_noise": 0.05, "charge_noise": 0.1},
        "fit": {"rel_threshold": 0.05, "max_bins": 300, "fit_draws": 2000},
        "mc": {"draws": 2000, "batch": 200, "coverage_factor": 2.0},
    },
    "compensate": {
        "truth": {"fs": 1000.0, "n": 1000, "f_fund": 5.0, "harmonics": 4,
                  "gain": 0.8, "fc": 40.0, "noise": 0.01, "new_scale": 0.7},
        "transfer": {"snr": 5.0, "mag_floor": 1e-6},
    },
    "hydrophone": {
        "truth": {"fs": 200e6, "n": 1024, "s0": 1.0, "delta": 0.7, "f0": 20e6,
                  "fc": 5e6, "cycles": 3.0, "t0": 1.5e-6, "m0": 1.0,
                  "noise": 0.002, "unc_amplitude": 0.01, "unc_phase": 0.01},
        "regularization": {"lowpass": True, "lowpass_order": 64,
                           "lowpass_cutoff": 25e6, "beta": 8.0,
                           "inflation_limit": 10.0},
    },
    "ibp": {
        "truth": {"fs": 250.0, "n": 2500, "s0": 1.0, "delta": 0.3, "f0": 20.0,
                  "noise": 0.1, "unc_amplitude": 0.005, "unc_phase": 0.005,
                  "f_cal_max": 25.0, "cal_points": 25},
        "fit": {"fit_draws": 2000, "response_draws": 2000, "grid": 200},
        "design": {"order": 60, "delay": 30, "mc_draws": 1000,
                   "lowpass_order": 40, "lowpass_cutoff": 30.0, "beta": 8.0,
                   "iir": False, "iir_nb": 4, "iir_na": 2, "iir_delay": 2},
        "smc": {"draws": 10000, "tolerance": 0.03},
    },
}

INPUTS = {
    "demo_ringing": (),
    "shock": ("accel", "charge"),
    "compensate": ("reference", "sensor", "measurement"),
    "hydrophone": ("measured", "response"),
    "ibp": ("calibration", "measured"),
}


def _parse_value(raw, default, where):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            v = float(raw)
            if v != int(v):
                raise ValueError(raw)
            return int(v)
        if isinstance(default, float):
            v = float(raw)
            if not np.isfinite(v):
                raise ValueError(raw)
            return v
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


@dataclass
class PipelineConfig:
    """Validated pipeline configuration."""

    kind: str
    params: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    output: Path = Path("results")
    seed: int = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {', '.join(KINDS)}; got {self.kind!r}")
        merged = {sec: dict(vals) for sec, vals in DEFAULTS[self.kind].items()}
        for sec, vals in (self.params or {}).items():
            if sec not in merged:
                raise ConfigError(f"unknown section [{sec}] for kind {self.kind!r}")
            for key, value in vals.items():
                if key not in merged[sec]:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]")
                default = merged[sec][key]
                if isinstance(value, str):
                    value = _parse_value(value, default, f"[{sec}] {key}")
                merged[sec][key] = value
        self.params = merged
        inputs = {}
        for name, path in (self.inputs or {}).items():
            if name not in INPUTS[self.kind]:
                raise ConfigError(f"unknown input {name!r} for kind {self.kind!r}")
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"input {name!r}: file {path} does not exist")
            inputs[name] = path
        self.inputs = inputs
        self.output = Path(self.output)
        self.seed = default_seed() if self.seed is None else int(self.seed)
        self._check_ranges()

    def _check_ranges(self):
        for sec, vals in self.params.items():
            for key, v in vals.items():
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    continue
                if key in ("phase",):
                    continue
                if v < 0:
                    raise ConfigError(f"[{sec}] {key} must be non-negative")
                if v == 0 and key in ("fs", "n", "f0", "delta", "sigma", "draws", "order",
                                      "lowpass_order", "lowpass_cutoff", "f_fund"):
                    raise ConfigError(f"[{sec}] {key} must be positive")
        for sec in ("design", "regularization"):
            vals = self.params.get(sec, {})
            fs = self.params.get("truth", {}).get("fs")
            if "lowpass_cutoff" in vals and fs is not None and vals["lowpass_cutoff"] >= fs / 2:
                raise ConfigError(f"[{sec}] lowpass_cutoff must lie below fs/2")
            if vals.get("lowpass_order", 0) % 2:
                raise ConfigError(f"[{sec}] lowpass_order must be even")

    @classmethod
    def from_file(cls, path, output=None, seed=None):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as err:
            raise ConfigError(f"{path}: {err}") from None
        if not cp.has_section("pipeline") or not cp.has_option("pipeline", "kind"):
            raise ConfigError(f"{path}: [pipeline] section with 'kind' is required")
        head = dict(cp["pipeline"])
        unknown = set(head) - {"kind", "seed", "output"}
        if unknown:
            raise ConfigError(f"unknown keys in [pipeline]: {sorted(unknown)}")
        kind = head["kind"].strip()
        base = path.parent
        if seed is None and "seed" in head:
            seed = _parse_value(head["seed"], 0, "[pipeline] seed")
        out = output or base / head.get("output", "results")
        inputs = {}
        if cp.has_section("inputs"):
            inputs = {k: base / v.strip() for k, v in cp["inputs"].items()}
        params = {
            sec: dict(cp[sec]) for sec in cp.sections() if sec not in ("pipeline", "inputs")
        }
        return cls(kind, params, inputs, out, seed)

    def to_ini(self):
        """Configuration as INI text with every parameter spelled out."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["pipeline"] = {"kind": self.kind, "seed": str(self.seed), "output": str(self.output)}
        if self.inputs:
            cp["inputs"] = {k: str(v) for k, v in self.inputs.items()}
        for sec, vals in self.params.items():
            cp[sec] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in vals.items()}
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()


def _seeds(cfg, n):
    return spawn_seeds(cfg.seed, n)


def _best_scaled_shifted_rms(raw, truth, max_shift):
    """Smallest RMS of ``a * raw[n + s] - truth[n]`` over shifts and gains."""
    best = np.inf
    best_shift = 0
    for s in range(-max_shift, max_shift + 1):
        xs = np.roll(raw, -s)
        den = xs @ xs
        a = (xs @ truth) / den if den > 0 else 0.0
        rms = float(np.sqrt(np.mean((a * xs - truth) ** 2)))
        if rms < best:
            best, best_shift = rms, s
    return best, best_shift


def _delayed(x, d):
    out = np.zeros_like(x)
    out[d:] = x[: x.size - d]
    return out


def _signal_spectrum(x, k=3.0):
    """Spectrum of `x` with bins at the noise level set to zero.

    For white noise every bin has ``E|X_k|^2 <= sum(var)``; bins below `k`
    times that level carry no identifiable signal. The dynamic error
    bound is evaluated on the remaining signal content, noise being
    accounted for by the propagated uncertainty.
    """
    X = gum_dft(x.replace(unc=None))
    level = np.sqrt(np.sum(x.variance()))
    vals = np.where(np.abs(X.values) > k * level, X.values, 0.0)
    return SpectrumU.from_complex(vals, X.freqs, None, X.n)


def _freq_domain_response(values, H):
    return np.fft.irfft(np.fft.rfft(values) * H, n=values.size)


# ---------------------------------------------------------------------------
# demo_ringing


def run_demo_ringing(cfg):
    tr, de = cfg.params["truth"], cfg.params["design"]
    fs, n = tr["fs"], tr["n"]
    (s_noise,) = _seeds(cfg, 1)
    with stage("simulate"):
        p = SosParams(tr["s0"], tr["delta"], tr["f0"])
        y = shock_like(tr["t0"], tr["sigma"], tr["m0"], fs, n / fs)
        f = np.fft.rfftfreq(n, 1 / fs)
        Hc = sos_freq_resp(p, f)
        x_clean = TimeSeriesU(_freq_domain_response(y.values, Hc), 1 / fs)
        x = add_noise(x_clean, tr["noise"], seed=s_noise)
    with stage("design"):
        H = FreqRespData(f, Hc, fs=fs)
        inv = lsfir(H, de["order"], de["delay"], fs, weights=product_weights(H))
        low = kaiser_lowpass(de["lowpass_order"], de["lowpass_cutoff"], fs, de["beta"])
        flt = inv.cascade(low)
    with stage("deconvolve"):
        est = fir_unc_filter(x, flt)
        clean = fir_unc_filter(x_clean, flt).values
        d = flt.delay_n0
        truth = _delayed(y.values, d)
        bound = dynamic_error_bound(flt, Hc, gum_dft(y), measurand=True)
    with stage("evaluate"):
        rms_deconv = float(np.sqrt(np.mean((est.values - truth) ** 2)))
        rms_raw, shift = _best_scaled_shifted_rms(x.values, y.values, n // 8)
        residual = np.abs(clean - truth)
    report = {
        "pipeline": {"kind": cfg.kind, "seed": cfg.seed},
        "truth": dict(tr),
        "filter": {
            "order": flt.nb, "delay_n0": d,
            "passband_error_inverse": passband_error(H, inv, fs, 0.8 * tr["f0"]),
        },
        "result": {
            "rms_error_raw_best": rms_raw,
            "raw_best_shift": shift,
            "rms_error_deconvolved": rms_deconv,
            "rms_ratio": rms_deconv / rms_raw,
            "max_dynamic_residual": float(residual.max()),
            "dynamic_error_bound": float(bound[0]),
            "bound_dominates": bool(np.all(residual <= bound)),
            "max_uncertainty": float(est.std().max()),
        },
    }
    return {
        "estimate": est,
        "filter": flt,
        "report": report,
        "extra_series": {
            "raw": x,
            "truth": TimeSeriesU(truth, 1 / fs),
        },
    }


# ---------------------------------------------------------------------------
# shock


def _synth_shock(cfg, seeds):
    tr = cfg.params["truth"]
    fs, n = tr["fs"], tr["n"]
    p = SosParams(tr["s0"], tr["delta"], tr["f0"])
    a = shock_like(tr["t0"], tr["sigma"], tr["m0"], fs, n / fs)
    q = _freq_domain_response(a.values, sos_freq_resp(p, np.fft.rfftfreq(n, 1 / fs)))
    a_meas = add_noise(a, tr["accel_noise"], seed=seeds[0])
    q_meas = add_noise(TimeSeriesU(q, 1 / fs), tr["charge_noise"], seed=seeds[1])
    return a_meas, q_meas, p


def _noise_level(x, name):
    if x.unc_kind not in ("scalar", "vector"):
        raise ConfigError(f"{name}: a pointwise uncertainty column is required")
    return x.std()


def run_shock(cfg):
    fi, mc = cfg.params["fit"], cfg.params["mc"]
    seeds = _seeds(cfg, 4)
    with stage("load"):
        if cfg.inputs:
            if set(cfg.inputs) != {"accel", "charge"}:
                raise ConfigError("shock needs both 'accel' and 'charge' inputs")
            a = read_timeseries_csv(cfg.inputs["accel"])
            q = read_timeseries_csv(cfg.inputs["charge"])
            truth = None
        else:
            a, q, truth = _synth_shock(cfg, seeds[:2])
        if a.n != q.n or not np.isclose(a.ts, q.ts, rtol=1e-9):
            raise ConfigError("accel and charge must share the time grid")
        sa = _noise_level(a, "accel")
        sq = _noise_level(q, "charge")
        fs = 1.0 / a.ts
    with stage("gum_dft"):
        A = np.abs(np.fft.rfft(a.values))
        f = np.fft.rfftfreq(a.n, a.ts)
        sel = np.flatnonzero((A > fi["rel_threshold"] * A.max()) & (f > 0))
        if sel.size < 3:
            raise ValueError("fewer than three significant acceleration bins")
        sel = sel[:: max(1, -(-sel.size // fi["max_bins"]))]
        Fa = gum_dft(a, bins=sel)
        Fq = gum_dft(q, bins=sel)
    with stage("dft_deconv"):
        Sqs = dft_deconv(Fq, Fa)
    with stage("fit_sos"):
        est = fit_sos(Sqs.freqs, Sqs.values, Sqs.cov, draws=fi["fit_draws"], seed=seeds[2])
    with stage("mc_validation"):
        rng = make_rng(seeds[3])
        L = chol_psd(est.cov)
        stats = RunningStats(a.n)
        done = rejected = 0
        stable = True
        while done < mc["draws"]:
            k = min(mc["batch"], mc["draws"] - done)
            th = est.vector + rng.standard_normal((k, 3)) @ L.T
            ok = (th[:, 1] > 0) & (th[:, 2] > 0)
            rejected += int(np.count_nonzero(~ok))
            th = th[ok]
            Y = np.empty((th.shape[0], a.n))
            for i, (s0, delta, f0) in enumerate(th):
                flt = bilinear_discretize(
                    *sos_phys2filter(SosParams(s0, delta, f0)), fs, prewarp_f=f0
                )
                stable &= flt.is_stable()
                noisy_a = a.values + sa * rng.standard_normal(a.n)
                Y[i] = lfilter(flt.b, flt.a, noisy_a) + sq * rng.standard_normal(a.n)
            stats.update_batch(Y)
            done += th.shape[0]
            if rejected > mc["draws"]:
                raise RuntimeError("too many non-physical parameter draws")
        mean, std = stats.mean, stats.std()
        inside = np.abs(q.values - mean) <= mc["coverage_factor"] * std
    names = ("s0", "delta", "f0")
    fitted = {k: float(v) for k, v in zip(names, est.vector)}
    fitted.update({f"u_{k}": float(v) for k, v in zip(names, est.std())})
    report = {
        "pipeline": {"kind": cfg.kind, "seed": cfg.seed, "synthetic": truth is not None},
        "fit": {"bins": int(sel.size), "f_min": float(Sqs.freqs[0]),
                "f_max": float(Sqs.freqs[-1]), **fitted},
        "mc_validation": {
            "draws": int(stats.count),
            "rejected_draws": rejected,
            "all_filters_stable": bool(stable),
            "coverage_factor": mc["coverage_factor"],
            "coverage": float(inside.mean()),
        },
    }
    if truth is not None:
        report["truth"] = {k: float(v) for k, v in zip(names, truth.vector)}
    return {
        "estimate": TimeSeriesU(mean, a.ts, a.t0, std),
        "spectrum": Sqs,
        "report": report,
        "extra_series": {"charge": q},
    }


# ---------------------------------------------------------------------------
# compensate


def _synth_compensate(cfg, seeds):
    tr = cfg.params["truth"]
    fs, n = tr["fs"], tr["n"]
    t = np.arange(n) / fs
    f = np.fft.rfftfreq(n, 1 / fs)
    H = tr["gain"] / (1 + 1j * f / tr["fc"])
    rng = make_rng(seeds[0])
    amps = 1.0 / np.arange(1, tr["harmonics"] + 1)
    phases = rng.uniform(0, 2 * np.pi, (2, tr["harmonics"]))

    def periodic(scale, ph):
        return scale * sum(
            a * np.sin(2 * np.pi * (h + 1) * tr["f_fund"] * t + p)
            for h, (a, p) in enumerate(zip(amps, ph))
        )

    ref = periodic(1.0, phases[0])
    new_ref = periodic(tr["new_scale"], phases[1])
    sensor = _freq_domain_response(ref, H)
    new_meas = _freq_domain_response(new_ref, H)
    mk = lambda v: TimeSeriesU(v, 1 / fs)  # noqa: E731
    return (
        add_noise(mk(ref), tr["noise"], seed=seeds[1]),
        add_noise(mk(sensor), tr["noise"], seed=seeds[2]),
        add_noise(mk(new_meas), tr["noise"], seed=seeds[3]),
        new_ref,
    )


def run_compensate(cfg):
    tf = cfg.params["transfer"]
    seeds = _seeds(cfg, 4)
    with stage("load"):
        if cfg.inputs:
            if set(cfg.inputs) != {"reference", "sensor", "measurement"}:
                raise ConfigError("compensate needs 'reference', 'sensor' and 'measurement'")
            ref = read_timeseries_csv(cfg.inputs["reference"])
            sen = read_timeseries_csv(cfg.inputs["sensor"])
            new = read_timeseries_csv(cfg.inputs["measurement"])
            clean = None
        else:
            ref, sen, new, clean = _synth_compensate(cfg, seeds)
        if not (ref.n == sen.n == new.n):
            raise ConfigError("all signals must have the same length")
    with stage("dft_transferfunction"):
        Fs = gum_dft(sen)
        mag = np.abs(Fs.values)
        u = np.sqrt(np.diag(Fs.cov)[: Fs.m] + np.diag(Fs.cov)[Fs.m :])
        mask = mag > tf["snr"] * u
        if not np.any(mask):
            raise ValueError("no bin of the sensor signal exceeds the noise level")
        T = dft_transferfunction(ref, sen, tf["mag_floor"], mask=mask)
    with stage("gum_dft"):
        Fn = gum_dft(new)
    with stage("dft_multiply"):
        Y = dft_multiply(Fn, T)
    with stage("gum_idft"):
        y = gum_idft(Y, new.n)
        y = TimeSeriesU(y.values, new.ts, new.t0, y.unc)
    with stage("dynamic_error_bound"):
        # the transfer function is exact on retained bins; discarded bins
        # are taken as empty, so the bound covers retained-bin effects only
        Hs = np.ones(T.m, dtype=complex)
        Hs[mask] = 1.0 / T.values[mask]
        bound = dynamic_error_bound(T.values, Hs, Y, measurand=True, delay_n0=0)
    report = {
        "pipeline": {"kind": cfg.kind, "seed": cfg.seed, "synthetic": clean is not None},
        "transfer": {"retained_bins": int(mask.sum()),
                     "retained_freqs": T.freqs[mask]},
        "result": {"max_uncertainty": float(y.std().max()),
                   "dynamic_error_bound": float(bound[0])},
    }
    if clean is not None:
        inside = np.abs(y.values - clean) <= 2 * y.std()
        report["result"]["coverage_2u"] = float(inside.mean())
        report["result"]["rms_error"] = float(np.sqrt(np.mean((y.values - clean) ** 2)))
    return {"estimate": y, "spectrum": T, "report": report}


# ---------------------------------------------------------------------------
# hydrophone


def _hydrophone_response(cfg, f):
    tr = cfg.params["truth"]
    S = sos_freq_resp(SosParams(tr["s0"], tr["delta"], tr["f0"]), f)
    m = f.size
    cov = np.diag(np.r_[(tr["unc_amplitude"] * np.abs(S)) ** 2, np.full(m, tr["unc_phase"] ** 2)])
    return AmpPhaseU(np.abs(S), np.unwrap(np.angle(S)), f, cov, tr["n"])


def _synth_hydrophone(cfg, seed):
    tr = cfg.params["truth"]
    fs, n = tr["fs"], tr["n"]
    t = np.arange(n) / fs
    width = tr["cycles"] / tr["fc"] / 2.5
    p = tr["m0"] * np.exp(-((t - tr["t0"]) ** 2) / (2 * width**2)) * np.sin(
        2 * np.pi * tr["fc"] * (t - tr["t0"])
    )
    f = np.fft.rfftfreq(n, 1 / fs)
    S = sos_freq_resp(SosParams(tr["s0"], tr["delta"], tr["f0"]), f)
    x = add_noise(TimeSeriesU(_freq_domain_response(p, S), 1 / fs), tr["noise"], seed=seed)
    return x, p


def run_hydrophone(cfg):
    rg = cfg.params["regularization"]
    tr = cfg.params["truth"]
    (seed,) = _seeds(cfg, 1)
    with stage("load"):
        if cfg.inputs:
            if set(cfg.inputs) != {"measured", "response"}:
                raise ConfigError("hydrophone needs 'measured' and 'response' inputs")
            x = read_timeseries_csv(cfg.inputs["measured"])
            Hr = read_response_csv(cfg.inputs["response"])
            f = np.fft.rfftfreq(x.n, x.ts)
            if Hr.freqs.size != f.size or not np.allclose(Hr.freqs, f, rtol=1e-9):
                raise ConfigError("response must be given on the DFT grid of the measurement")
            H = SpectrumU(np.r_[Hr.values.real, Hr.values.imag], f, Hr.cov, x.n)
            truth = None
        else:
            x, truth = _synth_hydrophone(cfg, seed)
            f = np.fft.rfftfreq(x.n, x.ts)
            H = amp_phase_to_dft(_hydrophone_response(cfg, f))
        fs = 1.0 / x.ts
    with stage("gum_dft"):
        X = gum_dft(x)
    with stage("dft_deconv"):
        P = dft_deconv(X, H)
    with stage("lowpass"):
        if rg["lowpass"]:
            low = kaiser_lowpass(rg["lowpass_order"], rg["lowpass_cutoff"], fs, rg["beta"])
            # zero-phase version of the low-pass: magnitude response only
            Hl = np.abs(low.response(f, fs)).astype(complex)
            P = dft_multiply(P, SpectrumU.from_complex(Hl, f, None, x.n))
        else:
            Hl = np.ones(f.size, dtype=complex)
    with stage("gum_idft"):
        p = gum_idft(P, x.n)
        p = TimeSeriesU(p.values, x.ts, x.t0, p.unc)
    with stage("peaks"):
        imax, imin = int(np.argmax(p.values)), int(np.argmin(p.values))
        u = p.std()
        s0 = np.abs(H.values[0]) if np.abs(H.values[0]) > 0 else 1.0
        inflation = float(np.mean(u**2) / (np.mean(x.variance()) / s0**2))
        inflated = inflation > rg["inflation_limit"]
        if inflated:
            warnings.warn(
                f"deconvolution inflates the noise variance by a factor {inflation:.3g}; "
                "enable the low-pass filter to regularize",
                RuntimeWarning,
                stacklevel=2,
            )
        bound = dynamic_error_bound(Hl / H.values, H.values, _signal_spectrum(x), delay_n0=0)
    report = {
        "pipeline": {"kind": cfg.kind, "seed": cfg.seed, "synthetic": truth is not None},
        "regularization": {"lowpass": bool(rg["lowpass"]),
                           "variance_inflation": inflation,
                           "variance_inflation_flagged": bool(inflated)},
        "peaks": {
            "t_max": float(p.time[imax]), "p_max": float(p.values[imax]), "u_p_max": float(u[imax]),
            "t_min": float(p.time[imin]), "p_min": float(p.values[imin]), "u_p_min": float(u[imin]),
        },
        "result": {"dynamic_error_bound": float(bound[0])},
    }
    if truth is not None:
        report["truth"] = {"p_max": float(truth.max()), "p_min": float(truth.min()),
                           "rms_error": float(np.sqrt(np.mean((p.values - truth) ** 2)))}
    return {"estimate": p, "spectrum": P, "report": report}


# ---------------------------------------------------------------------------
# ibp


def _synth_ibp(cfg, seeds):
    tr = cfg.params["truth"]
    fs, n = tr["fs"], tr["n"]
    p = SosParams(tr["s0"], tr["delta"], tr["f0"])
    fc = np.linspace(tr["f_cal_max"] / tr["cal_points"], tr["f_cal_max"], tr["cal_points"])
    S = sos_freq_resp(p, fc)
    rng = make_rng(seeds[0])
    ua = tr["unc_amplitude"] * np.abs(S)
    up = np.full(fc.size, tr["unc_phase"])
    amp = np.abs(S) + ua * rng.standard_normal(fc.size)
    ph = np.unwrap(np.angle(S)) + up * rng.standard_normal(fc.size)
    cal = AmpPhaseU(amp, ph, fc, np.diag(np.r_[ua**2, up**2]))
    t = np.arange(n) / fs
    y = 100 + 20 * np.sin(2 * np.pi * 1.2 * t) + 8 * np.sin(2 * np.pi * 2.4 * t + 0.5) \
        + 4 * np.sin(2 * np.pi * 3.6 * t + 1.0)
    x = _freq_domain_response(y, sos_freq_resp(p, np.fft.rfftfreq(n, 1 / fs)))
    x = add_noise(TimeSeriesU(x, 1 / fs), tr["noise"], seed=seeds[1])
    return cal, x, p, y


def run_ibp(cfg):
    tr, fi, de, sm = cfg.params["truth"], cfg.params["fit"], cfg.params["design"], cfg.params["smc"]
    seeds = _seeds(cfg, 6)
    with stage("load"):
        if cfg.inputs:
            if set(cfg.inputs) != {"calibration", "measured"}:
                raise ConfigError("ibp needs 'calibration' and 'measured' inputs")
            cal = read_amp_phase_csv(cfg.inputs["calibration"])
            x = read_timeseries_csv(cfg.inputs["measured"])
            truth = None
            noise = _noise_level(x, "measured")
        else:
            cal, x, truth, y = _synth_ibp(cfg, seeds[:2])
            noise = x.std()
        fs = 1.0 / x.ts
    with stage("fit_sos"):
        F = amp_phase_to_dft(cal)
        est = fit_sos(cal.freqs, F.values, F.cov, draws=fi["fit_draws"], seed=seeds[2])
    with stage("sos_mc_response"):
        grid = np.linspace(0, fs / 2, fi["grid"])
        Hm = sos_mc_response(est, grid, fi["response_draws"], seed=seeds[3])
        H = FreqRespData(Hm.freqs, Hm.values, Hm.cov, fs)
    with stage("lsfir"):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            inv = lsfir(H, de["order"], de["delay"], fs, weights=product_weights(H),
                        mc_draws=de["mc_draws"], seed=seeds[4])
        low = kaiser_lowpass(de["lowpass_order"], de["lowpass_cutoff"], fs, de["beta"])
        flt = inv.cascade(low)
        design_warnings = [str(w.message) for w in caught]
    iir = {}
    if de["iir"]:
        with stage("lsiir"):
            fi_, res, stab = lsiir(H, de["iir_nb"], de["iir_na"], de["iir_delay"], fs)
            iir = {"residual": res, "stabilized": bool(stab), "stable": bool(fi_.is_stable()),
                   "b": fi_.b, "a": fi_.a}
    with stage("fir_unc_filter"):
        y_cf = fir_unc_filter(x, flt)
    with stage("smc_filter"):
        y_smc = smc_filter(x, noise, flt, draws=sm["draws"], seed=seeds[5])
    with stage("agreement"):
        start = transient_length(flt)
        u_cf, u_smc = y_cf.std()[start:], y_smc.std()[start:]
        rel = np.abs(u_cf - u_smc) / u_cf
        Xs = _signal_spectrum(x)
        bound = dynamic_error_bound(flt, sos_freq_resp(est, Xs.freqs), Xs)
    names = ("s0", "delta", "f0")
    fitted = {k: float(v) for k, v in zip(names, est.vector)}
    fitted.update({f"u_{k}": float(v) for k, v in zip(names, est.std())})
    report = {
        "pipeline": {"kind": cfg.kind, "seed": cfg.seed, "synthetic": truth is not None},
        "fit": fitted,
        "filter": {
            "order": flt.nb, "delay_n0": flt.delay_n0,
            "passband_error_inverse": passband_error(H, inv, fs, cal.freqs.max()),
            "design_warnings": "; ".join(design_warnings) or "none",
        },
        "agreement": {
            "transient_samples": start,
            "smc_draws": sm["draws"],
            "max_relative_difference": float(rel.max()),
            "mean_relative_difference": float(rel.mean()),
            "tolerance": sm["tolerance"],
            "within_tolerance": bool(rel.max() <= sm["tolerance"]),
        },
        "result": {"dynamic_error_bound": float(bound[0])},
    }
    if iir:
        report["lsiir"] = iir
    if truth is not None:
        report["truth"] = {k: float(v) for k, v in zip(names, truth.vector)}
        d = flt.delay_n0
        err = y_cf.values[start:] - _delayed(y, d)[start:]
        report["result"]["rms_error"] = float(np.sqrt(np.mean(err**2)))
    return {
        "estimate": y_cf,
        "filter": flt,
        "report": report,
        "extra_series": {"estimate_smc": y_smc},
    }


RUNNERS = {
    "demo_ringing": run_demo_ringing,
    "shock": run_shock,
    "compensate": run_compensate,
    "hydrophone": run_hydrophone,
    "ibp": run_ibp,
}


def execute(cfg):
    """Run the pipeline and return its artifacts without writing files."""
    return RUNNERS[cfg.kind](cfg)


def run_pipeline(cfg):
    """Run the pipeline, write its results and return the artifacts.

    Raises
    ------
    ConfigError
        Invalid configuration or input files.
    StageError
        Numerical failure; ``err.stage`` names the failing stage.
    """
    artifacts = execute(cfg)
    with stage("write_results"):
        write_results(cfg.output, artifacts)
    return artifacts
