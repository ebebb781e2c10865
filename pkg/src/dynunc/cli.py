"""
Command-line interface.

Exit codes: 0 on success, 1 for configuration or input errors, 2 for
numerical failures (the failing stage is named on standard error). The
environment variable ``DYNUNC_SEED`` sets the seed used when none is
given.
"""

import argparse
import sys
import warnings

import numpy as np

from .core import SpectrumU, TimeSeriesU
from .dft_unc import dft_deconv, dft_multiply, gum_dft, gum_idft
from .filter_design import kaiser_lowpass, lsfir, lsiir, product_weights
from .filter_unc import fir_unc_filter, iir_ss_filter, smc_filter
from .io import (
    read_filter_json,
    read_response_csv,
    read_timeseries_csv,
    write_filter_json,
    write_report,
    write_spectrum_csv,
    write_timeseries_csv,
)
from .pipelines import (
    DEFAULTS,
    KINDS,
    ConfigError,
    PipelineConfig,
    StageError,
    default_seed,
    run_pipeline,
    stage,
)
from .signals import SignalSpec, add_noise, primitive_signal
from .sos import fit_sos

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class _Formatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    pass


def _seed(args):
    return default_seed() if args.seed is None else args.seed


def _read_ts(path):
    try:
        return read_timeseries_csv(path)
    except (OSError, ValueError) as err:
        raise ConfigError(str(err)) from None


def _read_resp(path, fs=None):
    try:
        return read_response_csv(path, fs)
    except (OSError, ValueError) as err:
        raise ConfigError(str(err)) from None


def cmd_simulate(args):
    params = {}
    for item in args.param or []:
        key, _, value = item.partition("=")
        if not _:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--param {key}: not a number") from None
    if "count" in params:
        params["count"] = int(params["count"])
    try:
        spec = SignalSpec(args.kind, args.fs, args.duration, params)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    with stage("simulate"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            x = primitive_signal(spec)
        x = add_noise(x, args.noise, seed=_seed(args))
        write_timeseries_csv(args.output, x)


def cmd_dft(args):
    x = _read_ts(args.input)
    with stage("gum_dft"):
        F = gum_dft(x)
        write_spectrum_csv(args.output, F)


def cmd_deconv(args):
    x = _read_ts(args.input)
    H = _read_resp(args.response)
    f = np.fft.rfftfreq(x.n, x.ts)
    if H.freqs.size != f.size or not np.allclose(H.freqs, f, rtol=1e-9):
        raise ConfigError("response must be given on the DFT grid of the input signal")
    with stage("gum_dft"):
        X = gum_dft(x)
    with stage("dft_deconv"):
        Hs = SpectrumU(np.r_[H.values.real, H.values.imag], f, H.cov, x.n)
        Y = dft_deconv(X, Hs, args.mag_floor)
    if args.lowpass_cutoff:
        with stage("lowpass"):
            low = kaiser_lowpass(args.lowpass_order, args.lowpass_cutoff, 1 / x.ts, args.beta)
            Hl = np.abs(low.response(f, 1 / x.ts)).astype(complex)
            Y = dft_multiply(Y, SpectrumU.from_complex(Hl, f, None, x.n))
    with stage("gum_idft"):
        y = gum_idft(Y, x.n)
        write_timeseries_csv(args.output, TimeSeriesU(y.values, x.ts, x.t0, y.unc))


def cmd_design_fir(args):
    H = _read_resp(args.response, args.fs)
    with stage("lsfir"):
        w = product_weights(H) if args.weights == "product" else None
        flt = lsfir(H, args.order, args.delay, args.fs, weights=w, inv=not args.forward,
                    mc_draws=args.mc_draws, seed=_seed(args))
        if args.lowpass_cutoff:
            flt = flt.cascade(kaiser_lowpass(args.lowpass_order, args.lowpass_cutoff,
                                             args.fs, args.beta))
        write_filter_json(args.output, flt)


def cmd_design_iir(args):
    H = _read_resp(args.response, args.fs)
    with stage("lsiir"):
        flt, res, stab = lsiir(H, args.nb, args.na, args.delay, args.fs, args.max_iter,
                               inv=not args.forward)
        write_filter_json(args.output, flt, {"residual": res, "stabilized": stab})


def cmd_fit_sos(args):
    H = _read_resp(args.response)
    with stage("fit_sos"):
        p = fit_sos(H.freqs, H.values, H.cov, weighting=args.weighting,
                    draws=args.draws, seed=_seed(args))
    u = p.std()
    report = {"sos": {"s0": p.s0, "delta": p.delta, "f0": p.f0,
                      "u_s0": u[0], "u_delta": u[1], "u_f0": u[2]}}
    if args.output:
        write_report(args.output, report)
    else:
        for k, v in report["sos"].items():
            print(f"{k} = {v:.17g}")


def cmd_filter(args):
    x = _read_ts(args.input)
    try:
        flt = read_filter_json(args.filter)
    except (OSError, ValueError) as err:
        raise ConfigError(str(err)) from None
    with stage("filter"):
        if args.smc:
            noise = x.std()
            y = smc_filter(x, noise, flt, draws=args.draws, seed=_seed(args))
        elif flt.is_fir:
            y = fir_unc_filter(x, flt)
        else:
            y = iir_ss_filter(x, flt)
        write_timeseries_csv(args.output, y)


def cmd_pipeline(args):
    if args.defaults:
        print(PipelineConfig(args.defaults, output="results").to_ini(), end="")
        return
    if not args.config:
        raise ConfigError("a config file (or --defaults KIND) is required")
    cfg = PipelineConfig.from_file(args.config, args.output, args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        artifacts = run_pipeline(cfg)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"{cfg.kind}: results written to {cfg.output}")
    return artifacts


def _defaults_text():
    lines = ["pipeline defaults (section: key=value):"]
    for kind, sections in DEFAULTS.items():
        lines.append(f"  {kind}")
        for sec, vals in sections.items():
            lines.append(f"    [{sec}] " + ", ".join(f"{k}={v}" for k, v in vals.items()))
    return "\n".join(lines)


def build_parser():
    p = argparse.ArgumentParser(
        prog="dynunc",
        description="Analysis of dynamic measurements with uncertainty evaluation.",
        formatter_class=_Formatter,
        epilog="exit codes: 0 success, 1 configuration error, 2 numerical failure. "
        "DYNUNC_SEED sets the default seed.",
    )
    sub = p.add_subparsers(dest="verb", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_, formatter_class=_Formatter)
        sp.add_argument("--seed", type=int, default=None, help="random seed (default: DYNUNC_SEED or 12345)")
        return sp

    sp = add("simulate", "generate a test signal")
    sp.add_argument("kind", choices=["shock", "gauss", "rect", "squarepulse", "sine"])
    sp.add_argument("--fs", type=float, default=1000.0, help="sampling rate in Hz")
    sp.add_argument("--duration", type=float, default=1.0, help="duration in s")
    sp.add_argument("--param", action="append", metavar="KEY=VALUE",
                    help="signal parameter, e.g. t0=0.5 sigma=0.01 m0=1")
    sp.add_argument("--noise", type=float, default=0.0, help="white noise standard deviation")
    sp.add_argument("-o", "--output", default="signal.csv")
    sp.set_defaults(func=cmd_simulate)

    sp = add("dft", "DFT of a signal with covariance propagation")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", default="spectrum.csv")
    sp.set_defaults(func=cmd_dft)

    sp = add("deconv", "frequency-domain deconvolution with an optional low-pass")
    sp.add_argument("input", help="measured signal CSV")
    sp.add_argument("response", help="frequency response CSV on the DFT grid")
    sp.add_argument("--mag-floor", type=float, default=1e-6, help="relative magnitude floor of H")
    sp.add_argument("--lowpass-cutoff", type=float, default=0.0, help="low-pass cutoff in Hz (0: none)")
    sp.add_argument("--lowpass-order", type=int, default=64)
    sp.add_argument("--beta", type=float, default=8.0, help="Kaiser window parameter")
    sp.add_argument("-o", "--output", default="estimate.csv")
    sp.set_defaults(func=cmd_deconv)

    sp = add("design-fir", "least-squares FIR deconvolution filter")
    sp.add_argument("response", help="frequency response CSV")
    sp.add_argument("--fs", type=float, required=True, help="sampling rate in Hz")
    sp.add_argument("--order", type=int, default=48)
    sp.add_argument("--delay", type=int, default=24, help="delay in samples")
    sp.add_argument("--weights", choices=["uniform", "product"], default="uniform")
    sp.add_argument("--forward", action="store_true", help="fit the response instead of its inverse")
    sp.add_argument("--mc-draws", type=int, default=None, help="draws for coefficient covariance")
    sp.add_argument("--lowpass-cutoff", type=float, default=0.0, help="cascade a low-pass (Hz, 0: none)")
    sp.add_argument("--lowpass-order", type=int, default=64)
    sp.add_argument("--beta", type=float, default=8.0)
    sp.add_argument("-o", "--output", default="filter.json")
    sp.set_defaults(func=cmd_design_fir)

    sp = add("design-iir", "least-squares IIR deconvolution filter")
    sp.add_argument("response")
    sp.add_argument("--fs", type=float, required=True)
    sp.add_argument("--nb", type=int, default=4)
    sp.add_argument("--na", type=int, default=2)
    sp.add_argument("--delay", type=int, default=0)
    sp.add_argument("--max-iter", type=int, default=10)
    sp.add_argument("--forward", action="store_true")
    sp.add_argument("-o", "--output", default="filter.json")
    sp.set_defaults(func=cmd_design_iir)

    sp = add("fit-sos", "fit a second-order system to a frequency response")
    sp.add_argument("response")
    sp.add_argument("--weighting", action="store_true", help="inverse-variance weighting")
    sp.add_argument("--draws", type=int, default=2000, help="Monte Carlo refits")
    sp.add_argument("-o", "--output", default=None, help="report file (default: stdout)")
    sp.set_defaults(func=cmd_fit_sos)

    sp = add("filter", "apply a digital filter with uncertainty propagation")
    sp.add_argument("input")
    sp.add_argument("filter", help="filter JSON")
    sp.add_argument("--smc", action="store_true", help="sequential Monte Carlo")
    sp.add_argument("--draws", type=int, default=10000)
    sp.add_argument("-o", "--output", default="estimate.csv")
    sp.set_defaults(func=cmd_filter)

    sp = sub.add_parser("pipeline", help="run a configured pipeline",
                        description="run a configured pipeline", epilog=_defaults_text(),
                        formatter_class=_Formatter)
    sp.add_argument("config", nargs="?", help="INI configuration file")
    sp.add_argument("--seed", type=int, default=None, help="overrides the configured seed")
    sp.add_argument("--output", default=None, help="overrides the configured output directory")
    sp.add_argument("--defaults", choices=KINDS, help="print the default configuration of a kind")
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as err:
        print(f"numerical failure in stage '{err.stage}': {err.error}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
