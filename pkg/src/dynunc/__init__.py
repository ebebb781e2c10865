"""
Analysis of dynamic measurements with evaluation of uncertainty.

Signals carry their uncertainty (``TimeSeriesU``), spectra carry the
joint covariance of their real and imaginary parts (``SpectrumU``) and
digital filters carry the covariance of their coefficients
(``DigitalFilterU``). Operations propagate uncertainty either linearly,
in closed form, or by Monte Carlo.
"""

from .core import (
    AmpPhaseU,
    LinearModel,
    SpectrumU,
    StateSpace,
    TimeSeriesU,
    chol_psd,
    cumulative_mean_model,
    linear_propagate,
)
from .dft_unc import (
    DeconvolutionError,
    amp_phase_to_dft,
    dft_deconv,
    dft_multiply,
    dft_to_amp_phase,
    dft_transferfunction,
    gum_dft,
    gum_idft,
)
from .filter_design import (
    FreqRespData,
    group_delay,
    isstable,
    kaiser_lowpass,
    lsfir,
    lsiir,
    savgol,
)
from .filter_unc import (
    DeconvResult,
    DigitalFilterU,
    UnstableFilterError,
    deconvolve,
    dynamic_error_bound,
    fir_unc_filter,
    iir_ss_filter,
    smc_filter,
)
from .mc import MCResult, RunningStats, make_rng, mc_propagate, running_stats_update
from .signals import SignalSpec, add_noise, primitive_signal, shock_like
from .sos import (
    SosParams,
    bilinear_discretize,
    fit_sos,
    sos_freq_resp,
    sos_mc_response,
    sos_phys2filter,
)

__version__ = "0.1.0"
