"""Simulation and total-variation deconvolution of BOTDA gain traces.

Forward model (``core_model``, ``simulator``), differential pulse-width pair
processing (``dpp``), TV deconvolution (``tv_deconv``), Lorentzian BFS
extraction and metrics (``analysis``, ``resolution``), file formats (``io``)
and the figure experiments and command line (``experiments``, ``cli``).
"""
from .analysis import (
    BfsProfile,
    LorentzFit,
    MetricsReport,
    bfs_degradation,
    bfs_profile,
    central_third,
    fit_lorentzian,
    max_systematic_error,
    pre_hotspot_regions,
    snr_time_trace,
)
from .core_model import (
    DEFAULT_GROUP_VELOCITY,
    DEFAULT_LINEWIDTH_HZ,
    DomainError,
    FiberProfile,
    Hotspot,
    PulseScheme,
    SamplingGrid,
    detuning_parameter,
    envelope,
    envelope_integral,
    impulse_response_density,
)
from .dpp import (
    DeconvKernel,
    ShortPairError,
    cancellation_bound,
    differential_map,
    differential_trace,
    dpp_kernel,
    envelope_kernel,
    kernel_for,
)
from .simulator import (
    BgsMap,
    ConfigurationError,
    ContractError,
    GainTrace,
    NoiseSpec,
    add_noise,
    noiseless_bgs,
    simulate_bgs,
    simulate_trace,
    snr_to_sigma,
)
from .tv_deconv import DeconvConfig, RecoveredProfile, objective, solve_tv, tv_deconvolve, tv_norm

__version__ = "0.1.0"
