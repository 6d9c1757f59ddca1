"""Synthesis of detected Brillouin gain traces and BGS maps.

The detected trace is the real part of the spatial integral of envelope times
impulse response.  Because the BFS is piecewise constant, the integral over
each constant segment is evaluated in closed form from the envelope
antiderivative, so the synthetic traces carry no quadrature error.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .core_model import (
    DomainError,
    FiberProfile,
    PulseScheme,
    SamplingGrid,
    detuning_parameter,
    envelope_integral,
)


class ConfigurationError(ValueError):
    """Simulation inputs are mutually inconsistent (e.g. grid shorter than fibre)."""


class ContractError(ValueError):
    """A caller violated an operation's preconditions."""


SNR_CONVENTIONS = {"amplitude": 20.0, "ratio": 10.0}


def snr_to_sigma(snr_db: float, amplitude: float = 1.0, convention: str = "amplitude") -> float:
    """Noise std giving ``snr_db`` for a plateau of ``amplitude``.

    ``amplitude`` convention: ``20 log10(A / sigma)``.  ``ratio`` convention:
    ``10 log10(A / sigma)``, the mean-over-std figure customary in Brillouin
    sensing.
    """
    if np.isinf(snr_db) and snr_db > 0:
        return 0.0
    return amplitude / 10 ** (snr_db / SNR_CONVENTIONS[convention])


def sigma_to_snr(sigma: float, amplitude: float = 1.0, convention: str = "amplitude") -> float:
    if sigma == 0:
        return float("inf")
    return SNR_CONVENTIONS[convention] * np.log10(amplitude / sigma)


@dataclass(frozen=True)
class NoiseSpec:
    target_snr_db: float
    seed: int = 0
    convention: str = "amplitude"

    def __post_init__(self):
        if np.isnan(self.target_snr_db) or self.target_snr_db == -np.inf:
            raise ValueError("target_snr_db must be finite or +inf")
        if self.convention not in SNR_CONVENTIONS:
            raise ValueError(f"unknown SNR convention {self.convention!r}")

    @property
    def sigma(self) -> float:
        return snr_to_sigma(self.target_snr_db, 1.0, self.convention)


def noise_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for sub-stream ``stream`` of ``seed`` (channel, realization, ...)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(stream)))


@dataclass
class GainTrace:
    probe_offset_hz: float
    samples: np.ndarray
    grid: SamplingGrid
    pulse: PulseScheme
    normalized: bool = False
    seed: int | None = None
    delay_s: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.shape != (self.grid.n_samples,):
            raise ContractError(
                f"trace has {self.samples.shape} samples, grid expects {self.grid.n_samples}")

    def positions(self) -> np.ndarray:
        return self.grid.positions(self.delay_s)


@dataclass
class BgsMap:
    """Gain traces over a uniform frequency sweep, stored as ``data[freq, time]``."""

    freq_start_hz: float
    freq_step_hz: float
    data: np.ndarray
    grid: SamplingGrid
    pulse: PulseScheme
    normalized: bool = False
    seed: int | None = None
    delay_s: float = 0.0
    recovered: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.shape[1] != self.grid.n_samples:
            raise ContractError("map width does not match the grid")
        if self.n_freqs > 1 and not self.freq_step_hz > 0:
            raise ContractError("frequency axis must be strictly increasing")

    @property
    def n_freqs(self) -> int:
        return self.data.shape[0]

    @property
    def freqs(self) -> np.ndarray:
        return self.freq_start_hz + self.freq_step_hz * np.arange(self.n_freqs)

    def positions(self) -> np.ndarray:
        return self.grid.positions(self.delay_s)

    def trace(self, i: int) -> GainTrace:
        return GainTrace(float(self.freqs[i]), self.data[i].copy(), self.grid, self.pulse,
                         self.normalized, self.seed, self.delay_s)

    def channel_nearest(self, freq_hz: float) -> int:
        return int(np.argmin(np.abs(self.freqs - freq_hz)))

    def with_data(self, data: np.ndarray, **changes) -> "BgsMap":
        return replace(self, data=data, meta=dict(self.meta), **changes)

    @classmethod
    def from_traces(cls, traces: list[GainTrace]) -> "BgsMap":
        if not traces:
            raise ContractError("no traces")
        first = traces[0]
        for tr in traces[1:]:
            if tr.grid != first.grid or tr.pulse != first.pulse:
                raise ContractError("all traces must share grid and pulse")
        freqs = np.array([tr.probe_offset_hz for tr in traces])
        step = float(freqs[1] - freqs[0]) if len(freqs) > 1 else 0.0
        if len(freqs) > 1 and not np.allclose(np.diff(freqs), step, rtol=1e-9, atol=1e-3):
            raise ContractError("trace frequencies are not uniformly spaced")
        return cls(float(freqs[0]), step, np.stack([tr.samples for tr in traces]), first.grid,
                   first.pulse, first.normalized, first.seed, first.delay_s)


def plateau_amplitude(fiber: FiberProfile, pulse: PulseScheme,
                      group_velocity_m_per_s: float) -> float:
    """Noiseless steady-state trace level of a uniform fibre probed at its BFS."""
    gamma0 = np.pi * fiber.linewidth_hz  # zero detuning: purely real
    h0 = fiber.gain_scale / (2 * gamma0)
    levels = [h0 * group_velocity_m_per_s / 2 * float(np.real(envelope_integral(gamma0, w, w)))
              for w in pulse.widths]
    return levels[0] - (levels[1] if len(levels) > 1 else 0.0)


def _check_grid(fiber: FiberProfile, grid: SamplingGrid):
    t = grid.times()
    if t[0] > 0 or t[-1] < 2 * fiber.length_m / grid.group_velocity_m_per_s:
        raise ConfigurationError(
            f"grid [{t[0]:.3g}, {t[-1]:.3g}] s does not contain the {fiber.length_m} m fibre round trip")


def raw_traces(fiber: FiberProfile, pulse_width_s: float, probe_offsets_hz,
               grid: SamplingGrid) -> np.ndarray:
    """Un-normalised single-pulse traces, shape ``(n_freqs, n_samples)``.

    ``r(t) = sum_s Re{ h_s * V/2 * [P_s(t - 2 a_s / V) - P_s(t - 2 b_s / V)] }``
    over constant-BFS segments ``[a_s, b_s)``.
    """
    _check_grid(fiber, grid)
    nu = np.atleast_1d(np.asarray(probe_offsets_hz, dtype=float))
    segs = np.array(fiber.segments())
    a, b, bfs = segs[:, 0], segs[:, 1], segs[:, 2]
    v = grid.group_velocity_m_per_s
    t = grid.times()
    gamma = detuning_parameter(bfs[None, :], nu[:, None], fiber.linewidth_hz)  # (F, S)
    h = fiber.gain_scale / (2 * np.conj(gamma))
    g = gamma[:, :, None]
    upper = envelope_integral(g, pulse_width_s, t[None, None, :] - 2 * a[None, :, None] / v)
    lower = envelope_integral(g, pulse_width_s, t[None, None, :] - 2 * b[None, :, None] / v)
    r = np.einsum("fs,fst->ft", h * v / 2, upper - lower)
    out = np.real(r)
    # exact causality: nothing arrives before the pulse enters the fibre
    out[:, t < 0] = 0.0
    return out


def simulate_trace(fiber: FiberProfile, pulse: PulseScheme, probe_offset_hz: float,
                   grid: SamplingGrid, normalize: bool = True) -> GainTrace:
    """Single-pulse trace at one pump-probe offset."""
    if pulse.kind != "single":
        raise ContractError("simulate_trace takes a single pulse; use simulate_bgs for pairs")
    samples = raw_traces(fiber, pulse.width_long_s, [probe_offset_hz], grid)[0]
    if normalize:
        samples = samples / plateau_amplitude(fiber, pulse, grid.group_velocity_m_per_s)
    return GainTrace(probe_offset_hz, samples, grid, pulse, normalized=normalize,
                     delay_s=pulse.response_delay_s)


def default_sweep(fiber: FiberProfile, margin_hz: float = 100e6, step_hz: float = 1e6):
    """``(start, step, count)`` spanning every BFS in the fibre +- ``margin_hz``."""
    lo = fiber.bfs_values().min() - margin_hz
    hi = fiber.bfs_values().max() + margin_hz
    count = int(round((hi - lo) / step_hz)) + 1
    return lo, step_hz, count


def noiseless_bgs(fiber: FiberProfile, pulse: PulseScheme, sweep, grid: SamplingGrid) -> BgsMap:
    start, step, count = sweep
    freqs = start + step * np.arange(count)
    if not check_sweep_covers(fiber, freqs):
        warnings.warn("frequency sweep does not cover the fibre BFS range +- 2 linewidths; "
                      "Lorentzian fits will fail downstream", stacklevel=2)
    data = raw_traces(fiber, pulse.width_long_s, freqs, grid)
    if pulse.kind == "pair":
        data = data - raw_traces(fiber, pulse.width_short_s, freqs, grid)
    data = data / plateau_amplitude(fiber, pulse, grid.group_velocity_m_per_s)
    return BgsMap(start, step, data, grid, pulse, normalized=True, delay_s=pulse.response_delay_s)


def noise_block(shape, sigma: float, seed: int, realization: int | None = None) -> np.ndarray:
    """Gaussian noise for a ``(n_freqs, n_samples)`` block, one sub-stream per channel."""
    n_freqs, n = shape
    out = np.empty(shape)
    for ch in range(n_freqs):
        key = (ch,) if realization is None else (realization, ch)
        out[ch] = noise_rng(seed, *key).normal(0.0, sigma, n)
    return out


def simulate_bgs(fiber: FiberProfile, pulse: PulseScheme, sweep, grid: SamplingGrid,
                 noise: NoiseSpec | None = None, realization: int | None = None) -> BgsMap:
    """BGS map over ``sweep = (start_hz, step_hz, count)``.

    Pair schemes are differenced before normalisation, and noise is injected
    on the differential trace.  Channel ``c`` draws noise from sub-stream
    ``(seed, c)`` (or ``(seed, realization, c)``), so results do not depend on
    evaluation order.
    """
    m = noiseless_bgs(fiber, pulse, sweep, grid)
    if noise is not None and noise.sigma > 0:
        m.data = m.data + noise_block(m.data.shape, noise.sigma, noise.seed, realization)
        m.seed = noise.seed
        m.meta["snr_db"] = noise.target_snr_db
        m.meta["snr_convention"] = noise.convention
    return m


def add_noise(trace: GainTrace, noise: NoiseSpec, amplitude: float | None = None,
              stream: tuple[int, ...] = ()) -> GainTrace:
    """Add white Gaussian noise with ``sigma = A_peak / 10^(snr/k)``."""
    if amplitude is None:
        if not trace.normalized:
            raise ContractError("trace is not normalized; pass the plateau amplitude explicitly")
        amplitude = 1.0
    sigma = snr_to_sigma(noise.target_snr_db, amplitude, noise.convention)
    if sigma == 0:
        return replace(trace, samples=trace.samples.copy())
    eta = noise_rng(noise.seed, *stream).normal(0.0, sigma, trace.samples.shape)
    return replace(trace, samples=trace.samples + eta, seed=noise.seed)


def check_sweep_covers(fiber: FiberProfile, freqs) -> bool:
    """True if ``freqs`` spans every BFS of ``fiber`` +- 2 linewidths (1 kHz slack)."""
    freqs = np.asarray(freqs)
    lo, hi = fiber.bfs_values().min(), fiber.bfs_values().max()
    pad = 2 * fiber.linewidth_hz - 1e3
    return bool(freqs[0] <= lo - pad and freqs[-1] >= hi + pad)


__all__ = [
    "BgsMap", "ConfigurationError", "ContractError", "DomainError", "GainTrace", "NoiseSpec",
    "add_noise", "check_sweep_covers", "default_sweep", "noise_block", "noise_rng", "noiseless_bgs", "plateau_amplitude",
    "raw_traces", "sigma_to_snr", "simulate_bgs", "simulate_trace", "snr_to_sigma",
]
