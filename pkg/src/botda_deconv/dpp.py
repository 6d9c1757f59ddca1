"""Differential pulse-width pair processing and deconvolution kernels."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core_model import (
    PulseScheme,
    SamplingGrid,
    detuning_parameter,
    envelope,
    envelope_integral,
    min_pair_width_s,
)
from .simulator import BgsMap, ContractError, GainTrace


class ShortPairError(ValueError):
    """Pulse pair too short for the leading-head transient to cancel."""


@dataclass(frozen=True)
class DeconvKernel:
    """Unit-sum convolution kernel; ``samples[m]`` is the response at lag ``m - origin_index``.

    ``scale`` is the sum of the raw (un-normalised) weights.
    """

    samples: np.ndarray
    dt_s: float
    origin_index: int = 0
    pulse: PulseScheme | None = None
    linewidth_hz: float | None = None
    scale: float = 1.0

    def __len__(self):
        return len(self.samples)

    @property
    def support(self) -> tuple[int, int]:
        """Half-open index range of the nonzero weights."""
        nz = np.flatnonzero(np.abs(self.samples) > 0)
        return int(nz[0]), int(nz[-1]) + 1

    @property
    def support_length(self) -> int:
        lo, hi = self.support
        return hi - lo


def differential_trace(long: GainTrace, short: GainTrace) -> GainTrace:
    """Samplewise ``long - short``."""
    if long.grid != short.grid:
        raise ContractError("differential_trace: grids differ")
    if long.probe_offset_hz != short.probe_offset_hz:
        raise ContractError("differential_trace: probe offsets differ")
    if long.pulse.kind != "single" or short.pulse.kind != "single":
        raise ContractError("differential_trace expects two single-pulse traces")
    if not long.pulse.width_long_s > short.pulse.width_long_s:
        raise ContractError("first trace must use the longer pulse")
    if long.normalized != short.normalized:
        raise ContractError("cannot difference a normalised and an un-normalised trace")
    pair = PulseScheme.pair(long.pulse.width_long_s, short.pulse.width_long_s)
    return GainTrace(long.probe_offset_hz, long.samples - short.samples, long.grid, pair,
                     normalized=False, seed=long.seed, delay_s=pair.response_delay_s)


def differential_map(long: BgsMap, short: BgsMap) -> BgsMap:
    """Channelwise ``long - short`` of two maps on identical axes."""
    if long.grid != short.grid or long.n_freqs != short.n_freqs or \
            long.freq_start_hz != short.freq_start_hz or long.freq_step_hz != short.freq_step_hz:
        raise ContractError("differential_map: axes differ")
    if long.pulse.kind != "single" or short.pulse.kind != "single" or \
            not long.pulse.width_long_s > short.pulse.width_long_s:
        raise ContractError("differential_map expects single-pulse maps, longer pulse first")
    pair = PulseScheme.pair(long.pulse.width_long_s, short.pulse.width_long_s)
    return replace(long, data=long.data - short.data, pulse=pair, normalized=False,
                   delay_s=pair.response_delay_s, meta=dict(long.meta))


def align_maps(long: BgsMap, short: BgsMap) -> tuple[BgsMap, BgsMap]:
    """Crop two maps to their common time span.

    Maps simulated or acquired separately can start at different times (the
    lead-in scales with the pulse width); they can be differenced only when
    the sampling interval matches and the offset is a whole number of samples.
    """
    a, b = long.grid, short.grid
    if not np.isclose(a.dt_s, b.dt_s, rtol=1e-9, atol=0.0) or \
            a.group_velocity_m_per_s != b.group_velocity_m_per_s:
        raise ContractError("align_maps: sampling interval or group velocity differ")
    shift = (b.t0_s - a.t0_s) / a.dt_s
    k = int(round(shift))
    if abs(shift - k) > 1e-6:
        raise ContractError("align_maps: time axes are offset by a fraction of a sample")
    i0, j0 = max(k, 0), max(-k, 0)  # first common sample in long / short
    n = min(a.n_samples - i0, b.n_samples - j0)
    if n < 2:
        raise ContractError("align_maps: time axes do not overlap")
    grid = replace(a, n_samples=n, t0_s=a.t0_s + i0 * a.dt_s)
    return (replace(long, data=long.data[:, i0:i0 + n].copy(), grid=grid, meta=dict(long.meta)),
            replace(short, data=short.data[:, j0:j0 + n].copy(), grid=grid, meta=dict(short.meta)))


def pair_envelope(gamma, pair: PulseScheme, t_s):
    """``envelope(T_long) - envelope(T_short)``; for a single pulse, just the envelope."""
    out = envelope(gamma, pair.width_long_s, t_s)
    if pair.kind == "pair":
        out = out - envelope(gamma, pair.width_short_s, t_s)
    return out


def cancellation_bound(width_short_s: float, linewidth_hz: float) -> float:
    """Upper bound ``2 exp(-pi dnu T_short)`` on the detuning dependence of the pair envelope."""
    return 2 * np.exp(-np.pi * linewidth_hz * width_short_s)


def check_pair(pulse: PulseScheme, linewidth_hz: float, allow_short_pair: bool = False):
    if pulse.kind != "pair" or allow_short_pair:
        return
    t_min = min_pair_width_s(linewidth_hz)
    if pulse.width_short_s < t_min * (1 - 1e-9):
        raise ShortPairError(
            f"pulse pair {pulse.label()}: short pulse must be >= {t_min * 1e9:.1f} ns so the "
            f"frequency-dependent leading head of the envelope settles before the pair is "
            f"differenced (40 ns rule at 27 MHz linewidth); pass allow_short_pair to override")


def envelope_kernel(pulse: PulseScheme, linewidth_hz: float, dt_s: float,
                    quadrature: str = "cell") -> DeconvKernel:
    """Real zero-detuning envelope of ``pulse`` sampled at lags ``m * dt``.

    ``quadrature="cell"`` averages the envelope over each ``[m dt, (m+1) dt)``
    lag interval, which is what the exact trace synthesis produces for a
    uniform section; ``"point"`` takes the value at ``m dt``.
    """
    gamma0 = np.pi * linewidth_hz
    n = int(np.ceil(pulse.width_long_s / dt_s - 1e-9))
    lags = dt_s * np.arange(n + 1)
    if quadrature == "cell":
        def cum(w):
            return np.real(envelope_integral(gamma0, w, lags))
        c = cum(pulse.width_long_s)
        if pulse.kind == "pair":
            c = c - cum(pulse.width_short_s)
        raw = np.diff(c) / dt_s
    elif quadrature == "point":
        raw = np.real(pair_envelope(gamma0, pulse, lags[:-1]))
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    raw = np.where(np.abs(raw) < 1e-15, 0.0, raw)
    scale = float(raw.sum())
    return DeconvKernel(raw / scale, dt_s, 0, pulse, linewidth_hz, scale)


def dpp_kernel(pair: PulseScheme, linewidth_hz: float, grid: SamplingGrid | float,
               allow_short_pair: bool = False, quadrature: str = "cell") -> DeconvKernel:
    """Deconvolution kernel of a pulse pair: pair envelope at the BGS peak, unit sum."""
    if pair.kind != "pair":
        raise ContractError("dpp_kernel needs a pulse pair")
    check_pair(pair, linewidth_hz, allow_short_pair)
    dt = grid.dt_s if isinstance(grid, SamplingGrid) else float(grid)
    return envelope_kernel(pair, linewidth_hz, dt, quadrature)


def kernel_for(pulse: PulseScheme, linewidth_hz: float, dt_s: float,
               allow_short_pair: bool = False) -> DeconvKernel:
    if pulse.kind == "pair":
        return dpp_kernel(pulse, linewidth_hz, dt_s, allow_short_pair)
    return envelope_kernel(pulse, linewidth_hz, dt_s)


def leading_head_residual(pulse: PulseScheme, linewidth_hz: float, bfs_hz: float,
                          max_detuning_hz: float = 60e6, n_detunings: int = 241,
                          dt_s: float = 0.05e-9) -> float:
    """``max |pair_envelope(nu) - pair_envelope(nu_B)|`` over detuning and time."""
    nu = bfs_hz + np.linspace(-max_detuning_hz, max_detuning_hz, n_detunings)
    t = np.arange(0.0, pulse.width_long_s + dt_s, dt_s)
    g = detuning_parameter(bfs_hz, nu, linewidth_hz)[:, None]
    g0 = detuning_parameter(bfs_hz, bfs_hz, linewidth_hz)
    diff = pair_envelope(g, pulse, t[None, :]) - pair_envelope(g0, pulse, t)[None, :]
    return float(np.abs(diff).max())
