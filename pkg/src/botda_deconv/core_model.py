"""Closed-form Brillouin interaction quantities.

Frequencies are in Hz, times in s, lengths in m.  The detuning parameter is
carried as a numpy complex number (``.real`` / ``.imag``) and everything is
vectorised over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_LINEWIDTH_HZ = 27e6
DEFAULT_GROUP_VELOCITY = 2.0e8
# pi * linewidth * T at which the leading-head transient is considered settled;
# 40 ns for a 27 MHz linewidth.
SETTLED_DECAY_EXPONENT = np.pi * 27e6 * 40e-9


class DomainError(ValueError):
    """An input lies outside the domain of a model function."""


@dataclass(frozen=True)
class Hotspot:
    start_m: float
    length_m: float
    bfs_hz: float

    @property
    def end_m(self) -> float:
        return self.start_m + self.length_m


@dataclass(frozen=True)
class FiberProfile:
    """Piecewise-constant BFS map along the fibre (the sensed ground truth)."""

    length_m: float
    base_bfs_hz: float
    hotspots: tuple[Hotspot, ...] = ()
    linewidth_hz: float = DEFAULT_LINEWIDTH_HZ
    gain_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hotspots", tuple(self.hotspots))
        if not self.length_m > 0:
            raise DomainError(f"fiber length must be positive, got {self.length_m}")
        if not self.linewidth_hz > 0:
            raise DomainError(f"linewidth must be positive, got {self.linewidth_hz}")
        prev_end = 0.0
        for i, h in enumerate(self.hotspots):
            if h.length_m <= 0:
                raise DomainError(f"hotspot {i} has non-positive length")
            if h.start_m < prev_end - 1e-12:
                raise DomainError(f"hotspot {i} overlaps its predecessor or is out of order")
            if h.end_m > self.length_m + 1e-12:
                raise DomainError(f"hotspot {i} extends past the fiber end")
            prev_end = h.end_m

    def bfs_at(self, z_m):
        z = np.asarray(z_m, dtype=float)
        out = np.full(z.shape, self.base_bfs_hz)
        for h in self.hotspots:
            out = np.where((z >= h.start_m) & (z < h.end_m), h.bfs_hz, out)
        return out if out.ndim else float(out)

    def segments(self) -> list[tuple[float, float, float]]:
        """Constant-BFS intervals ``(start_m, end_m, bfs_hz)`` tiling ``[0, length_m]``."""
        segs = []
        pos = 0.0
        for h in self.hotspots:
            if h.start_m > pos:
                segs.append((pos, h.start_m, self.base_bfs_hz))
            segs.append((h.start_m, h.end_m, h.bfs_hz))
            pos = h.end_m
        if pos < self.length_m:
            segs.append((pos, self.length_m, self.base_bfs_hz))
        return segs

    def bfs_values(self) -> np.ndarray:
        return np.unique([self.base_bfs_hz] + [h.bfs_hz for h in self.hotspots])

    def with_gain_scale(self, gain_scale: float) -> "FiberProfile":
        return FiberProfile(self.length_m, self.base_bfs_hz, self.hotspots,
                            self.linewidth_hz, gain_scale)


@dataclass(frozen=True)
class SamplingGrid:
    """Uniform time axis of a detected trace.

    ``t0_s`` is the time of sample 0 relative to the pulse entering the fibre,
    so a negative value gives a lead-in before the fibre.
    """

    dt_s: float
    n_samples: int
    group_velocity_m_per_s: float = DEFAULT_GROUP_VELOCITY
    t0_s: float = 0.0

    def __post_init__(self):
        if not self.dt_s > 0:
            raise DomainError("dt_s must be positive")
        if self.n_samples < 2:
            raise DomainError("a grid needs at least 2 samples")

    @property
    def dz_m(self) -> float:
        return self.group_velocity_m_per_s * self.dt_s / 2

    @property
    def sample_rate_hz(self) -> float:
        return 1.0 / self.dt_s

    @property
    def lead_in_samples(self) -> int:
        return int(round(-self.t0_s / self.dt_s))

    def times(self) -> np.ndarray:
        return self.t0_s + self.dt_s * np.arange(self.n_samples)

    def positions(self, delay_s: float = 0.0) -> np.ndarray:
        """Fibre position of each sample when the response is delayed by ``delay_s``."""
        return self.group_velocity_m_per_s * (self.times() - delay_s) / 2

    @classmethod
    def covering(cls, fiber_length_m: float, sample_rate_hz: float, pulse_width_s: float,
                 group_velocity_m_per_s: float = DEFAULT_GROUP_VELOCITY) -> "SamplingGrid":
        """Grid spanning the round trip plus one pulse width of lead-in and lead-out."""
        dt = 1.0 / sample_rate_hz
        lead = int(np.ceil(pulse_width_s / dt - 1e-9))
        body = int(np.ceil(2 * fiber_length_m / group_velocity_m_per_s / dt - 1e-9))
        return cls(dt, body + 2 * lead + 1, group_velocity_m_per_s, -lead * dt)


@dataclass(frozen=True)
class PulseScheme:
    kind: str  # "single" or "pair"
    width_long_s: float
    width_short_s: float | None = None

    def __post_init__(self):
        if self.kind not in ("single", "pair"):
            raise DomainError(f"unknown pulse kind {self.kind!r}")
        if not self.width_long_s > 0:
            raise DomainError("pulse width must be positive")
        if self.kind == "pair":
            if self.width_short_s is None or not 0 < self.width_short_s < self.width_long_s:
                raise DomainError("pair needs 0 < width_short_s < width_long_s")

    @classmethod
    def single(cls, width_s: float) -> "PulseScheme":
        return cls("single", width_s)

    @classmethod
    def pair(cls, width_long_s: float, width_short_s: float) -> "PulseScheme":
        return cls("pair", width_long_s, width_short_s)

    @property
    def widths(self) -> tuple[float, ...]:
        if self.kind == "single":
            return (self.width_long_s,)
        return (self.width_long_s, self.width_short_s)

    @property
    def effective_duration_s(self) -> float:
        if self.kind == "single":
            return self.width_long_s
        return self.width_long_s - self.width_short_s

    def effective_resolution_m(self, group_velocity_m_per_s: float = DEFAULT_GROUP_VELOCITY) -> float:
        return group_velocity_m_per_s * self.effective_duration_s / 2

    @property
    def response_delay_s(self) -> float:
        """Centre of the time window over which a point of fibre contributes."""
        if self.kind == "single":
            return self.width_long_s / 2
        return (self.width_long_s + self.width_short_s) / 2

    def label(self) -> str:
        ns = [f"{w * 1e9:g}" for w in self.widths]
        return "/".join(ns) + " ns"


def detuning_parameter(bfs_hz, probe_offset_hz, linewidth_hz):
    """Complex rate ``i*pi*(nu_B^2 - nu^2 - i*nu*dnu_B)/nu``.

    The real part is exactly ``pi*linewidth``; the imaginary part is
    ``pi*(nu_B^2 - nu^2)/nu`` (roughly ``-2*pi*detuning``).
    """
    nu_b = np.asarray(bfs_hz, dtype=float)
    nu = np.asarray(probe_offset_hz, dtype=float)
    dnu = np.asarray(linewidth_hz, dtype=float)
    if np.any(nu_b <= 0) or np.any(nu <= 0) or np.any(dnu <= 0):
        raise DomainError("detuning_parameter needs strictly positive frequencies")
    imag = np.pi * (nu_b - nu) * (nu_b + nu) / nu
    real = np.broadcast_to(np.pi * dnu, imag.shape)
    out = real + 1j * imag
    return out if out.ndim else complex(out)


def envelope(gamma, pulse_width_s: float, t_s):
    """Gain temporal envelope ``{1 - exp(-conj(gamma) t)}`` gated to ``[0, T)``."""
    if not pulse_width_s > 0:
        raise DomainError("pulse width must be positive")
    t = np.asarray(t_s, dtype=float)
    g = np.conj(np.asarray(gamma, dtype=complex))
    gate = (t >= 0) & (t < pulse_width_s)
    tt = np.where(gate, t, 0.0)
    out = np.where(gate, -np.expm1(-g * tt), 0.0 + 0.0j)
    return out if out.ndim else complex(out)


def envelope_integral(gamma, pulse_width_s: float, tau_s):
    """Antiderivative ``P(tau) = int_0^tau envelope(s) ds`` with the gate applied.

    Constant ``P(T)`` for ``tau >= T`` and zero for ``tau <= 0``.
    """
    g = np.conj(np.asarray(gamma, dtype=complex))
    c = np.clip(np.asarray(tau_s, dtype=float), 0.0, pulse_width_s)
    x = g * c
    # P = c * psi(x), psi(x) = (e^{-x} - 1 + x) / x; Taylor series where the
    # closed form cancels (relative error below 1e-13 either side of |x| = 0.01)
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    series = 0.0
    for k in range(9, 1, -1):  # sum_{k>=2} (-1)^k x^(k-1) / k!, Horner form
        series = series * x + (-1) ** k / math.factorial(k)
    psi = np.where(small, series * x, (np.expm1(-xs) + xs) / xs)
    return c * psi


def impulse_response_density(fiber: FiberProfile, z_m, probe_offset_hz):
    """Per-metre impulse response ``kappa / (2 conj(Gamma_A(z)))``."""
    z = np.asarray(z_m, dtype=float)
    if np.any(z < 0) or np.any(z > fiber.length_m):
        raise DomainError(f"position outside [0, {fiber.length_m}] m")
    gamma = detuning_parameter(fiber.bfs_at(z), probe_offset_hz, fiber.linewidth_hz)
    return fiber.gain_scale / (2 * np.conj(gamma))


def steady_state_gain(bfs_hz, probe_offset_hz, linewidth_hz):
    """Real steady-state gain ``Re(1 / (2 conj(Gamma_A)))`` relative to zero detuning.

    Equals ``1 / (1 + (2 * detuning / linewidth)^2)`` up to the small ``nu_B+nu``
    asymmetry of the exact detuning parameter.
    """
    gamma = detuning_parameter(bfs_hz, probe_offset_hz, linewidth_hz)
    return np.real(np.pi * np.asarray(linewidth_hz) / np.conj(gamma))


def min_pair_width_s(linewidth_hz: float) -> float:
    """Shortest pulse for which the leading-head transient has settled (40 ns at 27 MHz)."""
    return SETTLED_DECAY_EXPONENT / (np.pi * linewidth_hz)
