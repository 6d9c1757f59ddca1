"""Monte Carlo hotspot study: BFS degradation and post-deconvolution SNR versus mu.

One study fixes a fibre with a single hotspot, a pulse pair, a sampling rate
and a set of noise realizations.  Every mu evaluation deconvolves the same
noisy maps (common random numbers), so degradation(mu) and SNR(mu) are
smooth functions of mu and can be searched reliably.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import BfsProfile, bfs_degradation, central_third, fit_lorentzian
from .core_model import (
    DEFAULT_GROUP_VELOCITY,
    DEFAULT_LINEWIDTH_HZ,
    DomainError,
    FiberProfile,
    Hotspot,
    PulseScheme,
    SamplingGrid,
)
from .dpp import kernel_for
from .simulator import SNR_CONVENTIONS, noise_block, noiseless_bgs, plateau_amplitude, snr_to_sigma
from .tv_deconv import DeconvConfig, solve_tv

MU_BOUNDS = (1e-4, 1e4)


@dataclass(frozen=True)
class HotspotScenario:
    """Single-hotspot fibre used by the resolution and sampling-rate studies.

    The defaults put the hotspot at 10.05 m so that even a 500 MSa/s grid has
    three samples inside a 0.5 m hotspot, and keep 1-8 m as a uniform
    reference section for the SNR.
    """

    hotspot_length_m: float = 1.0
    hotspot_start_m: float = 10.05
    fiber_length_m: float = 13.0
    base_bfs_hz: float = 10.8e9
    hotspot_shift_hz: float = 30e6
    linewidth_hz: float = DEFAULT_LINEWIDTH_HZ
    width_long_s: float = 60e-9
    width_short_s: float = 40e-9
    sample_rate_hz: float = 1e9
    group_velocity_m_per_s: float = DEFAULT_GROUP_VELOCITY
    sweep: tuple = (10.745e9, 3.5e6, 41)
    input_snr_db: float = 23.0
    snr_convention: str = "ratio"
    realizations: int = 100
    seed: int = 0
    reference_m: tuple = (1.0, 8.0)

    def fiber(self) -> FiberProfile:
        h = Hotspot(self.hotspot_start_m, self.hotspot_length_m, self.base_bfs_hz + self.hotspot_shift_hz)
        return FiberProfile(self.fiber_length_m, self.base_bfs_hz, (h,), self.linewidth_hz)

    def pulse(self) -> PulseScheme:
        return PulseScheme.pair(self.width_long_s, self.width_short_s)

    def grid(self) -> SamplingGrid:
        return SamplingGrid.covering(self.fiber_length_m, self.sample_rate_hz, self.width_long_s,
                                     self.group_velocity_m_per_s)

    @property
    def sigma(self) -> float:
        return snr_to_sigma(self.input_snr_db, 1.0, self.snr_convention)

    @classmethod
    def from_config(cls, cfg, **overrides) -> "HotspotScenario":
        """Scenario from a :class:`~botda_deconv.io.ScenarioConfig` with one hotspot."""
        if len(cfg.hotspots) != 1:
            raise DomainError(f"a hotspot study needs exactly one hotspot, config has {len(cfg.hotspots)}")
        if cfg.pulse.kind != "pair":
            raise DomainError("the hotspot study uses a pulse pair")
        h = cfg.hotspots[0]
        kw = dict(
            hotspot_length_m=h.length_m, hotspot_start_m=h.start_m, fiber_length_m=cfg.fiber.length_m,
            base_bfs_hz=cfg.fiber.base_bfs_ghz * 1e9,
            hotspot_shift_hz=h.bfs_ghz * 1e9 - cfg.fiber.base_bfs_ghz * 1e9,
            linewidth_hz=cfg.fiber.linewidth_mhz * 1e6,
            width_long_s=cfg.pulse.width_long_ns / 1e9, width_short_s=cfg.pulse.width_short_ns / 1e9,
            sample_rate_hz=cfg.grid.sample_rate_gsps * 1e9,
            group_velocity_m_per_s=cfg.grid.group_velocity_m_per_s, sweep=cfg.sweep_tuple(),
            input_snr_db=cfg.noise.snr_db, snr_convention=cfg.noise.convention,
            realizations=cfg.noise.realizations, seed=cfg.noise.seed,
        )
        kw.update(overrides)
        return cls(**kw)


def dpp_baseline_snr_db(resolution_m: float, scenario: HotspotScenario) -> float:
    """SNR of a conventional DPP measurement with spatial resolution ``resolution_m``.

    The pair is ``(T_long, T_long - 2 L / V)``; every trace carries the same
    noise as the ``T_long/T_short`` raw data, so only the differential
    plateau changes.
    """
    dT = 2 * resolution_m / scenario.group_velocity_m_per_s
    if not 0 < dT < scenario.width_long_s:
        raise DomainError(f"no pulse pair with long width {scenario.width_long_s} s gives {resolution_m} m")
    fiber = scenario.fiber()
    v = scenario.group_velocity_m_per_s
    ref = plateau_amplitude(fiber, scenario.pulse(), v)
    base = plateau_amplitude(fiber, PulseScheme.pair(scenario.width_long_s, scenario.width_long_s - dT), v)
    return scenario.input_snr_db + SNR_CONVENTIONS[scenario.snr_convention] * math.log10(base / ref)


@dataclass
class Evaluation:
    mu: float
    degradation_hz: float | None = None
    snr_db: float | None = None
    converged: bool = True
    iterations: int = 0
    fit_failures: int = 0
    profile: BfsProfile | None = None  # realization-averaged BFS around the hotspot


class HotspotStudy:
    """Noisy maps for one fibre plus cached deconvolutions keyed by mu.

    ``hotspot_id`` selects the hotspot whose central third defines the
    degradation; ``reference_m`` is the uniform section used for the SNR.
    The averaged BFS profile is kept for the hotspot plus ``window_m`` on
    either side.  ``degradation_realizations`` limits the (all-channel)
    degradation runs to the first realizations; the SNR always uses all.
    """

    def __init__(self, fiber: FiberProfile, pulse: PulseScheme, grid: SamplingGrid, sweep,
                 sigma: float, realizations: int, seed: int = 0, hotspot_id: int = 0,
                 reference_m: tuple = (1.0, 8.0), convention: str = "ratio",
                 solver: DeconvConfig | None = None, allow_short_pair: bool = False,
                 window_m: float = 1.0, degradation_realizations: int | None = None):
        self.solver = solver or DeconvConfig(mu=1.0, max_iters=3000)
        self.fiber, self.grid, self.pulse = fiber, grid, pulse
        self.hotspot_id = hotspot_id
        self.convention = convention
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            self.clean = noiseless_bgs(fiber, pulse, sweep, grid)
        self.kernel = kernel_for(pulse, fiber.linewidth_hz, grid.dt_s, allow_short_pair)
        self.positions = grid.positions(grid.dt_s / 2)
        self.freqs = self.clean.freqs
        self.peak = self.clean.channel_nearest(fiber.base_bfs_hz)
        lo, hi = reference_m
        ref = np.flatnonzero((self.positions >= lo) & (self.positions < hi))
        if ref.size < 2:
            raise DomainError(f"reference section {reference_m} m holds no samples")
        self.section = (int(ref[0]), int(ref[-1]) + 1)
        # raises DomainError when the hotspot spans fewer than 3 samples
        self.centre = central_third(self.positions, fiber, hotspot_id)
        h = fiber.hotspots[hotspot_id]
        self.window = np.flatnonzero((self.positions >= h.start_m - window_m) &
                                     (self.positions < h.end_m + window_m))
        self._centre_in_window = np.isin(self.window, self.centre)
        nf, n = self.clean.data.shape
        self.noisy = np.empty((n, nf, realizations))  # time x channel x realization
        for r in range(realizations):
            self.noisy[:, :, r] = (self.clean.data + noise_block((nf, n), sigma, seed, r)).T
        self.n_degradation = min(degradation_realizations or realizations, realizations)
        self.evals: dict[float, Evaluation] = {}
        self._states: dict[tuple[str, float], tuple] = {}

    @classmethod
    def from_scenario(cls, sc: HotspotScenario, solver: DeconvConfig | None = None,
                      degradation_realizations: int | None = None) -> "HotspotStudy":
        return cls(sc.fiber(), sc.pulse(), sc.grid(), sc.sweep, sc.sigma, sc.realizations, sc.seed,
                   0, sc.reference_m, sc.snr_convention, solver,
                   degradation_realizations=degradation_realizations)

    # -- deconvolution with warm starts -------------------------------------------------
    def _solve(self, tag: str, G: np.ndarray, mu: float):
        init = None
        near = [m for (t, m) in self._states if t == tag]
        if near:
            m0 = min(near, key=lambda m: abs(math.log(m / mu)))
            F, Z, U, rho = self._states[(tag, m0)]
            init = (F, Z, U * (mu / m0), rho)
        F, info = solve_tv(G, self.kernel, replace(self.solver, mu=mu), init=init)
        self._states[(tag, mu)] = info.state
        mine = [key for key in self._states if key[0] == tag]
        for key in mine[:-3]:  # keep the three most recent warm starts per kind
            del self._states[key]
        return F, info

    def _peak_columns(self):
        clean = self.clean.data[self.peak][:, None]
        return np.concatenate([clean, self.noisy[:, self.peak, :]], axis=1)

    def snr(self, mu: float) -> Evaluation:
        """Oracle SNR of the recovered peak-frequency trace over the reference section."""
        ev = self.evals.setdefault(mu, Evaluation(mu))
        if ev.snr_db is None:
            F, info = self._solve("peak", self._peak_columns(), mu)
            i0, i1 = self.section
            ref = F[i0:i1, :1]
            noise = F[i0:i1, 1:] - ref
            amp = float(np.mean(ref))
            # std along each recovered trace (as for a single measurement), pooled as RMS
            sigma = float(np.sqrt(np.mean(np.var(noise, axis=0))))
            k = SNR_CONVENTIONS[self.convention]
            ev.snr_db = float("inf") if sigma == 0 else k * math.log10(amp / sigma)
            ev.converged &= info.all_converged
            ev.iterations = max(ev.iterations, int(info.iterations.max()))
        return ev

    def mean_profile(self, mu: float) -> BfsProfile:
        return self.degradation(mu).profile

    def degradation(self, mu: float) -> Evaluation:
        """Degradation of the realization-averaged BFS profile (and the SNR on the way)."""
        ev = self.evals.setdefault(mu, Evaluation(mu))
        if ev.degradation_hz is None:
            n, nf, _ = self.noisy.shape
            R = self.n_degradation
            G = self.noisy[:, :, :R].reshape(n, nf * R)
            F, info = self._solve("all", G, mu)
            F = F.reshape(n, nf, R)
            idx = self.window
            profiles = []
            failures = 0
            for r in range(R):
                fit = fit_lorentzian(self.freqs, F[idx, :, r].T)
                failures += int(np.count_nonzero(~fit.ok[self._centre_in_window]))
                profiles.append(BfsProfile(self.positions[idx], fit.bfs_hz, fit.peak_gain,
                                           fit.fwhm_hz, fit.residual_rms, fit.ok))
            ev.profile = BfsProfile.mean(profiles)
            ev.degradation_hz = bfs_degradation(ev.profile, self.fiber, self.hotspot_id)
            ev.fit_failures = failures
            ev.converged &= info.all_converged
            ev.iterations = max(ev.iterations, int(info.iterations.max()))
        return ev


@dataclass
class SearchResult:
    target: float
    mu: float
    value: float
    status: str  # "ok", "saturated" (target beyond the upper mu bound), "unreachable" (below the lower)
    evaluations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def search_mu(fn, target: float, rel_tol: float = 0.05, abs_tol: float = 0.0,
              mu0: float = 1.0, bounds=MU_BOUNDS, max_evals: int = 40) -> SearchResult:
    """Find ``mu`` with ``fn(mu) = target`` for ``fn`` increasing in ``mu``.

    Geometric bracketing from ``mu0`` (factor 10) inside ``bounds``, then
    bisection on ``log mu`` with a secant guess in ``(log mu, value)`` when it
    lands well inside the bracket.  Stops once ``|fn - target| <=
    max(rel_tol |target|, abs_tol)``.
    """
    tol = max(rel_tol * abs(target), abs_tol)
    lo_b, hi_b = bounds
    seen = []

    def f(mu):
        v = float(fn(mu))
        seen.append((mu, v))
        return v

    def done(mu, v, status="ok"):
        return SearchResult(target, mu, v, status, sorted(seen))

    mu = min(max(mu0, lo_b), hi_b)
    v = f(mu)
    if abs(v - target) <= tol:
        return done(mu, v)
    if v < target:
        lo, vlo = mu, v
        while True:
            if mu >= hi_b:
                return done(mu, v, "saturated")
            mu = min(mu * 10, hi_b)
            v = f(mu)
            if abs(v - target) <= tol:
                return done(mu, v)
            if v > target:
                hi, vhi = mu, v
                break
            lo, vlo = mu, v
    else:
        hi, vhi = mu, v
        while True:
            if mu <= lo_b:
                return done(mu, v, "unreachable")
            mu = max(mu / 10, lo_b)
            v = f(mu)
            if abs(v - target) <= tol:
                return done(mu, v)
            if v < target:
                lo, vlo = mu, v
                break
            hi, vhi = mu, v

    best = min(seen, key=lambda p: abs(p[1] - target))
    for _ in range(max_evals - len(seen)):
        a, b = math.log(lo), math.log(hi)
        x = (a + b) / 2
        if vhi != vlo:
            s = a + (target - vlo) * (b - a) / (vhi - vlo)
            # keep the secant step away from the bracket ends
            if a + 0.1 * (b - a) < s < b - 0.1 * (b - a):
                x = s
        mu = math.exp(x)
        v = f(mu)
        if abs(v - target) < abs(best[1] - target):
            best = (mu, v)
        if abs(v - target) <= tol:
            return done(mu, v)
        if v < target:
            lo, vlo = mu, v
        else:
            hi, vhi = mu, v
        if b - a < 1e-9:
            break
    return done(best[0], best[1], "not-converged")


@dataclass
class ResolutionPoint:
    hotspot_length_m: float
    tolerance_hz: float
    mu: float
    degradation_hz: float
    snr_db: float
    baseline_snr_db: float
    status: str

    @property
    def improvement_db(self) -> float:
        return self.snr_db - self.baseline_snr_db


def find_spatial_resolution(scenario: HotspotScenario, degradation_tolerance_hz,
                            lengths_m=(0.5, 0.75, 1.0, 1.25, 1.5),
                            solver: DeconvConfig | None = None, mu0: float = 1.0,
                            progress=None) -> list[ResolutionPoint]:
    """For each hotspot length, the mu at which the averaged-profile degradation
    equals each tolerance (within 5%), and the SNR reached there.

    ``degradation_tolerance_hz`` may be a scalar or a sequence; tolerances for
    one length share the same noise realizations and mu evaluations.
    """
    tols = np.atleast_1d(np.asarray(degradation_tolerance_hz, dtype=float))
    out = []
    for L in lengths_m:
        study = HotspotStudy.from_scenario(replace(scenario, hotspot_length_m=float(L)), solver)
        base = dpp_baseline_snr_db(L, scenario)
        guess = mu0
        for tol in sorted(tols):
            if math.isinf(tol):
                res = SearchResult(tol, MU_BOUNDS[1], study.degradation(MU_BOUNDS[1]).degradation_hz,
                                   "saturated")
            else:
                res = search_mu(lambda m: study.degradation(m).degradation_hz, tol, mu0=guess)
            ev = study.snr(res.mu)
            if res.ok:
                guess = res.mu
            out.append(ResolutionPoint(float(L), float(tol), res.mu, res.value, ev.snr_db, base, res.status))
            if progress:
                progress(out[-1])
    return out


def mu_for_snr(study: HotspotStudy, target_snr_db: float, tol_db: float = 0.05,
               mu0: float = 1.0) -> SearchResult:
    """mu at which the recovered peak trace reaches ``target_snr_db`` (SNR rises with mu)."""
    return search_mu(lambda m: study.snr(m).snr_db, target_snr_db, rel_tol=0.0, abs_tol=tol_db, mu0=mu0)
