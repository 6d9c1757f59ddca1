"""Figure experiments: each writes per-curve CSV, an SVG plot and checks its gates.

An experiment returns a :class:`FigureResult`; its gates carry the measured
value, the target band and whether it passed.  CSV files start with ``#``
comment lines holding the figure id, config hash and seed; SVGs carry the
same in an XML comment.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .analysis import (
    BfsProfile,
    bfs_profile,
    central_third,
    hotspot_samples,
    max_systematic_error,
    pre_hotspot_regions,
)
from .core_model import PulseScheme, detuning_parameter, envelope
from .dpp import cancellation_bound, kernel_for, leading_head_residual
from .io import ScenarioConfig, bundled_scenario, write_bgs
from .resolution import (
    HotspotScenario,
    HotspotStudy,
    dpp_baseline_snr_db,
    find_spatial_resolution,
    mu_for_snr,
)
from .simulator import NoiseSpec, noiseless_bgs, simulate_bgs
from .svgplot import heatmap, line_plot
from .tv_deconv import DeconvConfig, tv_deconvolve

FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6a", "fig6b")

# paper values the gates compare against
FIG4_PRE_ERROR_HZ = (4.8e6, 1.5e6)
FIG6A_IMPROVEMENT_DB = {0.1e6: (0.78, 8.61, 2.0), 0.5e6: (7.70, 16.39, 2.5)}
FIG6B_DEGRADATION_HZ = {0.5e9: 2.34e6, 1e9: 0.56e6, 2e9: 0.22e6, 5e9: 0.03e6}
FIG6B_SNR_DB = 26.0


@dataclass
class Gate:
    name: str
    value: float
    target: str
    passed: bool

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.value:.6g} (target {self.target})"


@dataclass
class FigureResult:
    figure_id: str
    provenance: str
    seed: int
    gates: list = field(default_factory=list)
    files: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)

    def report(self) -> str:
        head = f"{self.figure_id}: config {self.provenance} seed {self.seed} ({self.seconds:.1f} s)"
        return "\n".join([head] + ["  " + g.line() for g in self.gates])


@dataclass
class RunOptions:
    out_dir: str = "out"
    seed: int | None = None          # None: the scenario's own seed
    realizations: int | None = None  # None: the scenario's own count
    allow_short_pair: bool = False
    progress: object = None          # callable(str) or None

    def say(self, msg: str):
        if self.progress:
            self.progress(msg)


def _within(value, centre, tol) -> bool:
    return bool(np.isfinite(value) and abs(value - centre) <= tol)


def _digest(obj) -> str:
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _with_noise(cfg: ScenarioConfig, opts: RunOptions) -> ScenarioConfig:
    noise = cfg.noise
    if opts.seed is not None:
        noise = dataclasses.replace(noise, seed=opts.seed)
    if opts.realizations is not None:
        noise = dataclasses.replace(noise, realizations=opts.realizations)
    return dataclasses.replace(cfg, noise=noise)


class _Writer:
    """Output files for one figure, all stamped with the same provenance."""

    def __init__(self, res: FigureResult, out_dir: str):
        self.res = res
        self.dir = os.path.join(out_dir, res.figure_id)
        os.makedirs(self.dir, exist_ok=True)

    def _path(self, name):
        p = os.path.join(self.dir, name)
        self.res.files.append(p)
        return p

    def csv(self, name, header, columns):
        rows = zip(*[np.asarray(c).ravel() for c in columns])
        with open(self._path(name), "w", newline="") as fh:
            fh.write(f"# figure={self.res.figure_id} config_hash={self.res.provenance} seed={self.res.seed}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([f"{v:.10g}" if isinstance(v, (float, np.floating)) else v for v in r])

    def svg(self, name, text):
        stamp = f"<!-- figure={self.res.figure_id} config_hash={self.res.provenance} seed={self.res.seed} -->\n"
        with open(self._path(name), "w") as fh:
            fh.write(stamp + text)

    def bgs(self, name, m):
        m.meta["figure"] = self.res.figure_id
        write_bgs(self._path(name), m, self.res.provenance)


# -- fig1: temporal envelope --------------------------------------------------------------

def fig1(opts: RunOptions) -> FigureResult:
    """Real part of the gain envelope versus time and detuning (no gate)."""
    params = {"linewidth_hz": 27e6, "bfs_hz": 10.8e9, "widths_s": [20e-9, 60e-9],
              "detuning_mhz": [-60, 60, 1], "t_ns": [0, 80, 0.25]}
    res = FigureResult("fig1", _digest(params), 0)
    out = _Writer(res, opts.out_dir)
    det = np.arange(-60, 60.5, 1.0) * 1e6
    t = np.arange(0, 80.01, 0.25) * 1e-9
    g = detuning_parameter(10.8e9, 10.8e9 + det, 27e6)[:, None]
    for w in params["widths_s"]:
        env = np.real(envelope(g, w, t[None, :]))
        D, T = np.meshgrid(det / 1e6, t * 1e9, indexing="ij")
        tag = f"{w * 1e9:g}ns"
        out.csv(f"envelope_{tag}.csv", ["detuning_mhz", "t_ns", "re_envelope"], [D, T, env])
        out.svg(f"envelope_{tag}.svg", heatmap(env.T, det / 1e6, t * 1e9, f"Re envelope, {tag} pulse",
                                               "detuning (MHz)", "t (ns)"))
        rows = [(f"{d:g} MHz", t * 1e9, env[np.argmin(np.abs(det / 1e6 - d))]) for d in (0, 10, 20, 30, 60)]
        out.svg(f"envelope_{tag}_cuts.svg", line_plot(rows, f"Re envelope, {tag} pulse", "t (ns)", "gain"))
    return res


# -- fig2: two-section fibre ----------------------------------------------------------------

def transition_width_m(trace, positions, tol=1e-9) -> float:
    """Length over which ``trace`` moves between its two end plateaus."""
    x = np.asarray(trace)
    n = len(x)
    a, b = x[n // 4], x[3 * n // 4]  # plateau levels well inside each section
    span = abs(b - a) or 1.0
    inside = (np.abs(x - a) > tol * span) & (np.abs(x - b) > tol * span)
    idx = np.flatnonzero(inside[n // 4:3 * n // 4]) + n // 4
    if idx.size == 0:
        return 0.0
    dz = positions[1] - positions[0]
    # from the last sample on plateau a to the first on plateau b
    return float((idx[-1] - idx[0] + 2) * dz)


def fig2(opts: RunOptions, cfg: ScenarioConfig | None = None) -> FigureResult:
    cfg = cfg or bundled_scenario("fig2a")
    res = FigureResult("fig2", cfg.digest(), cfg.noise.seed)
    out = _Writer(res, opts.out_dir)
    fiber, grid, sweep = cfg.fiber_profile(), cfg.sampling_grid(), cfg.sweep_tuple()
    single = cfg.pulse_scheme()
    pair = PulseScheme.pair(single.width_long_s, 40e-9)
    z = grid.positions()
    maps = {}
    for label, p in (("single", single), ("pair", pair)):
        m = noiseless_bgs(fiber, p, sweep, grid)
        maps[label] = m
        out.bgs(f"map_{label}.bgs", m)
        keep = (z > -2) & (z < fiber.length_m + 8)
        out.svg(f"map_{label}.svg", heatmap(m.data[:, keep], z[keep], m.freqs / 1e9,
                                            f"gain map, {p.label()}", "V t / 2 (m)", "frequency (GHz)"))
    base = maps["single"].channel_nearest(fiber.base_bfs_hz)
    cut = maps["single"].data[base]
    out.csv("trace_10.80GHz.csv", ["z_m", "single", "pair"], [z, cut, maps["pair"].data[base]])
    out.svg("trace_10.80GHz.svg", line_plot([("single " + single.label(), z, cut),
                                             ("pair " + pair.label(), z, maps["pair"].data[base])],
                                            "trace at 10.80 GHz", "V t / 2 (m)", "normalised gain"))
    width = transition_width_m(cut, z)
    expected = single.effective_resolution_m(grid.group_velocity_m_per_s)
    res.gates.append(Gate("section transition width (m)", width, f"{expected:g} +- {grid.dz_m:g}",
                          _within(width, expected, grid.dz_m + 1e-9)))
    resid = leading_head_residual(pair, fiber.linewidth_hz, fiber.base_bfs_hz)
    bound = cancellation_bound(pair.width_short_s, fiber.linewidth_hz)
    res.gates.append(Gate("60/40 ns leading-head residual", resid, f"<= {bound:.6f}", resid <= bound))
    res.data.update(transition_width_m=width, leading_head_residual=resid)
    return res


# -- fig3 / fig4: noiseless pipelines ------------------------------------------------------

_PIPELINE_CACHE: dict = {}


def noiseless_pipeline(cfg: ScenarioConfig, allow_short_pair: bool = False):
    """Simulate, deconvolve (mu from the config) and fit; cached per config."""
    key = cfg.digest()
    if key not in _PIPELINE_CACHE:
        fiber, pulse, grid = cfg.fiber_profile(), cfg.pulse_scheme(), cfg.sampling_grid()
        m = noiseless_bgs(fiber, pulse, cfg.sweep_tuple(), grid)
        k = kernel_for(pulse, fiber.linewidth_hz, grid.dt_s, allow_short_pair or cfg.pulse.allow_short_pair)
        d = cfg.deconv
        rec = tv_deconvolve(m, k, DeconvConfig(d.mu, d.max_iters, d.rel_tolerance, d.penalty_rho,
                                               nonneg=d.nonneg))
        region = (0.5, fiber.length_m - 0.5)
        _PIPELINE_CACHE[key] = (m, rec, bfs_profile(m, region), bfs_profile(rec, region))
    return _PIPELINE_CACHE[key]


def hotspot_errors(prof: BfsProfile, fiber) -> list[dict]:
    out = []
    for i, h in enumerate(fiber.hotspots):
        idx = hotspot_samples(prof.position_m, fiber, i)
        err = prof.bfs_hz[idx] - h.bfs_hz
        cen = central_third(prof.position_m, fiber, i)
        out.append({"hotspot": i, "length_m": h.length_m,
                    "max_abs_error_hz": float(np.max(np.abs(err))) if idx.size else math.inf,
                    "degradation_hz": float(h.bfs_hz - np.nanmean(prof.bfs_hz[cen]))})
    return out


def _feature_count(trace, positions, fiber, prominence=0.05) -> int:
    inside = (positions > 0) & (positions < fiber.length_m)
    peaks, _ = find_peaks(np.asarray(trace)[inside], prominence=prominence)
    return len(peaks)


def fig3(opts: RunOptions) -> FigureResult:
    cfgs = {"a": bundled_scenario("fig3a"), "c": bundled_scenario("fig3c")}
    res = FigureResult("fig3", _digest({k: c.digest() for k, c in cfgs.items()}), 0)
    out = _Writer(res, opts.out_dir)
    for tag, cfg in cfgs.items():
        fiber = cfg.fiber_profile()
        m, rec, raw_prof, rec_prof = noiseless_pipeline(cfg, opts.allow_short_pair)
        lab = cfg.pulse_scheme().label().replace("/", "-").replace(" ", "")
        for kind, mm in (("raw", m), ("deconvolved", rec)):
            out.bgs(f"map_{lab}_{kind}.bgs", mm)
            z = mm.positions()
            keep = (z > -1) & (z < fiber.length_m + 1)
            out.svg(f"map_{lab}_{kind}.svg", heatmap(mm.data[:, keep], z[keep], mm.freqs / 1e9,
                                                     f"{kind} BGS, {cfg.pulse_scheme().label()}",
                                                     "z (m)", "frequency (GHz)"))
        ch = m.channel_nearest(fiber.hotspots[0].bfs_hz)
        out.csv(f"trace_{lab}_10.83GHz.csv", ["z_raw_m", "raw", "z_rec_m", "deconvolved"],
                [m.positions(), m.data[ch], rec.positions(), rec.data[ch]])
        if tag == "c":
            n = _feature_count(m.data[ch], m.positions(), fiber)
            res.gates.append(Gate("60/40 ns map: resolvable hotspot features at 10.83 GHz", n, "== 3", n == 3))
            errs = hotspot_errors(rec_prof, fiber)
            worst = max(abs(e["degradation_hz"]) for e in errs)
            res.gates.append(Gate("60/40 ns deconvolved: worst hotspot BFS error (MHz)", worst / 1e6,
                                  "< 0.5", worst < 0.5e6))
        else:
            pre = max_systematic_error(rec_prof, fiber, pre_hotspot_regions(fiber))
            res.gates.append(Gate("20 ns deconvolved: errors near BFS changes (MHz)", pre / 1e6, "> 1",
                                  pre > 1e6))
    return res


def fig4(opts: RunOptions) -> FigureResult:
    cfg_a, cfg_b = bundled_scenario("fig3a"), bundled_scenario("fig3c")
    res = FigureResult("fig4", _digest([cfg_a.digest(), cfg_b.digest()]), 0)
    out = _Writer(res, opts.out_dir)
    curves = []
    for tag, cfg in (("single_20ns", cfg_a), ("dpp_60-40ns", cfg_b)):
        fiber = cfg.fiber_profile()
        _, _, _, prof = noiseless_pipeline(cfg, opts.allow_short_pair)
        truth = fiber.bfs_at(prof.position_m)
        out.csv(f"bfs_{tag}.csv", ["z_m", "bfs_ghz", "truth_ghz", "fwhm_mhz", "fit_ok"],
                [prof.position_m, prof.bfs_hz / 1e9, truth / 1e9, prof.fwhm_hz / 1e6, prof.ok.astype(int)])
        curves.append((tag, prof.position_m, prof.bfs_hz / 1e9))
        pre = max_systematic_error(prof, fiber, pre_hotspot_regions(fiber))
        errs = hotspot_errors(prof, fiber)
        res.data[tag] = {"pre_hotspot_error_hz": pre, "hotspots": errs}
        if tag == "single_20ns":
            c, tol = FIG4_PRE_ERROR_HZ
            res.gates.append(Gate("20 ns: max pre-hotspot error (MHz)", pre / 1e6,
                                  f"{c / 1e6:g} +- {tol / 1e6:g}", _within(pre, c, tol)))
            for e in errs:
                if e["length_m"] < 2:
                    res.gates.append(Gate(f"20 ns: {e['length_m']:g} m hotspot max error (MHz)",
                                          e["max_abs_error_hz"] / 1e6, "> 5 (not recovered)",
                                          e["max_abs_error_hz"] > 5e6))
        else:
            res.gates.append(Gate("60/40 ns: max pre-hotspot error (MHz)", pre / 1e6, "< 0.5", pre < 0.5e6))
            for e in errs:
                step = 30e6 - e["degradation_hz"]
                res.gates.append(Gate(f"60/40 ns: {e['length_m']:g} m hotspot step (MHz)", step / 1e6,
                                      "30 +- 0.5", abs(e["degradation_hz"]) <= 0.5e6))
    curves.append(("truth", curves[0][1], cfg_a.fiber_profile().bfs_at(curves[0][1]) / 1e9))
    out.svg("bfs_profiles.svg", line_plot(curves, "recovered BFS profiles", "z (m)", "BFS (GHz)"))
    return res


# -- fig5: noisy 40 m fibre with mu from the resolution procedure ---------------------------

def fig5(opts: RunOptions, tolerance_hz: float = 0.5e6) -> FigureResult:
    cfg = _with_noise(bundled_scenario("fig5"), opts)
    study_cfg = _with_noise(bundled_scenario("fig6a"), opts)
    res = FigureResult("fig5", _digest([cfg.digest(), study_cfg.digest(), tolerance_hz]), cfg.noise.seed)
    out = _Writer(res, opts.out_dir)
    sc = HotspotScenario.from_config(study_cfg)
    points = find_spatial_resolution(sc, tolerance_hz, lengths_m=(1.0, 0.5),
                                     progress=lambda p: opts.say(f"fig5: L={p.hotspot_length_m} mu={p.mu:.4g}"))
    fiber, pulse, grid = cfg.fiber_profile(), cfg.pulse_scheme(), cfg.sampling_grid()
    noise = NoiseSpec(cfg.noise.snr_db, cfg.noise.seed, cfg.noise.convention)
    m = simulate_bgs(fiber, pulse, cfg.sweep_tuple(), grid, noise)
    k = kernel_for(pulse, fiber.linewidth_hz, grid.dt_s)
    uniform = (2.0, 10.0)
    fluct = {}
    curves = []
    for p in points:
        rec = tv_deconvolve(m, k, DeconvConfig(p.mu, max_iters=cfg.deconv.max_iters))
        prof = bfs_profile(rec, (0.5, fiber.length_m - 0.5))
        tag = f"{p.hotspot_length_m:g}m"
        out.csv(f"bfs_mu_for_{tag}.csv", ["z_m", "bfs_ghz", "fit_ok"],
                [prof.position_m, prof.bfs_hz / 1e9, prof.ok.astype(int)])
        curves.append((f"mu={p.mu:.3g} ({tag})", prof.position_m, prof.bfs_hz / 1e9))
        sec = prof.select(*uniform)
        fluct[p.hotspot_length_m] = float(np.nanstd(sec.bfs_hz))
        errs = hotspot_errors(prof, fiber)
        res.data[tag] = {"mu": p.mu, "status": p.status, "fluctuation_hz": fluct[p.hotspot_length_m],
                         "hotspots": errs}
        if p.hotspot_length_m == 0.5:
            e = errs[2]
            res.gates.append(Gate("0.5 m hotspot restored with mu(0.5 m): |error| (MHz)",
                                  abs(e["degradation_hz"]) / 1e6, "< 2", abs(e["degradation_hz"]) < 2e6))
    res.gates.append(Gate("BFS fluctuation ratio mu(0.5 m) / mu(1 m)", fluct[0.5] / fluct[1.0], "> 1",
                          fluct[0.5] > fluct[1.0]))
    out.svg("bfs_profiles.svg", line_plot(curves, "noisy 40 m fibre", "z (m)", "BFS (GHz)"))
    return res


# -- fig6a: SNR versus spatial resolution ---------------------------------------------------

def fig6a(opts: RunOptions, lengths_m=(0.5, 0.75, 1.0, 1.25, 1.5)) -> FigureResult:
    cfg = _with_noise(bundled_scenario("fig6a"), opts)
    res = FigureResult("fig6a", _digest([cfg.digest(), list(lengths_m)]), cfg.noise.seed)
    out = _Writer(res, opts.out_dir)
    sc = HotspotScenario.from_config(cfg)
    tols = sorted(FIG6A_IMPROVEMENT_DB)
    points = find_spatial_resolution(
        sc, tols, lengths_m=lengths_m,
        progress=lambda p: opts.say(f"fig6a: L={p.hotspot_length_m:g} m tol={p.tolerance_hz / 1e6:g} MHz "
                                    f"mu={p.mu:.4g} snr={p.snr_db:.2f} dB [{p.status}]"))
    L = np.array(lengths_m, float)
    base = np.array([dpp_baseline_snr_db(x, sc) for x in L])
    series = [("DPP", L, base)]
    cols, header = [L, base], ["hotspot_length_m", "dpp_snr_db"]
    for tol in tols:
        pts = [p for p in points if p.tolerance_hz == tol]
        snr = np.array([p.snr_db for p in pts])
        imp = snr - base
        mu = np.array([p.mu for p in pts])
        tag = f"{tol / 1e6:g}MHz"
        series.append((f"TV, {tag}", L, snr))
        cols += [mu, snr, imp, np.array([p.degradation_hz / 1e6 for p in pts]),
                 np.array([p.status for p in pts])]
        header += [f"mu_{tag}", f"snr_db_{tag}", f"improvement_db_{tag}", f"degradation_mhz_{tag}",
                   f"status_{tag}"]
        lo, hi, band = FIG6A_IMPROVEMENT_DB[tol]
        ok = [p.status == "ok" for p in pts]
        mono = bool(np.all(np.diff(imp) > 0))
        res.gates.append(Gate(f"{tag}: improvement monotone in length (min step dB)",
                              float(np.min(np.diff(imp))) if len(imp) > 1 else math.nan, "> 0", mono))
        res.gates.append(Gate(f"{tag}: mu search converged at every length", sum(ok), f"== {len(ok)}", all(ok)))
        for x, want in ((L[0], lo), (L[-1], hi)):
            got = float(imp[np.flatnonzero(L == x)[0]])
            res.gates.append(Gate(f"{tag}: improvement at {x:g} m (dB)", got, f"{want:g} +- {band:g}",
                                  _within(got, want, band)))
        res.data[tag] = {"mu": mu.tolist(), "snr_db": snr.tolist(), "improvement_db": imp.tolist()}
    res.data["dpp_snr_db"] = base.tolist()
    out.csv("snr_vs_resolution.csv", header, cols)
    out.svg("snr_vs_resolution.svg", line_plot(series, "SNR versus spatial resolution", "hotspot length (m)",
                                               "SNR (dB)", markers=True))
    return res


# -- fig6b: degradation versus sampling rate ------------------------------------------------

def fig6b(opts: RunOptions, rates_hz=(0.5e9, 1e9, 2e9, 5e9),
          degradation_realizations: int = 20) -> FigureResult:
    """mu is matched to 26 dB on all realizations (peak channel only, cheap);
    the averaged profile uses the first ``degradation_realizations``."""
    cfg = _with_noise(bundled_scenario("fig6b"), opts)
    res = FigureResult("fig6b", _digest([cfg.digest(), list(rates_hz), degradation_realizations]),
                       cfg.noise.seed)
    out = _Writer(res, opts.out_dir)
    rows = []
    curves = []
    mu0 = cfg.deconv.mu
    for rate in rates_hz:
        sc = HotspotScenario.from_config(cfg, sample_rate_hz=rate)
        study = HotspotStudy.from_scenario(sc, DeconvConfig(1.0, max_iters=cfg.deconv.max_iters),
                                           degradation_realizations)
        s = mu_for_snr(study, FIG6B_SNR_DB, mu0=mu0)
        mu0 = s.mu
        ev = study.degradation(s.mu)
        rows.append((rate, s.mu, s.value, ev.degradation_hz, s.status, ev.converged))
        opts.say(f"fig6b: {rate / 1e9:g} GSa/s mu={s.mu:.4g} snr={s.value:.2f} dB "
                 f"degradation={ev.degradation_hz / 1e6:.3f} MHz [{s.status}]")
        prof = study.mean_profile(s.mu)
        curves.append((f"{rate / 1e9:g} GSa/s", prof.position_m, prof.bfs_hz / 1e9))
    r = np.array([x[0] for x in rows])
    deg = np.array([x[3] for x in rows])
    out.csv("degradation_vs_rate.csv",
            ["sample_rate_gsps", "mu", "snr_db", "degradation_mhz", "paper_mhz", "status", "converged"],
            [r / 1e9, [x[1] for x in rows], [x[2] for x in rows], deg / 1e6,
             [FIG6B_DEGRADATION_HZ.get(x, math.nan) / 1e6 for x in r], [x[4] for x in rows],
             [int(x[5]) for x in rows]])
    out.svg("averaged_bfs.svg", line_plot(curves, "averaged BFS around the 0.5 m hotspot", "z (m)",
                                          "BFS (GHz)"))
    res.gates.append(Gate("degradation strictly decreasing with rate (max step MHz)",
                          float(np.max(np.diff(deg))) / 1e6, "< 0", bool(np.all(np.diff(deg) < 0))))
    res.gates.append(Gate("26 dB reached at every rate", sum(x[4] == "ok" for x in rows), f"== {len(rows)}",
                          all(x[4] == "ok" for x in rows)))
    for rate, d in zip(r, deg):
        want = FIG6B_DEGRADATION_HZ[rate]
        res.gates.append(Gate(f"degradation at {rate / 1e9:g} GSa/s (MHz)", d / 1e6,
                              f"{want / 1e6:g} +- 50%", _within(d, want, 0.5 * want)))
    res.data["rates_hz"] = r.tolist()
    res.data["degradation_hz"] = deg.tolist()
    return res


EXPERIMENTS = {"fig1": fig1, "fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6a": fig6a,
               "fig6b": fig6b}


def reproduce(figure_id: str, opts: RunOptions | None = None) -> FigureResult:
    if figure_id not in EXPERIMENTS:
        raise KeyError(f"unknown figure {figure_id!r}; valid: {', '.join(FIGURES)}")
    opts = opts or RunOptions()
    t0 = time.perf_counter()
    res = EXPERIMENTS[figure_id](opts)
    res.seconds = time.perf_counter() - t0
    with open(os.path.join(opts.out_dir, figure_id, "gates.json"), "w") as fh:
        json.dump({"figure": figure_id, "config_hash": res.provenance, "seed": res.seed,
                   "passed": res.passed, "seconds": res.seconds,
                   "gates": [dataclasses.asdict(g) for g in res.gates], "data": res.data},
                  fh, indent=1, default=lambda o: o.item() if isinstance(o, np.generic) else str(o))
    return res
