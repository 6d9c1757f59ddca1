"""Command line: simulate, dpp, deconvolve, analyze, reproduce, ingest.

Exit codes: 0 success, 1 acceptance gate failed, 2 usage or invalid input,
3 solver did not converge.  Every command prints the provenance hash it
embeds in its outputs.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import math
import os
import sys

import numpy as np

from .analysis import (
    MetricsReport,
    bfs_degradation,
    bfs_profile,
    max_systematic_error,
    pre_hotspot_regions,
    snr_time_trace,
)
from .core_model import DEFAULT_LINEWIDTH_HZ, DomainError, PulseScheme
from .dpp import ShortPairError, align_maps, differential_map, kernel_for
from .experiments import FIGURES, RunOptions, reproduce
from .io import (
    ConfigError,
    CorruptionError,
    CsvSchema,
    IngestionError,
    bundled_names,
    ingest_external_trace,
    load_scenario,
    read_bgs,
    write_bgs,
)
from .resolution import HotspotScenario, find_spatial_resolution
from .simulator import (
    BgsMap,
    ConfigurationError,
    ContractError,
    GainTrace,
    NoiseSpec,
    noiseless_bgs,
    raw_traces,
    simulate_bgs,
)
from .tv_deconv import DeconvConfig, solve_tv, tv_deconvolve

EXIT_OK, EXIT_GATE, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _hash(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(json.dumps(p, sort_keys=True, default=str).encode())
    return h.hexdigest()[:16]


def _file_sha(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _config(args, path):
    """Config from a file path or a bundled scenario name."""
    if not os.path.exists(path) and path.removesuffix(".cfg") in bundled_names():
        here = os.path.join(os.path.dirname(__file__), "scenarios")
        path = os.path.join(here, path.removesuffix(".cfg") + ".cfg")
    if not os.path.exists(path):
        raise UsageError(f"config {path!r} not found (bundled: {', '.join(bundled_names())})")
    return load_scenario(path, allow_short_pair=args.allow_short_pair)


def _out_path(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _announce(prov, *paths):
    print(f"provenance: {prov}")
    for p in paths:
        print(f"wrote {p}")


# -- simulate --------------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _config(args, args.config)
    fiber, pulse, grid, sweep = cfg.fiber_profile(), cfg.pulse_scheme(), cfg.sampling_grid(), cfg.sweep_tuple()
    seed = cfg.noise.seed if args.seed is None else args.seed
    prov = _hash(cfg.digest(), seed, args.raw, args.realization)
    if args.raw:
        if pulse.kind != "single":
            raise UsageError("--raw writes single-pulse maps; simulate the two widths separately")
        data = raw_traces(fiber, pulse.width_long_s, sweep[0] + sweep[1] * np.arange(sweep[2]), grid)
        m = BgsMap(sweep[0], sweep[1], data, grid, pulse, normalized=False, delay_s=pulse.response_delay_s)
        if math.isfinite(cfg.noise.snr_db):
            raise UsageError("--raw maps are noiseless; set snr_db = inf")
    else:
        noise = None
        if math.isfinite(cfg.noise.snr_db):
            noise = NoiseSpec(cfg.noise.snr_db, seed, cfg.noise.convention)
        m = simulate_bgs(fiber, pulse, sweep, grid, noise, args.realization)
    m.seed = seed
    m.meta.update(config_hash=prov, scenario_hash=cfg.digest(), linewidth_hz=fiber.linewidth_hz)
    out = args.output or _out_path(args, os.path.basename(args.config).removesuffix(".cfg") + ".bgs")
    write_bgs(out, m, prov)
    _announce(prov, out)
    return EXIT_OK


# -- dpp ---------------------------------------------------------------------------------------

def cmd_dpp(args) -> int:
    long, short = read_bgs(args.long), read_bgs(args.short)
    if long.normalized or short.normalized:
        raise UsageError("dpp needs un-normalised single-pulse maps (simulate --raw or ingested data); "
                         "normalised maps carry different scales")
    m = differential_map(*align_maps(long, short))
    if args.plateau_section:
        lo, hi = args.plateau_section
        z = m.positions()
        sel = (z >= lo) & (z < hi)
        if not sel.any():
            raise UsageError(f"plateau section {lo}-{hi} m holds no samples")
        level = float(np.mean(m.data[:, sel].max(axis=0)))
        m = m.with_data(m.data / level, normalized=True)
        m.meta["normalized_by"] = level
    prov = _hash(_file_sha(args.long), _file_sha(args.short), args.plateau_section)
    m.meta["config_hash"] = prov
    out = args.output or _out_path(args, "dpp.bgs")
    write_bgs(out, m, prov)
    _announce(prov, out)
    return EXIT_OK


# -- deconvolve --------------------------------------------------------------------------------

def _kernel_pulse(spec: str) -> PulseScheme:
    try:
        ws = [float(x) / 1e9 for x in spec.lower().removesuffix("ns").split("/")]
    except ValueError:
        raise UsageError(f"kernel pulse {spec!r}: expected e.g. '60/40' or '20' (ns)") from None
    if len(ws) == 1:
        return PulseScheme.single(ws[0])
    if len(ws) == 2:
        return PulseScheme.pair(*ws)
    raise UsageError(f"kernel pulse {spec!r}: one or two widths")


def cmd_deconvolve(args) -> int:
    m = read_bgs(args.map)
    if m.recovered:
        raise UsageError(f"{args.map} is already a deconvolved map")
    if m.pulse is None and args.kernel_pulse is None:
        raise UsageError("map has no pulse metadata; pass --kernel-pulse")
    kpulse = _kernel_pulse(args.kernel_pulse) if args.kernel_pulse else m.pulse
    if m.pulse is not None and kpulse != m.pulse:
        raise UsageError(f"refusing to deconvolve: kernel pulse {kpulse.label()} does not match the map's "
                         f"{m.pulse.label()}; the kernel must come from the pulse scheme that took the data")
    cfg = _config(args, args.config) if args.config else None
    linewidth = (cfg.fiber_profile().linewidth_hz if cfg else
                 m.meta.get("linewidth_hz", args.linewidth_mhz * 1e6))
    kernel = kernel_for(kpulse, linewidth, m.grid.dt_s, args.allow_short_pair)
    if args.tolerance_mhz is not None:
        if cfg is None:
            raise UsageError("--tolerance-mhz needs --config with the single-hotspot study scenario")
        sc = HotspotScenario.from_config(cfg)
        if args.realizations:
            sc = HotspotScenario.from_config(cfg, realizations=args.realizations)
        pt = find_spatial_resolution(sc, args.tolerance_mhz * 1e6, lengths_m=(sc.hotspot_length_m,))[0]
        print(f"mu from the {args.tolerance_mhz:g} MHz tolerance at {sc.hotspot_length_m:g} m: "
              f"{pt.mu:.6g} ({pt.status})")
        if pt.status != "ok":
            print(f"mu search ended with status {pt.status}", file=sys.stderr)
            return EXIT_NONCONVERGED
        mu = pt.mu
    else:
        mu = args.mu if args.mu is not None else (cfg.deconv.mu if cfg else None)
        if mu is None:
            raise UsageError("give --mu, --tolerance-mhz, or a --config with a mu")
    dc = DeconvConfig(mu, args.max_iters, args.rel_tolerance)
    rec = tv_deconvolve(m, kernel, dc)
    prov = _hash(_file_sha(args.map), mu, args.max_iters, args.rel_tolerance, kpulse.label(), linewidth)
    rec.meta["config_hash"] = prov
    out = args.output or _out_path(args, os.path.basename(args.map).removesuffix(".bgs") + "_tv.bgs")
    write_bgs(out, rec, prov)
    _announce(prov, out)
    d = rec.meta["deconv"]
    print(f"mu {mu:g}: {d['iterations_max']} iterations max, converged {d['converged']}")
    if not d["converged"]:
        print(f"not converged within {args.max_iters} iterations on channels "
              f"{d['nonconverged_channels']} (max relative change {d['max_rel_change']:.3g})", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


# -- analyze -----------------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    m = read_bgs(args.map)
    region = tuple(args.region) if args.region else None
    prof = bfs_profile(m, region)
    report = MetricsReport(snr_convention=args.convention)
    z = m.positions()
    lo, hi = args.reference_m
    idx = np.flatnonzero((z >= lo) & (z < hi))
    cfg = _config(args, args.truth) if args.truth else None
    fiber = cfg.fiber_profile() if cfg else None
    if fiber is not None:
        peak = m.channel_nearest(fiber.base_bfs_hz)
    else:  # strongest channel over the reference section
        peak = int(np.argmax(m.data[:, idx].mean(axis=1))) if idx.size else 0
    section = (int(idx[0]), int(idx[-1]) + 1) if idx.size else (0, 0)
    trace = m.data[peak]
    try:
        report.snr_db["blind"] = snr_time_trace(trace, section, convention=args.convention,
                                                kernel_length=args.kernel_length)
    except DomainError as exc:
        print(f"blind SNR skipped: {exc}", file=sys.stderr)
    if cfg is not None:
        clean = noiseless_bgs(fiber, m.pulse, (m.freq_start_hz, m.freq_step_hz, m.n_freqs), m.grid).data[peak]
        if m.recovered:
            mu = m.meta.get("deconv", {}).get("mu")
            kernel = kernel_for(m.pulse, fiber.linewidth_hz, m.grid.dt_s, True)
            clean, _ = solve_tv(clean, kernel, DeconvConfig(mu, args.max_iters))
        try:
            report.snr_db["oracle"] = snr_time_trace(trace, section, reference=clean,
                                                     convention=args.convention, kernel_length=args.kernel_length)
        except DomainError as exc:
            print(f"oracle SNR skipped: {exc}", file=sys.stderr)
        regions = [r for r in pre_hotspot_regions(fiber) if r[1] > r[0]]
        if regions:
            try:
                report.max_systematic_error_hz = max_systematic_error(prof, fiber, regions)
            except DomainError:
                pass
        for i in range(len(fiber.hotspots)):
            try:
                report.hotspot_degradations.append({"hotspot": i, "degradation_hz": bfs_degradation(prof, fiber, i)})
            except DomainError as exc:
                report.hotspot_degradations.append({"hotspot": i, "degradation_hz": None, "note": str(exc)})
    report.fit_failures = [float(p) for p in prof.failures()]
    prov = _hash(_file_sha(args.map), cfg.digest() if cfg else None, region, args.reference_m, args.convention)
    stem = os.path.basename(args.map).removesuffix(".bgs")
    csv_path, json_path = _out_path(args, stem + "_bfs.csv"), _out_path(args, stem + "_metrics.json")
    with open(csv_path, "w") as fh:
        fh.write(f"# config_hash={prov} seed={m.seed}\n")
        fh.write("z_m,bfs_ghz,peak_gain,fwhm_mhz,residual_rms,fit_ok\n")
        for row in zip(prof.position_m, prof.bfs_hz, prof.peak_gain, prof.fwhm_hz, prof.fit_residual_rms, prof.ok):
            fh.write(f"{row[0]:.6f},{row[1] / 1e9:.9f},{row[2]:.8g},{row[3] / 1e6:.6f},{row[4]:.4g},{int(row[5])}\n")
    with open(json_path, "w") as fh:
        json.dump({"config_hash": prov, "seed": m.seed, **report.to_dict()}, fh, indent=1)
    _announce(prov, csv_path, json_path)
    print(json.dumps(report.to_dict(), indent=1))
    for p in report.fit_failures:
        print(f"fit failed at z = {p:.3f} m")
    return EXIT_OK


# -- reproduce ---------------------------------------------------------------------------------

def cmd_reproduce(args) -> int:
    ids = list(FIGURES) if args.figures == ["all"] else args.figures
    bad = [f for f in ids if f not in FIGURES]
    if bad:
        raise UsageError(f"unknown figure id {', '.join(bad)}; valid ids: {', '.join(FIGURES)} (or 'all')")
    opts = RunOptions(args.out_dir, args.seed, args.realizations, args.allow_short_pair,
                      progress=(lambda s: print(s, flush=True)) if args.verbose else None)
    ok = True
    for f in ids:
        res = reproduce(f, opts)
        print(f"provenance: {res.provenance}")
        print(res.report(), flush=True)
        ok &= res.passed
    return EXIT_OK if ok else EXIT_GATE


# -- ingest ------------------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    pulse = _kernel_pulse(args.pulse) if args.pulse else None
    tc = int(args.time_column) if args.time_column.isdigit() else args.time_column
    gcols = None
    if args.gain_columns:
        gcols = tuple(int(c) if c.isdigit() else c for c in args.gain_columns.split(","))
    schema = CsvSchema(tc, gcols, args.time_unit, args.frequency_unit, args.probe_offset_hz,
                       args.delimiter, pulse=pulse, normalized=args.normalized)
    obj = ingest_external_trace(args.path, schema)
    if isinstance(obj, GainTrace):
        m = BgsMap(obj.probe_offset_hz, 0.0, obj.samples[None, :], obj.grid, obj.pulse, obj.normalized,
                   obj.seed, obj.delay_s)
    else:
        m = obj
    prov = _hash(_file_sha(args.path), str(schema))
    m.meta["config_hash"] = prov
    m.meta["source"] = os.path.basename(args.path)
    out = args.output or _out_path(args, os.path.basename(args.path).rsplit(".", 1)[0] + ".bgs")
    write_bgs(out, m, prov)
    _announce(prov, out)
    print(f"{m.n_freqs} channel(s), {m.grid.n_samples} samples, dt = {m.grid.dt_s * 1e9:g} ns")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------------

def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="override the noise seed")
    p.add_argument("--threads", type=int, default=d(None), help="BLAS/LAPACK thread limit")
    p.add_argument("--out-dir", default=d("out"), help="output directory (default: out)")
    p.add_argument("--realizations", type=int, default=d(None),
                   help="Monte Carlo realizations (fewer is faster but loosens the statistics)")
    p.add_argument("--allow-short-pair", action="store_true", default=d(False),
                   help="permit pulse pairs shorter than the 40 ns rule")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="botda-deconv", description=__doc__.splitlines()[0])
    _global_flags(ap, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a BGS map from a scenario config")
    p.add_argument("config", help="scenario file or bundled name (" + ", ".join(bundled_names()) + ")")
    p.add_argument("-o", "--output")
    p.add_argument("--raw", action="store_true", help="un-normalised single-pulse map (input for dpp)")
    p.add_argument("--realization", type=int, default=None, help="noise sub-stream index")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dpp", parents=[common], help="difference two single-pulse maps")
    p.add_argument("long")
    p.add_argument("short")
    p.add_argument("-o", "--output")
    p.add_argument("--plateau-section", type=float, nargs=2, metavar=("LO_M", "HI_M"),
                   help="normalise by the mean peak gain over this uniform section")
    p.set_defaults(func=cmd_dpp)

    p = sub.add_parser("deconvolve", parents=[common], help="TV deconvolution of every channel")
    p.add_argument("map")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--mu", type=float)
    g.add_argument("--tolerance-mhz", type=float, help="pick mu by the degradation-tolerance procedure")
    p.add_argument("-c", "--config", help="scenario (mu, linewidth, tolerance-mode study)")
    p.add_argument("--kernel-pulse", help="kernel pulse widths in ns, e.g. 60/40; must match the map")
    p.add_argument("--linewidth-mhz", type=float, default=DEFAULT_LINEWIDTH_HZ / 1e6)
    p.add_argument("--max-iters", type=int, default=3000)
    p.add_argument("--rel-tolerance", type=float, default=1e-6)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_deconvolve)

    p = sub.add_parser("analyze", parents=[common], help="BFS profile and metrics of a map")
    p.add_argument("map")
    p.add_argument("-t", "--truth", help="scenario with the true fibre (enables oracle metrics)")
    p.add_argument("--region", type=float, nargs=2, metavar=("LO_M", "HI_M"))
    p.add_argument("--reference-m", type=float, nargs=2, default=(1.0, 8.0), metavar=("LO_M", "HI_M"),
                   help="uniform section for the SNR (default 1-8 m)")
    p.add_argument("--convention", choices=("amplitude", "ratio"), default="amplitude")
    p.add_argument("--kernel-length", type=int, default=20, help="blind-SNR detrend window (samples)")
    p.add_argument("--max-iters", type=int, default=3000)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reproduce", parents=[common], help="run figure experiments and check their gates")
    p.add_argument("figures", nargs="+", metavar="FIGURE", help=f"{', '.join(FIGURES)} or all")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("ingest", parents=[common], help="convert a measured CSV trace/sweep to a map file")
    p.add_argument("path")
    p.add_argument("--time-column", default="0")
    p.add_argument("--gain-columns", help="comma-separated names or indices (default: all others)")
    p.add_argument("--time-unit", default="s")
    p.add_argument("--frequency-unit", default="Hz")
    p.add_argument("--probe-offset-hz", type=float)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--pulse", help="pulse widths in ns, e.g. 60/40")
    p.add_argument("--normalized", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_ingest)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    limits = contextlib.nullcontext()
    if args.threads:
        from threadpoolctl import threadpool_limits
        limits = threadpool_limits(args.threads)
    try:
        with limits:
            return args.func(args)
    except UsageError as exc:
        print(f"{ap.prog} {args.command}: {exc}", file=sys.stderr)
    except (ConfigError, CorruptionError, IngestionError, ContractError, ConfigurationError,
            ShortPairError, DomainError, FileNotFoundError) as exc:
        print(f"{ap.prog} {args.command}: error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
