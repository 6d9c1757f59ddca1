"""Acceptance criteria 1-7, one verdict line each (see the terminal summary).

Each criterion also has a wall-clock budget; the verdict covers both the
numbers and the time.  Criteria 4 and 5 are marked ``slow``.
"""
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from botda_deconv.analysis import bfs_profile, max_systematic_error, pre_hotspot_regions
from botda_deconv.core_model import detuning_parameter, envelope
from botda_deconv.experiments import RunOptions, fig6a, fig6b, hotspot_errors, noiseless_pipeline
from botda_deconv.io import bundled_scenario

HERE = Path(__file__).parent


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_criterion_1_steady_state_bound(acceptance_line):
    def run():
        dnu = 27e6
        det = np.linspace(-60e6, 60e6, 1201)[:, None]
        t = np.linspace(40e-9, 400e-9, 1441)[None, :]
        g = detuning_parameter(10.8e9, 10.8e9 + det, dnu)
        g0 = detuning_parameter(10.8e9, 10.8e9, dnu)
        return float(np.abs(envelope(g, 1.0, t) - envelope(g0, 1.0, t)).max())

    worst, secs = _timed(run)
    exact = 2 * np.exp(-np.pi * 27e6 * 40e-9)  # 0.0672208, quoted as 0.0672
    ok = worst <= exact and round(worst, 4) <= 0.0672 and secs < 1.0
    acceptance_line(1, ok, f"max |env(d,t) - env(0,t)| = {worst:.7f} (<= 0.0672 at quoted precision; "
                           f"analytic bound {exact:.7f}); {secs:.2f} s < 1 s")
    assert ok


def test_criterion_2_distortion_20ns(acceptance_line):
    cfg = bundled_scenario("fig3a")
    (_, _, _, prof), secs = _timed(lambda: noiseless_pipeline(cfg))
    fiber = cfg.fiber_profile()
    pre = max_systematic_error(prof, fiber, pre_hotspot_regions(fiber))
    errs = {e["length_m"]: e["max_abs_error_hz"] for e in hotspot_errors(prof, fiber)}
    pre_ok = abs(pre - 4.8e6) <= 1.5e6
    not_recovered = errs[1.0] > 5e6 and errs[0.5] > 5e6
    ok = pre_ok and not_recovered and secs < 60
    acceptance_line(2, ok, f"pre-hotspot error {pre / 1e6:.3f} MHz (4.8 +- 1.5: {'ok' if pre_ok else 'no'}); "
                           f"max hotspot error 1 m {errs[1.0] / 1e6:.3f} / 0.5 m {errs[0.5] / 1e6:.3f} MHz "
                           f"(must exceed 5: {'ok' if not_recovered else 'no'}); {secs:.1f} s < 60 s")
    assert ok


def test_criterion_3_distortion_eliminated(acceptance_line):
    cfg = bundled_scenario("fig3c")
    (_, _, _, prof), secs = _timed(lambda: noiseless_pipeline(cfg))
    fiber = cfg.fiber_profile()
    pre = max_systematic_error(prof, fiber, pre_hotspot_regions(fiber))
    steps = [30e6 - e["degradation_hz"] for e in hotspot_errors(prof, fiber)]
    ok = pre < 0.5e6 and all(abs(s - 30e6) <= 0.5e6 for s in steps) and secs < 60
    acceptance_line(3, ok, f"hotspot steps {', '.join(f'{s / 1e6:.3f}' for s in steps)} MHz (30 +- 0.5); "
                           f"pre-hotspot error {pre / 1e6:.3f} MHz (< 0.5); {secs:.1f} s < 60 s")
    assert ok


@pytest.mark.slow
def test_criterion_4_snr_vs_resolution(acceptance_line, tmp_path):
    res, secs = _timed(lambda: fig6a(RunOptions(str(tmp_path), realizations=100)))
    parts = []
    ok = secs < 30 * 60
    for tag in ("0.1MHz", "0.5MHz"):
        imp = res.data[tag]["improvement_db"]
        parts.append(f"{tag}: " + " ".join(f"{x:.2f}" for x in imp) + " dB")
    for g in res.gates:
        ok &= g.passed
    failed = [g.name for g in res.gates if not g.passed]
    acceptance_line(4, ok, "; ".join(parts) + f" (0.5..1.5 m; targets 0.78/8.61 +- 2, 7.70/16.39 +- 2.5)"
                    + (f"; failing: {', '.join(failed)}" if failed else "") + f"; {secs / 60:.1f} min < 30")
    assert ok


@pytest.mark.slow
def test_criterion_5_sampling_rate(acceptance_line, tmp_path):
    res, secs = _timed(lambda: fig6b(RunOptions(str(tmp_path), realizations=100)))
    deg = np.array(res.data["degradation_hz"]) / 1e6
    ok = res.passed and secs < 20 * 60
    failed = [g.name for g in res.gates if not g.passed]
    acceptance_line(5, ok, "degradation " + " / ".join(f"{d:.3f}" for d in deg)
                    + " MHz at 0.5/1/2/5 GSa/s (targets 2.34/0.56/0.22/0.03 +- 50%, strictly decreasing)"
                    + (f"; failing: {', '.join(failed)}" if failed else "") + f"; {secs / 60:.1f} min < 20")
    assert ok


def test_criterion_6_lorentzian_width(acceptance_line):
    cfg = bundled_scenario("fig3c")
    (_, rec, _, _), secs = _timed(lambda: noiseless_pipeline(cfg))
    fiber = cfg.fiber_profile()
    edges = [0.0] + [x for h in fiber.hotspots for x in (h.start_m, h.end_m)] + [fiber.length_m]
    fwhm = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a >= 3:  # uniform sections, 1 m clear of every BFS change
            fwhm.append(bfs_profile(rec, (a + 1, b - 1)).fwhm_hz)
    fwhm = np.concatenate(fwhm) / 1e6
    ok = bool(np.all((fwhm >= 26) & (fwhm <= 30))) and secs < 60
    acceptance_line(6, ok, f"recovered FWHM {fwhm.min():.2f}-{fwhm.max():.2f} MHz over {fwhm.size} "
                           f"uniform-section samples (in [26, 30]); {secs:.1f} s < 60 s")
    assert ok


PROPERTY_SUITE = [
    "test_core_model.py::test_gamma_real_part_is_pi_linewidth",
    "test_tv_deconv.py::test_convolution_matches_direct_sum",
    "test_tv_deconv.py::test_tv_norm_examples",
    "test_tv_deconv.py::test_tv_norm_identities",
    "test_tv_deconv.py::test_mu_zero_identity_kernel_reproduces_input",
    "test_tv_deconv.py::test_objective_monotone_in_debug_mode",
    "test_tv_deconv.py::test_tv_monotone_in_mu",
    "test_dpp.py::test_cancellation_bound_met_or_violated",
    "test_simulator.py::test_snr_round_trip_within_tolerance",
    "test_io.py::test_map_round_trip_is_bitwise",
    "test_io.py::test_noise_is_deterministic_under_thread_parallelism",
]


def test_criterion_7_property_suites(acceptance_line):
    cmd = [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider"] + [str(HERE / n) for n in PROPERTY_SUITE]
    r, secs = _timed(lambda: subprocess.run(cmd, capture_output=True, text=True, cwd=HERE.parent))
    summary = r.stdout.strip().splitlines()[-1] if r.stdout.strip() else r.stderr.strip()[-200:]
    ok = r.returncode == 0 and secs < 120
    acceptance_line(7, ok, f"{len(PROPERTY_SUITE)} property tests: {summary}; {secs:.1f} s < 120 s")
    assert ok, r.stdout[-3000:]
