import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from botda_deconv.core_model import FiberProfile, Hotspot, PulseScheme, SamplingGrid
from botda_deconv.simulator import (
    ConfigurationError,
    ContractError,
    GainTrace,
    NoiseSpec,
    add_noise,
    noise_block,
    noiseless_bgs,
    plateau_amplitude,
    raw_traces,
    sigma_to_snr,
    simulate_bgs,
    simulate_trace,
    snr_to_sigma,
)
from oracles import plateau_quad, trace_midpoint, trace_quad

BASE = 10.8e9
TWO_SECTION = FiberProfile(6.0, BASE, [Hotspot(3.0, 3.0, 10.83e9)])


def _segments(f):
    return [(a, b, bfs) for a, b, bfs in f.segments()]


def test_plateau_normalizes_to_one():
    f = FiberProfile(20, BASE)
    for pulse in (PulseScheme.single(20e-9), PulseScheme.single(60e-9), PulseScheme.pair(60e-9, 40e-9)):
        grid = SamplingGrid.covering(20, 1e9, pulse.width_long_s)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = noiseless_bgs(f, pulse, (BASE, 1e6, 1), grid)
        mid = (grid.positions(pulse.response_delay_s) > 5) & (grid.positions(pulse.response_delay_s) < 15)
        assert np.allclose(m.data[0, mid], 1.0, atol=1e-6)


def test_plateau_amplitude_matches_quadrature():
    f = FiberProfile(20, BASE)
    p = plateau_amplitude(f, PulseScheme.single(60e-9), 2e8)
    assert p == pytest.approx(plateau_quad(60e-9), rel=1e-12)


@pytest.mark.parametrize("det", [0.0, 17e6, -35e6])
def test_trace_matches_adaptive_quadrature(det):
    T = 20e-9
    grid = SamplingGrid.covering(TWO_SECTION.length_m, 1e9, T)
    times = grid.times()[::3]
    nu = BASE + det
    ref = trace_quad(_segments(TWO_SECTION), nu, T, times) / plateau_quad(T)
    got = simulate_trace(TWO_SECTION, PulseScheme.single(T), nu, grid).samples[::3]
    assert np.max(np.abs(got - ref)) < 1e-9


def test_midpoint_rule_converges_to_exact_synthesis():
    T = 20e-9
    grid = SamplingGrid.covering(TWO_SECTION.length_m, 1e9, T)
    times = grid.times()
    exact = raw_traces(TWO_SECTION, T, [BASE + 10e6], grid)[0]
    errs = []
    for dz in (0.04, 0.01):
        mid = trace_midpoint(_segments(TWO_SECTION), BASE + 10e6, T, times, dz)
        errs.append(np.max(np.abs(mid - exact)))
    # shrinking dz four-fold must shrink the error markedly (gate edges limit it to ~first order)
    assert errs[1] < errs[0] / 3


def test_causality_before_pulse_enters():
    grid = SamplingGrid.covering(10, 1e9, 60e-9)
    tr = simulate_trace(FiberProfile(10, BASE), PulseScheme.single(60e-9), BASE, grid)
    assert np.all(tr.samples[grid.times() < 0] == 0)
    assert np.all(tr.samples[grid.times() > 0][:5] > 0)


@given(st.floats(0.1, 10.0))
def test_linear_in_gain_scale(k):
    grid = SamplingGrid.covering(6, 1e9, 20e-9)
    r1 = raw_traces(TWO_SECTION, 20e-9, [BASE + 5e6], grid)
    rk = raw_traces(TWO_SECTION.with_gain_scale(k), 20e-9, [BASE + 5e6], grid)
    assert np.allclose(rk, k * r1, rtol=1e-12, atol=0)


def test_time_shift_covariance():
    """Moving a hotspot by one sample spacing moves its signature by one sample."""
    grid = SamplingGrid.covering(12, 1e9, 20e-9)
    a = raw_traces(FiberProfile(12, BASE, [Hotspot(4.0, 2.0, 10.83e9)]), 20e-9, [10.83e9], grid)[0]
    b = raw_traces(FiberProfile(12, BASE, [Hotspot(4.1, 2.0, 10.83e9)]), 20e-9, [10.83e9], grid)[0]
    assert np.allclose(b[200:900], a[199:899], atol=1e-20, rtol=1e-10)


def test_noise_is_white_and_has_target_std():
    sigma = snr_to_sigma(23, convention="amplitude")
    assert sigma == pytest.approx(0.0708, abs=1e-4)
    eta = noise_block((4, 20000), sigma, seed=3)
    assert np.allclose(eta.std(axis=1), sigma, rtol=0.03)
    x = eta[0] - eta[0].mean()
    ac = np.correlate(x, x, "full")[len(x) - 1:len(x) + 5] / (x @ x)
    assert np.all(np.abs(ac[1:]) < 0.03)


@pytest.mark.parametrize("convention", ["amplitude", "ratio"])
@pytest.mark.parametrize("snr", [10.0, 23.0, 30.0])
def test_snr_round_trip_within_tolerance(snr, convention):
    grid = SamplingGrid.covering(500, 1e9, 60e-9)
    tr = simulate_trace(FiberProfile(500, BASE), PulseScheme.single(60e-9), BASE, grid)
    noisy = add_noise(tr, NoiseSpec(snr, seed=11, convention=convention))
    plateau = slice(grid.lead_in_samples + 100, grid.lead_in_samples + 4900)
    measured = sigma_to_snr((noisy.samples - tr.samples)[plateau].std(ddof=1),
                            noisy.samples[plateau].mean(), convention)
    assert abs(measured - snr) <= 0.3
    assert sigma_to_snr(snr_to_sigma(snr, 2.0, convention), 2.0, convention) == pytest.approx(snr)


def test_infinite_snr_adds_nothing_and_unnormalized_needs_amplitude():
    grid = SamplingGrid.covering(5, 1e9, 20e-9)
    tr = simulate_trace(FiberProfile(5, BASE), PulseScheme.single(20e-9), BASE, grid)
    assert np.array_equal(add_noise(tr, NoiseSpec(np.inf)).samples, tr.samples)
    raw = simulate_trace(FiberProfile(5, BASE), PulseScheme.single(20e-9), BASE, grid, normalize=False)
    with pytest.raises(ContractError):
        add_noise(raw, NoiseSpec(20))


def test_seed_determinism_and_channel_order_independence():
    f = FiberProfile(10, BASE, [Hotspot(5, 1, 10.83e9)])
    p = PulseScheme.pair(60e-9, 40e-9)
    grid = SamplingGrid.covering(10, 1e9, 60e-9)
    noise = NoiseSpec(20, seed=5)
    warnings.simplefilter("ignore")
    full = simulate_bgs(f, p, (10.75e9, 2e6, 30), grid, noise)
    again = simulate_bgs(f, p, (10.75e9, 2e6, 30), grid, noise)
    assert np.array_equal(full.data, again.data)
    # a sub-sweep starting at channel 0 reproduces those channels exactly
    part = simulate_bgs(f, p, (10.75e9, 2e6, 10), grid, noise)
    assert np.array_equal(part.data, full.data[:10])
    other = simulate_bgs(f, p, (10.75e9, 2e6, 30), grid, NoiseSpec(20, seed=6))
    assert not np.array_equal(other.data, full.data)
    r1 = simulate_bgs(f, p, (10.75e9, 2e6, 30), grid, noise, realization=1)
    assert not np.array_equal(r1.data, full.data)


def test_single_channel_sweep_equals_simulate_trace():
    grid = SamplingGrid.covering(6, 1e9, 20e-9)
    p = PulseScheme.single(20e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = simulate_bgs(TWO_SECTION, p, (10.81e9, 1e6, 1), grid)
    tr = simulate_trace(TWO_SECTION, p, 10.81e9, grid)
    assert np.array_equal(m.data[0], tr.samples)


def test_transition_spans_six_metres_for_60ns():
    f = FiberProfile(40, BASE, [Hotspot(20, 20, 10.83e9)])
    grid = SamplingGrid.covering(40, 1e9, 60e-9)
    tr = simulate_trace(f, PulseScheme.single(60e-9), 10.83e9, grid)
    lo, hi = tr.samples[grid.lead_in_samples + 150], tr.samples[grid.lead_in_samples + 390]
    moving = np.abs(np.diff(tr.samples[grid.lead_in_samples + 150:grid.lead_in_samples + 390])) > 1e-9 * abs(hi - lo)
    width_m = moving.sum() * grid.dz_m
    assert width_m == pytest.approx(6.0, abs=grid.dz_m)


def test_narrow_sweep_warns_and_short_grid_refused():
    grid = SamplingGrid.covering(6, 1e9, 20e-9)
    with pytest.warns(UserWarning, match="does not cover"):
        noiseless_bgs(TWO_SECTION, PulseScheme.single(20e-9), (10.8e9, 1e6, 5), grid)
    with pytest.raises(ConfigurationError):
        raw_traces(TWO_SECTION, 20e-9, [BASE], SamplingGrid(1e-9, 20))


def test_trace_contract():
    grid = SamplingGrid(1e-9, 10)
    with pytest.raises(ContractError):
        GainTrace(BASE, np.zeros(9), grid, PulseScheme.single(1e-9))
    with pytest.raises(ContractError):
        simulate_trace(TWO_SECTION, PulseScheme.pair(60e-9, 40e-9), BASE,
                       SamplingGrid.covering(6, 1e9, 60e-9))
