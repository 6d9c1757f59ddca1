import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from botda_deconv.core_model import FiberProfile, Hotspot, PulseScheme, SamplingGrid
from botda_deconv.dpp import (
    ShortPairError,
    cancellation_bound,
    check_pair,
    differential_map,
    differential_trace,
    dpp_kernel,
    envelope_kernel,
    leading_head_residual,
)
from botda_deconv.simulator import ContractError, noiseless_bgs, raw_traces, simulate_trace
from botda_deconv.tv_deconv import apply_operator

BASE = 10.8e9
FIBER = FiberProfile(15, BASE, [Hotspot(5, 1, 10.83e9), Hotspot(9, 0.5, 10.82e9)])


def test_differential_of_single_traces_equals_pair_synthesis():
    grid = SamplingGrid.covering(15, 1e9, 60e-9)
    long = simulate_trace(FIBER, PulseScheme.single(60e-9), 10.81e9, grid, normalize=False)
    short = simulate_trace(FIBER, PulseScheme.single(40e-9), 10.81e9, grid, normalize=False)
    d = differential_trace(long, short)
    assert d.pulse == PulseScheme.pair(60e-9, 40e-9)
    direct = raw_traces(FIBER, 60e-9, [10.81e9], grid)[0] - raw_traces(FIBER, 40e-9, [10.81e9], grid)[0]
    assert np.array_equal(d.samples, direct)
    with pytest.raises(ContractError):
        differential_trace(short, long)


def test_differential_map_axes_checked():
    grid = SamplingGrid.covering(15, 1e9, 60e-9)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = noiseless_bgs(FIBER, PulseScheme.single(60e-9), (10.79e9, 1e6, 5), grid)
        b = noiseless_bgs(FIBER, PulseScheme.single(40e-9), (10.79e9, 1e6, 5), grid)
        c = noiseless_bgs(FIBER, PulseScheme.single(40e-9), (10.79e9, 1e6, 4), grid)
    assert differential_map(a, b).pulse.kind == "pair"
    with pytest.raises(ContractError):
        differential_map(a, c)


@pytest.mark.parametrize("pair, met", [((60e-9, 40e-9), True), ((30e-9, 10e-9), False)])
def test_cancellation_bound_met_or_violated(pair, met):
    p = PulseScheme.pair(*pair)
    residual = leading_head_residual(p, 27e6, BASE)
    bound_40 = cancellation_bound(40e-9, 27e6)
    assert bool(residual <= bound_40) is met
    # the residual never exceeds the pair's own bound
    assert residual <= cancellation_bound(p.width_short_s, 27e6)


def test_short_pair_refused_with_reason():
    with pytest.raises(ShortPairError, match="40"):
        check_pair(PulseScheme.pair(30e-9, 10e-9), 27e6)
    check_pair(PulseScheme.pair(30e-9, 10e-9), 27e6, allow_short_pair=True)
    check_pair(PulseScheme.pair(60e-9, 40e-9), 27e6)
    with pytest.raises(ShortPairError):
        dpp_kernel(PulseScheme.pair(30e-9, 10e-9), 27e6, 1e-9)


@given(st.sampled_from([0.5e9, 1e9, 2e9, 5e9]), st.sampled_from([(60e-9, 40e-9), (80e-9, 50e-9)]))
def test_kernel_unit_sum_and_support(rate, pair):
    k = dpp_kernel(PulseScheme.pair(*pair), 27e6, 1 / rate)
    assert k.samples.sum() == pytest.approx(1.0, abs=1e-12)
    lo, hi = k.support
    # nonzero from the short-pulse width to the long-pulse width
    assert lo == int(round(pair[1] * rate)) or lo == int(round(pair[1] * rate)) - 1
    assert hi == int(np.ceil(pair[0] * rate - 1e-9))


def test_single_pulse_kernel_point_vs_cell():
    p = PulseScheme.single(20e-9)
    cell = envelope_kernel(p, 27e6, 1e-9)
    point = envelope_kernel(p, 27e6, 1e-9, quadrature="point")
    assert cell.samples.sum() == pytest.approx(1.0)
    assert point.samples[0] == 0 and cell.samples[0] > 0
    with pytest.raises(ValueError):
        envelope_kernel(p, 27e6, 1e-9, quadrature="simpson")


@pytest.mark.parametrize("pulse", [PulseScheme.single(20e-9), PulseScheme.pair(60e-9, 40e-9)])
def test_uniform_fibre_trace_is_kernel_times_indicator(pulse):
    """At the BFS, a uniform fibre's trace is the kernel applied to the fibre indicator."""
    f = FiberProfile(10, BASE)
    grid = SamplingGrid.covering(10, 1e9, pulse.width_long_s)
    m = noiseless_bgs(f, pulse, (BASE - 60e6, 60e6, 3), grid)
    k = envelope_kernel(pulse, 27e6, 1e-9)
    lead = grid.lead_in_samples
    indicator = np.zeros(grid.n_samples)
    # 0.1 m cells over 10 m; cell j feeds sample lead + j + 1 through kernel lag 0
    indicator[lead + 1:lead + 101] = 1.0
    assert np.allclose(apply_operator(k, indicator), m.data[1], atol=1e-12)


def test_align_maps_crops_to_common_span():
    import warnings
    from botda_deconv.dpp import align_maps
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = noiseless_bgs(FIBER, PulseScheme.single(60e-9), (10.79e9, 1e6, 3),
                          SamplingGrid.covering(15, 1e9, 60e-9))
        b = noiseless_bgs(FIBER, PulseScheme.single(40e-9), (10.79e9, 1e6, 3),
                          SamplingGrid.covering(15, 1e9, 40e-9))
    la, sb = align_maps(a, b)
    assert la.grid == sb.grid and la.grid.t0_s == pytest.approx(-40e-9)
    assert np.array_equal(la.data, a.data[:, 20:20 + la.grid.n_samples])
    assert np.array_equal(sb.data, b.data[:, :sb.grid.n_samples])
    odd = noiseless_bgs(FIBER, PulseScheme.single(40e-9), (10.79e9, 1e6, 3),
                        SamplingGrid(1e-9, 300, 2e8, -40.5e-9))
    with pytest.raises(ContractError):
        align_maps(a, odd)
