import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from botda_deconv.core_model import DomainError
from botda_deconv.io import bundled_scenario
from botda_deconv.resolution import (
    MU_BOUNDS,
    HotspotScenario,
    HotspotStudy,
    dpp_baseline_snr_db,
    find_spatial_resolution,
    search_mu,
)
from botda_deconv.tv_deconv import DeconvConfig


@given(st.floats(1e-3, 1e3), st.floats(0.2, 3.0))
def test_search_finds_power_law_root(mu_star, p):
    fn = lambda m: (m / mu_star) ** p  # noqa: E731
    res = search_mu(fn, 1.0)
    assert res.ok and abs(res.value - 1.0) <= 0.05
    assert len(res.evaluations) <= 40


def test_search_saturated_and_unreachable():
    assert search_mu(lambda m: math.log10(m), 10.0).status == "saturated"
    assert search_mu(lambda m: math.log10(m), -10.0).status == "unreachable"
    res = search_mu(lambda m: math.log10(m), 10.0)
    assert res.mu == MU_BOUNDS[1]


def test_search_respects_absolute_tolerance():
    res = search_mu(lambda m: 20 + math.log(m), 23.0, rel_tol=0.0, abs_tol=0.01)
    assert res.ok and abs(res.value - 23.0) <= 0.01


def test_baseline_is_input_snr_at_matched_pair():
    sc = HotspotScenario()
    assert dpp_baseline_snr_db(2.0, sc) == pytest.approx(sc.input_snr_db)
    assert dpp_baseline_snr_db(0.5, sc) < dpp_baseline_snr_db(1.0, sc) < sc.input_snr_db
    with pytest.raises(DomainError):
        dpp_baseline_snr_db(7.0, sc)


def test_scenario_from_bundled_config():
    sc = HotspotScenario.from_config(bundled_scenario("fig6a"))
    assert sc.hotspot_start_m == 10.05 and sc.snr_convention == "ratio"
    assert sc.hotspot_shift_hz == pytest.approx(30e6)
    with pytest.raises(DomainError):
        HotspotScenario.from_config(bundled_scenario("fig3c"))


SMALL = HotspotScenario(realizations=3)
SOLVER = DeconvConfig(1.0, max_iters=1500)


def test_study_is_deterministic_and_snr_rises_with_mu():
    a = HotspotStudy.from_scenario(SMALL, SOLVER)
    b = HotspotStudy.from_scenario(SMALL, SOLVER)
    assert np.array_equal(a.noisy, b.noisy)
    s = [a.snr(mu).snr_db for mu in (1e-3, 1e-2, 1e-1)]
    assert s[0] < s[1] < s[2]
    assert b.snr(1e-2).snr_db == pytest.approx(s[1], abs=1e-3)  # cold vs warm start


def test_degradation_grows_with_mu_and_hotspot_must_be_sampled():
    st_ = HotspotStudy.from_scenario(replace_length(0.5), SOLVER)
    d = [st_.degradation(mu).degradation_hz for mu in (1e-3, 1e-1)]
    assert d[0] < d[1]
    with pytest.raises(DomainError):
        HotspotStudy.from_scenario(replace_length(0.2))


def replace_length(L):
    from dataclasses import replace
    return replace(SMALL, hotspot_length_m=L)


def test_larger_tolerance_never_gives_lower_snr():
    pts = find_spatial_resolution(SMALL, [0.1e6, 0.5e6, math.inf], lengths_m=(1.0,), solver=SOLVER)
    by_tol = sorted(pts, key=lambda p: p.tolerance_hz)
    assert [p.status for p in by_tol][-1] == "saturated"
    assert by_tol[-1].mu == MU_BOUNDS[1]
    snrs = [p.snr_db for p in by_tol]
    assert snrs[0] <= snrs[1] <= snrs[2]
