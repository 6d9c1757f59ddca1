import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from botda_deconv.core_model import PulseScheme, SamplingGrid
from botda_deconv.io import (
    ConfigError,
    CorruptionError,
    CsvSchema,
    IngestionError,
    bundled_names,
    bundled_scenario,
    ingest_external_trace,
    load_scenario,
    parse_scenario,
    read_bgs,
    read_bgs_header,
    save_scenario,
    write_bgs,
)
from botda_deconv.simulator import BgsMap, NoiseSpec, simulate_bgs

GOOD = """[fiber]
length_m = 40
base_bfs_ghz = 10.8

[hotspot 1]
start_m = 12
length_m = 3
bfs_ghz = 10.83

[pulse]
kind = pair
width_long_ns = 60
width_short_ns = 40
"""


def test_scenario_text_round_trip(tmp_path):
    cfg = parse_scenario(GOOD)
    assert cfg.fiber_profile().hotspots[0].bfs_hz == pytest.approx(10.83e9)
    p = tmp_path / "s.cfg"
    save_scenario(cfg, p)
    again = load_scenario(p)
    assert again == cfg and again.digest() == cfg.digest()


def test_unknown_key_reports_line():
    text = GOOD.replace("width_short_ns = 40", "width_short_ns = 40\nwidht_long_ns = 50")
    with pytest.raises(ConfigError, match=r"<string>:14: unknown key 'widht_long_ns'"):
        parse_scenario(text)
    with pytest.raises(ConfigError, match=r":1: unknown section"):
        parse_scenario("[fibre]\nlength_m = 3\n")


def test_short_pair_config_cites_40ns_rule():
    text = GOOD.replace("width_long_ns = 60", "width_long_ns = 30").replace("short_ns = 40", "short_ns = 10")
    with pytest.raises(ConfigError, match=r"<string>:13: .*40\.0 ns"):
        parse_scenario(text)
    assert parse_scenario(text, allow_short_pair=True).pulse.width_short_ns == 10
    assert parse_scenario(text + "allow_short_pair = true\n").pulse.allow_short_pair


def test_bad_values_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match=":3:"):
        parse_scenario(GOOD.replace("base_bfs_ghz = 10.8", "base_bfs_ghz = ten"))
    with pytest.raises(ConfigError, match="overlaps"):
        parse_scenario(GOOD + "\n[hotspot 2]\nstart_m = 13\nlength_m = 1\nbfs_ghz = 10.83\n")
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "absent.cfg")


def test_bundled_scenarios_parse():
    names = bundled_names()
    assert {"fig2a", "fig3a", "fig3c", "fig5", "fig6a", "fig6b"} <= set(names)
    for n in names:
        bundled_scenario(n)
    fig3c = bundled_scenario("fig3c")
    assert [h.length_m for h in fig3c.hotspots] == [3, 1, 0.5]
    assert fig3c.pulse_scheme() == PulseScheme.pair(60e-9, 40e-9)


def _map(seed=0, n=300):
    rng = np.random.default_rng(seed)
    grid = SamplingGrid(1e-9, n, 2e8, -60e-9)
    m = BgsMap(10.7e9, 1e6, rng.normal(size=(5, n)), grid, PulseScheme.pair(60e-9, 40e-9),
               normalized=True, seed=seed, delay_s=50e-9)
    m.meta["snr_db"] = 23.0
    return m


@settings(max_examples=15)
@given(arrays(float, (3, 40), elements=st.floats(allow_nan=True, allow_infinity=True, width=64)))
def test_map_round_trip_is_bitwise(tmp_path_factory, data):
    grid = SamplingGrid(0.5e-9, 40)
    m = BgsMap(10.7e9, 2e6, data, grid, PulseScheme.single(20e-9))
    p = tmp_path_factory.mktemp("rt") / "m.bgs"
    write_bgs(p, m, "abc")
    back = read_bgs(p)
    assert back.data.tobytes() == m.data.tobytes()
    assert back.grid == grid and back.pulse == m.pulse and back.meta["config_hash"] == "abc"


def test_map_metadata_and_header_only_read(tmp_path):
    m = _map()
    p = tmp_path / "m.bgs"
    write_bgs(p, m, "deadbeef")
    h = read_bgs_header(p)
    assert h["axes"]["freq_unit"] == "Hz" and h["axes"]["n_freqs"] == 5
    assert h["seed"] == 0 and h["config_hash"] == "deadbeef"
    back = read_bgs(p)
    assert back.delay_s == m.delay_s and back.normalized and back.meta["snr_db"] == 23.0
    assert not any(f.startswith(".tmp-") for f in os.listdir(tmp_path))


def test_truncated_or_tampered_map_refused(tmp_path):
    p = tmp_path / "m.bgs"
    write_bgs(p, _map())
    blob = p.read_bytes()
    p.write_bytes(blob[:-8])
    with pytest.raises(CorruptionError, match="bytes"):
        read_bgs(p)
    p.write_bytes(blob[:-8] + b"\0" * 8)
    with pytest.raises(CorruptionError, match="checksum"):
        read_bgs(p)
    p.write_bytes(b"garbage")
    with pytest.raises(CorruptionError):
        read_bgs(p)


def test_csv_trace_in_nanoseconds(tmp_path):
    p = tmp_path / "t.csv"
    t = np.arange(100)
    p.write_text("time_ns,gain\n" + "\n".join(f"{a},{np.sin(a / 9):.6f}" for a in t))
    tr = ingest_external_trace(p, CsvSchema(time_unit="ns", probe_offset_hz=10.8e9))
    assert tr.grid.dt_s == pytest.approx(1e-9) and tr.grid.n_samples == 100
    assert tr.probe_offset_hz == 10.8e9


def test_csv_jitter_reports_row(tmp_path):
    p = tmp_path / "t.csv"
    t = np.arange(50, dtype=float)
    t[17] += 0.2
    p.write_text("t,g\n" + "\n".join(f"{a},1" for a in t))
    with pytest.raises(IngestionError, match="row 18"):
        ingest_external_trace(p, CsvSchema(time_unit="ns"))
    t[17] = 15.0
    p.write_text("t,g\n" + "\n".join(f"{a},1" for a in t))
    with pytest.raises(IngestionError, match="not increasing at row 18"):
        ingest_external_trace(p, CsvSchema(time_unit="ns"))


def test_csv_multi_column_map_and_native_passthrough(tmp_path):
    p = tmp_path / "m.csv"
    cols = [10790, 10800, 10810]
    lines = ["t," + ",".join(map(str, cols))]
    lines += [f"{k},{k},{2 * k},{3 * k}" for k in range(20)]
    p.write_text("\n".join(lines))
    m = ingest_external_trace(p, CsvSchema(time_unit="ns", frequency_unit="MHz"))
    assert m.n_freqs == 3 and m.freq_step_hz == pytest.approx(10e6)
    assert np.array_equal(m.data[2], 3 * np.arange(20))
    q = tmp_path / "m.bgs"
    write_bgs(q, m)
    assert np.array_equal(ingest_external_trace(q).data, m.data)


def test_noise_is_deterministic_under_thread_parallelism():
    cfg = bundled_scenario("fig3c")
    fiber, pulse, grid = cfg.fiber_profile(), cfg.pulse_scheme(), cfg.sampling_grid()
    noise = NoiseSpec(23, seed=9)
    sweep = cfg.sweep_tuple()
    serial = [simulate_bgs(fiber, pulse, sweep, grid, noise, r).data for r in range(4)]
    with ThreadPoolExecutor(4) as ex:
        parallel = list(ex.map(lambda r: simulate_bgs(fiber, pulse, sweep, grid, noise, r).data,
                               reversed(range(4))))
    for a, b in zip(serial, reversed(parallel)):
        assert np.array_equal(a, b)
