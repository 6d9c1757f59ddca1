"""Scenario configs, BGS map persistence and ingestion of measured traces.

Scenario files are INI-style with the unit in every key name
(``width_long_ns``, ``base_bfs_ghz``, ...).  Maps are stored as a text
header followed by a little-endian float64 payload in ``[freq, time]`` order.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .core_model import DEFAULT_GROUP_VELOCITY, DEFAULT_LINEWIDTH_HZ, DomainError, FiberProfile, \
    Hotspot, PulseScheme, SamplingGrid
from .dpp import ShortPairError, check_pair
from .simulator import BgsMap, GainTrace


class ConfigError(ValueError):
    """Malformed or invalid scenario file; the message starts with ``path:line``."""


class CorruptionError(ValueError):
    """A persisted map is truncated or inconsistent with its header."""


class IngestionError(ValueError):
    """An external trace file cannot be turned into a trace or map."""


# -- scenario configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class FiberSection:
    length_m: float = 40.0
    base_bfs_ghz: float = 10.8
    linewidth_mhz: float = DEFAULT_LINEWIDTH_HZ / 1e6
    gain_scale: float = 1.0


@dataclass(frozen=True)
class HotspotSection:
    start_m: float
    length_m: float
    bfs_ghz: float


@dataclass(frozen=True)
class PulseSection:
    kind: str = "pair"
    width_long_ns: float = 60.0
    width_short_ns: float | None = 40.0
    allow_short_pair: bool = False


@dataclass(frozen=True)
class GridSection:
    sample_rate_gsps: float = 1.0
    group_velocity_m_per_s: float = DEFAULT_GROUP_VELOCITY


@dataclass(frozen=True)
class SweepSection:
    start_ghz: float = 10.7
    step_mhz: float = 1.0
    count: int = 231


@dataclass(frozen=True)
class NoiseSection:
    snr_db: float = math.inf
    seed: int = 0
    realizations: int = 1
    convention: str = "amplitude"


@dataclass(frozen=True)
class DeconvSection:
    mode: str = "mu"  # "mu" or "tolerance"
    mu: float = 1e-4
    tolerance_mhz: float = 0.1
    max_iters: int = 500
    rel_tolerance: float = 1e-6
    penalty_rho: float = 2.0
    nonneg: bool = False


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    formats: tuple = ("csv", "svg")


@dataclass(frozen=True)
class ScenarioConfig:
    fiber: FiberSection = field(default_factory=FiberSection)
    hotspots: tuple = ()
    pulse: PulseSection = field(default_factory=PulseSection)
    grid: GridSection = field(default_factory=GridSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    deconv: DeconvSection = field(default_factory=DeconvSection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- model objects
    def fiber_profile(self) -> FiberProfile:
        hs = tuple(Hotspot(h.start_m, h.length_m, h.bfs_ghz * 1e9) for h in self.hotspots)
        f = self.fiber
        return FiberProfile(f.length_m, f.base_bfs_ghz * 1e9, hs, f.linewidth_mhz * 1e6, f.gain_scale)

    def pulse_scheme(self) -> PulseScheme:
        p = self.pulse
        if p.kind == "single":
            return PulseScheme.single(p.width_long_ns / 1e9)
        return PulseScheme.pair(p.width_long_ns / 1e9, (p.width_short_ns or 0.0) / 1e9)

    def sampling_grid(self) -> SamplingGrid:
        return SamplingGrid.covering(self.fiber.length_m, self.grid.sample_rate_gsps * 1e9,
                                     self.pulse.width_long_ns / 1e9, self.grid.group_velocity_m_per_s)

    def sweep_tuple(self) -> tuple[float, float, int]:
        return self.sweep.start_ghz * 1e9, self.sweep.step_mhz * 1e6, self.sweep.count

    # -- text form
    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for name in _SECTIONS:
            cp[name] = {k: _fmt(v) for k, v in dataclasses.asdict(getattr(self, name)).items()
                        if v is not None}
        for i, h in enumerate(self.hotspots, 1):
            cp[f"hotspot {i}"] = {k: _fmt(v) for k, v in dataclasses.asdict(h).items()}
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in cp[sec].items()]
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        """Short hash of the canonical text form, embedded in every output."""
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


_SECTIONS = {
    "fiber": FiberSection, "pulse": PulseSection, "grid": GridSection, "sweep": SweepSection,
    "noise": NoiseSection, "deconv": DeconvSection, "output": OutputSection,
}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, (tuple, list)):
        return ", ".join(str(x) for x in v)
    return str(v)


def _parse_value(raw: str, typ, where: str):
    raw = raw.strip()
    base = typ
    if isinstance(typ, str):
        base = {"float": float, "int": int, "bool": bool, "str": str, "tuple": tuple,
                "float | None": float}.get(typ, str)
    try:
        if base is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if base is int:
            return int(raw)
        if base is float:
            return float(raw)
        if base is tuple:
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of every ``key`` inside every ``[section]``."""
    out, sec = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", s)
        if m:
            sec = m.group(1).strip()
            out[(sec, None)] = no
            continue
        key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
        out[(sec, key)] = no
    return out


def parse_scenario(text: str, source: str = "<string>", allow_short_pair: bool = False) -> ScenarioConfig:
    """Parse and validate scenario text; every error names ``source:line``.

    ``allow_short_pair`` overrides the 40 ns pair guard (as the config's own
    ``allow_short_pair`` key does).
    """
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: expected a [section] header") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else 0
        raise ConfigError(f"{source}:{lineno}: cannot parse line") from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(f"{source}:{exc.lineno}: {exc.message if hasattr(exc, 'message') else exc}") \
            from None
    lines = _key_lines(text)

    def loc(sec, key=None):
        return f"{source}:{lines.get((sec, key), lines.get((sec, None), 0))}"

    parts: dict = {}
    hotspots = []
    for sec in cp.sections():
        m = re.fullmatch(r"hotspot\s+(\d+)", sec)
        if m:
            cls = HotspotSection
        elif sec in _SECTIONS:
            cls = _SECTIONS[sec]
        else:
            raise ConfigError(f"{loc(sec)}: unknown section [{sec}]")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        vals = {}
        for key, raw in cp[sec].items():
            if key not in fields:
                raise ConfigError(f"{loc(sec, key)}: unknown key '{key}' in [{sec}] "
                                  f"(allowed: {', '.join(fields)})")
            vals[key] = _parse_value(raw, fields[key].type, f"{loc(sec, key)}: [{sec}] {key}")
        try:
            obj = cls(**vals)
        except TypeError as exc:
            raise ConfigError(f"{loc(sec)}: [{sec}] {exc}") from None
        if m:
            hotspots.append((int(m.group(1)), obj))
        else:
            parts[sec] = obj
    hotspots.sort(key=lambda p: p[0])
    cfg = ScenarioConfig(hotspots=tuple(h for _, h in hotspots), **parts)
    _validate(cfg, source, lines, allow_short_pair)
    return cfg


def _validate(cfg: ScenarioConfig, source: str, lines, allow_short_pair: bool = False):
    def at(sec, key=None):
        return f"{source}:{lines.get((sec, key), lines.get((sec, None), 0))}"

    try:
        fiber = cfg.fiber_profile()
    except DomainError as exc:
        raise ConfigError(f"{at('fiber')}: invalid fiber: {exc}") from None
    if cfg.pulse.kind not in ("single", "pair"):
        raise ConfigError(f"{at('pulse', 'kind')}: pulse kind must be 'single' or 'pair'")
    try:
        pulse = cfg.pulse_scheme()
    except DomainError as exc:
        raise ConfigError(f"{at('pulse')}: invalid pulse: {exc}") from None
    try:
        check_pair(pulse, fiber.linewidth_hz, cfg.pulse.allow_short_pair or allow_short_pair)
    except ShortPairError as exc:
        raise ConfigError(f"{at('pulse', 'width_short_ns')}: {exc}") from None
    if not cfg.grid.sample_rate_gsps > 0 or not cfg.grid.group_velocity_m_per_s > 0:
        raise ConfigError(f"{at('grid')}: sample rate and group velocity must be positive")
    if cfg.sweep.count < 1 or (cfg.sweep.count > 1 and not cfg.sweep.step_mhz > 0):
        raise ConfigError(f"{at('sweep')}: sweep needs count >= 1 and a positive step")
    if cfg.noise.convention not in ("amplitude", "ratio"):
        raise ConfigError(f"{at('noise', 'convention')}: convention must be 'amplitude' or 'ratio'")
    if math.isnan(cfg.noise.snr_db) or cfg.noise.snr_db == -math.inf:
        raise ConfigError(f"{at('noise', 'snr_db')}: snr_db must be finite or inf")
    if cfg.noise.realizations < 1:
        raise ConfigError(f"{at('noise', 'realizations')}: realizations must be >= 1")
    d = cfg.deconv
    if d.mode not in ("mu", "tolerance"):
        raise ConfigError(f"{at('deconv', 'mode')}: mode must be 'mu' or 'tolerance'")
    if not d.mu >= 0 or d.max_iters < 1 or not d.rel_tolerance > 0 or not d.penalty_rho > 0:
        raise ConfigError(f"{at('deconv')}: need mu >= 0, max_iters >= 1, rel_tolerance > 0, "
                          f"penalty_rho > 0")


def load_scenario(path, allow_short_pair: bool = False) -> ScenarioConfig:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}:0: {exc.strerror}") from None
    return parse_scenario(text, path, allow_short_pair)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    _atomic_write(path, cfg.to_text().encode())


def bundled_scenario(name: str) -> ScenarioConfig:
    """One of the scenario files shipped in ``botda_deconv/scenarios``."""
    here = os.path.join(os.path.dirname(__file__), "scenarios")
    fname = name if name.endswith(".cfg") else name + ".cfg"
    return load_scenario(os.path.join(here, fname))


def bundled_names() -> list[str]:
    here = os.path.join(os.path.dirname(__file__), "scenarios")
    return sorted(f[:-4] for f in os.listdir(here) if f.endswith(".cfg"))


# -- BGS map persistence ------------------------------------------------------------------

MAGIC = b"BGSMAP1\n"


def _atomic_write(path, payload: bytes):
    """Write to a temporary sibling and rename, so readers never see a partial file."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pulse_dict(p: PulseScheme | None):
    if p is None:
        return None
    return {"kind": p.kind, "width_long_s": p.width_long_s, "width_short_s": p.width_short_s}


def _pulse_from(d) -> PulseScheme | None:
    if d is None:
        return None
    return PulseScheme(d["kind"], d["width_long_s"], d["width_short_s"])


def map_header(m: BgsMap, config_hash: str | None = None) -> dict:
    data = np.ascontiguousarray(m.data, dtype="<f8")
    return {
        "format": "bgsmap/1",
        "axes": {"freq_start_hz": m.freq_start_hz, "freq_step_hz": m.freq_step_hz,
                 "n_freqs": m.n_freqs, "n_samples": m.grid.n_samples,
                 "freq_unit": "Hz", "time_unit": "s"},
        "grid": {"dt_s": m.grid.dt_s, "n_samples": m.grid.n_samples,
                 "group_velocity_m_per_s": m.grid.group_velocity_m_per_s, "t0_s": m.grid.t0_s},
        "pulse": _pulse_dict(m.pulse),
        "normalized": m.normalized,
        "recovered": m.recovered,
        "delay_s": m.delay_s,
        "seed": m.seed,
        "config_hash": config_hash if config_hash is not None else m.meta.get("config_hash"),
        "meta": m.meta,
        "payload": {"dtype": "<f8", "order": "C", "shape": [m.n_freqs, m.grid.n_samples],
                    "bytes": data.nbytes, "sha256": hashlib.sha256(data.tobytes()).hexdigest()},
    }


def write_bgs(path, m: BgsMap, config_hash: str | None = None) -> dict:
    """Persist ``m``; returns the header written."""
    header = map_header(m, config_hash)
    text = json.dumps(header, indent=1, sort_keys=True, default=_json_default).encode()
    payload = np.ascontiguousarray(m.data, dtype="<f8").tobytes()
    blob = MAGIC + f"{len(text)}\n".encode() + text + b"\n" + payload
    _atomic_write(path, blob)
    return header


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _read_header(fh, path):
    if fh.read(len(MAGIC)) != MAGIC:
        raise CorruptionError(f"{path}: not a BGS map file")
    line = fh.readline()
    try:
        size = int(line)
        header = json.loads(fh.read(size))
    except ValueError:
        raise CorruptionError(f"{path}: unreadable header") from None
    if fh.read(1) != b"\n":
        raise CorruptionError(f"{path}: header length mismatch")
    return header


def read_bgs_header(path) -> dict:
    """Header only (axes, units, pulse, seed, hash); the payload is not read."""
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def read_bgs(path) -> BgsMap:
    with open(path, "rb") as fh:
        h = _read_header(fh, path)
        raw = fh.read()
    pay = h["payload"]
    nf, n = pay["shape"]
    if len(raw) != pay["bytes"] or pay["bytes"] != nf * n * 8:
        raise CorruptionError(f"{path}: payload has {len(raw)} bytes, header declares {pay['bytes']}")
    if hashlib.sha256(raw).hexdigest() != pay["sha256"]:
        raise CorruptionError(f"{path}: payload checksum mismatch")
    data = np.frombuffer(raw, dtype="<f8").reshape(nf, n).astype(float)
    g = h["grid"]
    grid = SamplingGrid(g["dt_s"], g["n_samples"], g["group_velocity_m_per_s"], g["t0_s"])
    ax = h["axes"]
    meta = dict(h.get("meta") or {})
    if h.get("config_hash") is not None:
        meta["config_hash"] = h["config_hash"]
    return BgsMap(ax["freq_start_hz"], ax["freq_step_hz"], data, grid, _pulse_from(h["pulse"]),
                  h["normalized"], h["seed"], h["delay_s"], h["recovered"], meta)


def write_trace(path, tr: GainTrace, config_hash: str | None = None) -> dict:
    m = BgsMap(tr.probe_offset_hz, 0.0, tr.samples[None, :], tr.grid, tr.pulse, tr.normalized,
               tr.seed, tr.delay_s)
    return write_bgs(path, m, config_hash)


# -- external traces ----------------------------------------------------------------------

# divisors, so that e.g. 60 ns -> 60 / 1e9 is the correctly rounded 6e-08
_TIME_UNITS = {"s": 1.0, "ms": 1e3, "us": 1e6, "ns": 1e9, "ps": 1e12}
_FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping of a delimited trace file.

    ``time_column`` names (or indexes) the time axis; ``gain_columns`` the
    data columns (default: every other column).  With several gain columns
    their header cells are read as probe frequencies in ``frequency_unit``;
    with one, ``probe_offset_hz`` gives the frequency.
    """

    time_column: str | int = 0
    gain_columns: tuple | None = None
    time_unit: str = "s"
    frequency_unit: str = "Hz"
    probe_offset_hz: float | None = None
    delimiter: str = ","
    group_velocity_m_per_s: float = DEFAULT_GROUP_VELOCITY
    pulse: PulseScheme | None = None
    normalized: bool = False
    max_jitter: float = 0.01


def _column_index(header, col, path):
    if isinstance(col, int):
        if not 0 <= col < len(header):
            raise IngestionError(f"{path}: column {col} out of range")
        return col
    try:
        return header.index(col)
    except ValueError:
        raise IngestionError(f"{path}: no column named {col!r} (have {header})") from None


def check_uniform_axis(t, max_jitter: float = 0.01, first_row: int = 1, what: str = "time") -> float:
    """Sample interval of ``t``; raises with the first offending row otherwise."""
    t = np.asarray(t, dtype=float)
    if t.size < 2:
        raise IngestionError(f"need at least 2 {what} samples")
    d = np.diff(t)
    bad = np.flatnonzero(d <= 0)
    if bad.size:
        raise IngestionError(f"{what} axis not increasing at row {first_row + bad[0] + 1}")
    step = (t[-1] - t[0]) / (t.size - 1)
    bad = np.flatnonzero(np.abs(d - step) > max_jitter * step)
    if bad.size:
        k = bad[0]
        raise IngestionError(f"non-uniform {what} axis at row {first_row + k + 1}: step {d[k]:.6g} "
                             f"deviates more than {max_jitter:.0%} from {step:.6g}")
    return float(step)


def ingest_external_trace(path, schema: CsvSchema | None = None):
    """Read a measured trace or sweep into a :class:`GainTrace` / :class:`BgsMap`.

    Files starting with the native map magic are read with :func:`read_bgs`
    (a single-channel map becomes a trace).  Otherwise the file is delimited
    text with one header row.
    """
    path = os.fspath(path)
    with open(path, "rb") as fh:
        native = fh.read(len(MAGIC)) == MAGIC
    if native:
        m = read_bgs(path)
        return m.trace(0) if m.n_freqs == 1 else m
    schema = schema or CsvSchema()
    if schema.time_unit not in _TIME_UNITS:
        raise IngestionError(f"unknown time unit {schema.time_unit!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter=schema.delimiter) if r and any(c.strip() for c in r)]
    if len(rows) < 3:
        raise IngestionError(f"{path}: need a header row and at least 2 data rows")
    header = [c.strip() for c in rows[0]]
    ti = _column_index(header, schema.time_column, path)
    if schema.gain_columns is None:
        gcols = [i for i in range(len(header)) if i != ti]
    else:
        gcols = [_column_index(header, c, path) for c in schema.gain_columns]
    if not gcols:
        raise IngestionError(f"{path}: no gain columns")
    body = rows[1:]
    vals = np.empty((len(body), len(header)))
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise IngestionError(f"{path}: row {r + 2} has {len(row)} fields, header has {len(header)}")
        try:
            vals[r] = [float(c) for c in row]
        except ValueError:
            raise IngestionError(f"{path}: row {r + 2} holds a non-numeric field") from None
    t = vals[:, ti] / _TIME_UNITS[schema.time_unit]
    try:
        dt = check_uniform_axis(t, schema.max_jitter, first_row=1)
    except IngestionError as exc:
        raise IngestionError(f"{path}: {exc}") from None
    grid = SamplingGrid(dt, len(t), schema.group_velocity_m_per_s, float(t[0]))
    delay = schema.pulse.response_delay_s if schema.pulse is not None else 0.0
    if len(gcols) == 1:
        nu = schema.probe_offset_hz
        if nu is None:
            try:
                nu = float(header[gcols[0]]) * _FREQ_UNITS[schema.frequency_unit.lower()]
            except ValueError:
                nu = float("nan")
        return GainTrace(nu, vals[:, gcols[0]], grid, schema.pulse, schema.normalized, None, delay)
    try:
        freqs = np.array([float(header[i]) for i in gcols]) * _FREQ_UNITS[schema.frequency_unit.lower()]
    except (ValueError, KeyError):
        raise IngestionError(f"{path}: header cells of the gain columns must be frequencies "
                             f"in {schema.frequency_unit}") from None
    try:
        step = check_uniform_axis(freqs, 1e-6, first_row=0, what="frequency")
    except IngestionError as exc:
        raise IngestionError(f"{path}: {exc} (header columns)") from None
    return BgsMap(float(freqs[0]), step, vals[:, gcols].T.copy(), grid, schema.pulse,
                  schema.normalized, None, delay)
