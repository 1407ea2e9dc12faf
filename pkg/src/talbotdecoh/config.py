"""Run configuration: TOML text in, validated settings out.

Every physical key carries its unit in the name (``period_nm``,
``pressure_mbar``).  Keys normally live in sections; a key that exists in
only one section may also be given at top level.  Unknown keys, missing
required keys, wrong unit suffixes and out-of-range values are rejected with
the key name and line number.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field

from .beamline import (
    DEFAULT_APERTURE_HEIGHT,
    DEFAULT_MID_OFFSET,
    KICK_LAWS,
    BeamlineConfig,
    CollisionKickModel,
)
from .collisions import QuadratureSpec, ScatteringModel
from .core_model import GAS_TABLE, GasSpecies, MoleculeSpecies, mbar_to_pa
from .errors import ConfigError, DomainError
from .experiment import ExperimentConditions, NoiseModel, default_pressures
from .talbot_lau import CALIBRATED_PHASE_PARAMETER, GratingSpec, InterferometerGeometry

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

__all__ = ["RunConfig", "parse_config", "serialize_config", "load_config", "SCHEMA"]

UNIT_SUFFIXES = ("meV_nm6", "mps2", "mps", "mbar", "nm", "um", "amu", "K", "m", "s")


@dataclass(frozen=True)
class Field:
    kind: type
    default: object
    check: object = None  # callable(value) -> error message or None
    choices: tuple = ()
    optional: bool = False


def _positive(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be non-negative"


def _at_least(lo):
    return lambda v: None if v >= lo else f"must be >= {lo}"


def _unit_interval_open(v):
    return None if 0.0 <= v < 1.0 else "must lie in [0, 1)"


def _fraction(v):
    return None if 0.0 < v <= 1.0 else "must lie in (0, 1]"


def _closed_unit(v):
    return None if 0.0 <= v <= 1.0 else "must lie in [0, 1]"


def _finite(v):
    return None if math.isfinite(v) else "must be finite"


def _pressure_list(v):
    if len(v) < 1:
        return "must contain at least one pressure"
    if any(x < 0 for x in v):
        return "pressures must be non-negative"
    if any(b <= a for a, b in zip(v, v[1:])):
        return "pressures must be strictly increasing"
    return None


_DEFAULT_PRESSURES_MBAR = tuple(float(p) / 100.0 for p in default_pressures())

SCHEMA = {
    "run": {
        "seed": Field(int, 0, _nonneg),
        "threads": Field(int, 1, _at_least(1)),
    },
    "molecule": {
        "name": Field(str, "C70"),
        "mass_amu": Field(float, 840.77, _positive),
    },
    "gas": {
        "name": Field(str, "CH4"),
        "temperature_K": Field(float, 300.0, _positive),
    },
    "interferometer": {
        "period_nm": Field(float, 991.0, _positive),
        "slit_width_nm": Field(float, 475.0, _positive),
        "spacing_m": Field(float, 0.22, _positive),
        "phase_parameter": Field(float, CALIBRATED_PHASE_PARAMETER, _finite),
        "velocity_mps": Field(float, 117.0, _positive),
        "l_max": Field(int, 5, _at_least(1)),
        "fringe_samples": Field(int, 64, _at_least(8)),
    },
    "scattering": {
        "model": Field(str, "complete", choices=("complete", "isotropic", "forward_peaked")),
        "forward_g": Field(float, 0.0, _unit_interval_open),
        "rel_tol": Field(float, 1e-6, _positive),
        "method": Field(str, "closed-form", choices=("closed-form", "nested")),
    },
    "scan": {
        "mode": Field(str, "analytic", choices=("analytic", "beamline")),
        "pressures_mbar": Field(list, _DEFAULT_PRESSURES_MBAR, _pressure_list),
        "vacuum_visibility": Field(float, None, _closed_unit, optional=True),
        "beamline_samples": Field(int, 200_000, _at_least(10_000)),
    },
    "noise": {
        "shot_noise": Field(bool, True),
        "counts_per_position": Field(float, 5e4, _positive),
        "contrast_floor": Field(float, 1.0, _fraction),
        "relative_noise": Field(float, 0.0, _nonneg),
        "n_positions": Field(int, 16, _at_least(8)),
    },
    "beamline": {
        "source_height_um": Field(float, DEFAULT_APERTURE_HEIGHT * 1e6, _nonneg),
        "mid_height_um": Field(float, DEFAULT_APERTURE_HEIGHT * 1e6, _nonneg),
        "detector_height_um": Field(float, DEFAULT_APERTURE_HEIGHT * 1e6, _nonneg),
        "mid_offset_um": Field(float, DEFAULT_MID_OFFSET * 1e6, _finite),
        "mid_z_m": Field(float, 1.19, _positive),
        "detector_z_m": Field(float, 2.38, _positive),
        "oven_temperature_K": Field(float, 900.0, _positive),
        "gravity_mps2": Field(float, 9.80665, _nonneg),
        "window_factor": Field(float, 1.5, _at_least(1.0)),
        "band_lo_factor": Field(float, 0.8, _positive),
        "band_hi_factor": Field(float, 1.25, _positive),
        "target_velocity_mps": Field(float, 117.0, _positive),
        "n_samples": Field(int, 1_000_000, _at_least(10_000)),
        "n_bins": Field(int, 200, _at_least(1)),
        "pressure_mbar": Field(float, 0.0, _nonneg),
        "kick_law": Field(str, "diffractive", choices=tuple(KICK_LAWS)),
        "kick_param": Field(float, 0.0, _unit_interval_open),
    },
    "eta_profile": {
        "eta_model": Field(str, "isotropic", choices=("complete", "isotropic", "forward_peaked")),
        "delta_r_min_m": Field(float, 1e-13, _positive),
        "delta_r_max_m": Field(float, 1e-9, _positive),
        "n_points": Field(int, 50, _at_least(2)),
    },
    "extrapolate": {
        "particle_mass_amu": Field(float, 5e7, _positive),
        "particle_velocity_mps": Field(float, 10.0, _positive),
        "length_m": Field(float, 1.0, _positive),
    },
}

GAS_ENTRY = {
    "mass_amu": Field(float, None, _positive),
    "c6_meV_nm6": Field(float, None, _positive),
}

# execution-only settings: they never change results and are not echoed
EXECUTION_KEYS = {("run", "threads")}


def _flat_index():
    seen = {}
    for section, fields in SCHEMA.items():
        for key in fields:
            seen.setdefault(key, []).append(section)
    return seen


_FLAT = _flat_index()


def _split_unit(key):
    for suffix in UNIT_SUFFIXES:
        if key.endswith("_" + suffix):
            return key[: -len(suffix) - 1], suffix
    return key, None


def _line_index(text):
    """Map ``(section, key)`` to the 1-based line of its assignment."""
    index = {}
    section = ""
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", line)
        if m:
            section = m.group(1).replace('"', "").replace(" ", "")
            index.setdefault((section, None), n)
            continue
        m = re.match(r'^("?)([A-Za-z0-9_\-]+)\1\s*=', line)
        if m:
            index.setdefault((section, m.group(2)), n)
    return index


@dataclass(frozen=True, eq=True)
class RunConfig:
    """Validated settings; ``values[section][key]`` in the units of the key name."""

    values: dict = field(default_factory=dict)
    gas_table: dict = field(default_factory=dict)

    def __getitem__(self, item):
        return self.values[item]

    def get(self, section, key):
        return self.values[section][key]

    def with_value(self, section, key, value) -> "RunConfig":
        vals = {s: dict(kv) for s, kv in self.values.items()}
        vals[section][key] = value
        return RunConfig(vals, dict(self.gas_table))

    def to_dict(self, echo: bool = False) -> dict:
        out = {}
        for section, kv in self.values.items():
            out[section] = {
                k: (list(v) if isinstance(v, tuple) else v)
                for k, v in kv.items()
                if not (echo and (section, k) in EXECUTION_KEYS)
            }
        out["gas_table"] = {n: {"mass_amu": g.mass, "c6_meV_nm6": g.c6} for n, g in self.gas_table.items()}
        return out

    # --- domain objects --------------------------------------------------

    def gas_species(self, name=None) -> GasSpecies:
        name = name or self.get("gas", "name")
        if name in self.gas_table:
            return self.gas_table[name]
        return GAS_TABLE[name]

    def all_gases(self) -> list:
        merged = dict(GAS_TABLE)
        merged.update(self.gas_table)
        return list(merged.values())

    def molecule(self) -> MoleculeSpecies:
        m = self.values["molecule"]
        return MoleculeSpecies(m["name"], m["mass_amu"])

    def geometry(self) -> InterferometerGeometry:
        i = self.values["interferometer"]
        g = GratingSpec(i["period_nm"] * 1e-9, i["slit_width_nm"] * 1e-9, i["phase_parameter"])
        return InterferometerGeometry.symmetric(g, i["spacing_m"])

    def scattering_model(self, which="model") -> ScatteringModel:
        s = self.values["scattering"]
        name = s["model"] if which == "model" else self.values["eta_profile"]["eta_model"]
        if name == "forward_peaked":
            return ScatteringModel.forward_peaked(s["forward_g"])
        return ScatteringModel(name)

    def quadrature(self) -> QuadratureSpec:
        s = self.values["scattering"]
        return QuadratureSpec(rel_tol=s["rel_tol"], method=s["method"])

    def noise(self) -> NoiseModel:
        n = self.values["noise"]
        return NoiseModel(n["shot_noise"], n["counts_per_position"], n["contrast_floor"],
                          n["relative_noise"], n["n_positions"])

    def beamline(self) -> BeamlineConfig:
        b = self.values["beamline"]
        return BeamlineConfig(
            source_height=b["source_height_um"] * 1e-6,
            oven_temperature=b["oven_temperature_K"],
            mid_z=b["mid_z_m"],
            mid_height=b["mid_height_um"] * 1e-6,
            mid_y=b["mid_offset_um"] * 1e-6,
            detector_z=b["detector_z_m"],
            detector_height=b["detector_height_um"] * 1e-6,
            interferometer=self.geometry(),
            gravity=b["gravity_mps2"],
            band_factors=(b["band_lo_factor"], b["band_hi_factor"]),
            window_factor=b["window_factor"],
            target_speed=b["target_velocity_mps"],
            molecule=self.molecule(),
        )

    def kick(self, gas=None) -> CollisionKickModel:
        b = self.values["beamline"]
        return CollisionKickModel(gas or self.gas_species(), self.get("gas", "temperature_K"),
                                  b["kick_law"], b["kick_param"])

    def conditions(self) -> ExperimentConditions:
        sc = self.values["scan"]
        return ExperimentConditions(
            v_m=self.get("interferometer", "velocity_mps"),
            temperature=self.get("gas", "temperature_K"),
            geometry=self.geometry(),
            molecule=self.molecule(),
            v0=sc["vacuum_visibility"],
            l_max=self.get("interferometer", "l_max"),
            model=self.scattering_model(),
            mode=sc["mode"],
            beamline=self.beamline(),
            beamline_samples=sc["beamline_samples"],
            kick_law=self.get("beamline", "kick_law"),
            threads=self.get("run", "threads"),
        )

    def pressures_pa(self):
        return [mbar_to_pa(p) for p in self.get("scan", "pressures_mbar")]


def _coerce(value, fld: Field, key, line):
    kind = fld.kind
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", key, line)
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected an integer, got {value!r}", key, line)
        if isinstance(value, float) and not (math.isfinite(value) and value == int(value)):
            raise ConfigError(f"expected an integer, got {value!r}", key, line)
        return int(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key, line)
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key, line)
        if fld.choices and value not in fld.choices:
            raise ConfigError(f"must be one of {', '.join(fld.choices)}; got {value!r}", key, line)
        return value
    if kind is list:
        if not isinstance(value, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in value
        ):
            raise ConfigError(f"expected a list of numbers, got {value!r}", key, line)
        return tuple(float(x) for x in value)
    raise AssertionError(kind)  # pragma: no cover


def _unknown_key_error(key, section, fields, line):
    base, unit = _split_unit(key)
    for known in fields:
        kbase, kunit = _split_unit(known)
        if kbase == base and kunit != unit:
            if unit is None:
                msg = f"missing unit suffix; expected '{known}'"
            else:
                msg = f"unit suffix mismatch; expected '{known}'"
            return ConfigError(msg, key, line)
    where = f"section [{section}]" if section else "top level"
    return ConfigError(f"unknown key in {where}", key, line)


def _check(value, fld: Field, key, line):
    if fld.check is not None and value is not None:
        problem = fld.check(value)
        if problem:
            raise ConfigError(f"value {value!r} out of range: {problem}", key, line)


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text; missing keys take defaults."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed configuration: {exc}", None, int(m.group(1)) if m else None) from None
    lines = _line_index(text)
    values = {s: {k: f.default for k, f in fields.items()} for s, fields in SCHEMA.items()}
    given = set()

    def assign(section, key, raw, line):
        fld = SCHEMA[section][key]
        if (section, key) in given:
            raise ConfigError("given twice (top level and in its section)", key, line)
        val = _coerce(raw, fld, key, line)
        _check(val, fld, key, line)
        values[section][key] = val
        given.add((section, key))

    gas_table = {}
    for top_key, top_val in data.items():
        if isinstance(top_val, dict) and top_key == "gas_table":
            for name, entry in top_val.items():
                line = lines.get((f"gas_table.{name}", None))
                if not isinstance(entry, dict):
                    raise ConfigError("gas_table entries must be tables", f"gas_table.{name}", line)
                for k in entry:
                    if k not in GAS_ENTRY:
                        raise _unknown_key_error(k, f"gas_table.{name}", GAS_ENTRY,
                                                 lines.get((f"gas_table.{name}", k)))
                parsed = {}
                for k, fld in GAS_ENTRY.items():
                    kl = lines.get((f"gas_table.{name}", k), line)
                    if k not in entry:
                        raise ConfigError(f"missing required key in [gas_table.{name}]", k, line)
                    parsed[k] = _coerce(entry[k], fld, k, kl)
                    _check(parsed[k], fld, k, kl)
                gas_table[name] = GasSpecies(name, parsed["mass_amu"], parsed["c6_meV_nm6"])
        elif isinstance(top_val, dict):
            if top_key not in SCHEMA:
                raise ConfigError("unknown section", top_key, lines.get((top_key, None)))
            for key, raw in top_val.items():
                line = lines.get((top_key, key))
                if key not in SCHEMA[top_key]:
                    raise _unknown_key_error(key, top_key, SCHEMA[top_key], line)
                assign(top_key, key, raw, line)
        else:
            line = lines.get(("", top_key))
            sections = _FLAT.get(top_key)
            if sections is None:
                all_fields = {k: None for k in _FLAT}
                raise _unknown_key_error(top_key, "", all_fields, line)
            if len(sections) > 1:
                raise ConfigError(
                    f"ambiguous at top level; put it in one of [{'], ['.join(sections)}]", top_key, line
                )
            assign(sections[0], top_key, top_val, line)

    cfg = RunConfig(values, gas_table)
    _cross_validate(cfg, lines)
    return cfg


def _cross_validate(cfg: RunConfig, lines):
    def where(section, key):
        return lines.get((section, key), lines.get(("", key)))

    gas = cfg.get("gas", "name")
    if gas not in cfg.gas_table and gas not in GAS_TABLE:
        known = ", ".join(sorted(set(GAS_TABLE) | set(cfg.gas_table)))
        raise ConfigError(f"unknown gas {gas!r}; known gases: {known}", "name", where("gas", "name"))
    i = cfg["interferometer"]
    if not i["slit_width_nm"] < i["period_nm"]:
        raise ConfigError("slit width must be smaller than the period", "slit_width_nm",
                          where("interferometer", "slit_width_nm"))
    b = cfg["beamline"]
    if not b["band_lo_factor"] < 1.0 < b["band_hi_factor"]:
        raise ConfigError("need band_lo_factor < 1 < band_hi_factor", "band_lo_factor",
                          where("beamline", "band_lo_factor"))
    e = cfg["eta_profile"]
    if not e["delta_r_min_m"] < e["delta_r_max_m"]:
        raise ConfigError("need delta_r_min_m < delta_r_max_m", "delta_r_max_m",
                          where("eta_profile", "delta_r_max_m"))
    try:
        cfg.beamline()
    except DomainError as exc:
        raise ConfigError(str(exc), "beamline", lines.get(("beamline", None))) from None


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialise {v!r}")  # pragma: no cover


def serialize_config(cfg: RunConfig) -> str:
    """TOML text that parses back to ``cfg``; unset optional keys are omitted."""
    out = []
    for section, fields in SCHEMA.items():
        out.append(f"[{section}]")
        for key in fields:
            val = cfg.get(section, key)
            if val is None:
                continue
            out.append(f"{key} = {_toml_value(val)}")
        out.append("")
    for name, gas in cfg.gas_table.items():
        out.append(f'[gas_table."{name}"]' if not re.fullmatch(r"[A-Za-z0-9_\-]+", name)
                   else f"[gas_table.{name}]")
        out.append(f"mass_amu = {_toml_value(float(gas.mass))}")
        out.append(f"c6_meV_nm6 = {_toml_value(float(gas.c6))}")
        out.append("")
    return "\n".join(out)


def load_config(path=None) -> RunConfig:
    if path is None:
        return parse_config("")
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file: {exc.strerror}", None, None) from None
    return parse_config(text)
