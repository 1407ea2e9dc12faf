"""Command-line entry point.

Each subcommand writes ``<name>.csv`` and ``<name>.json`` into the output
directory.  The JSON envelope echoes the resolved configuration so every
result can be regenerated; it carries a timestamp only with ``--timestamp``,
which keeps repeated runs byte-identical.

Exit codes: 0 success, 1 configuration error, 2 numerical error, 3 empty
result.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from .beamline import detected_velocity_distribution
from .collisions import QuadratureSpec, decoherence_pressure, eta
from .config import RunConfig, load_config
from .core_model import ThermalGasState, de_broglie_wavelength, mbar_to_pa, pa_to_mbar, talbot_length
from .errors import ConfigError, EmptyDistributionError, NoSignalError, TalbotDecohError
from .experiment import (
    extrapolate_vacuum_requirement,
    extrapolation_constant,
    fit_exponential,
    gas_survey,
    simulate_pressure_scan,
    vacuum_spectrum,
)
from .rng import RngStream
from .talbot_lau import talbot_lau_spectrum, visibility

__all__ = ["main", "run_subcommand", "build_parser", "SCHEMA_VERSION", "SUBCOMMANDS"]

SCHEMA_VERSION = "1.0"
SUBCOMMANDS = ("visibility", "pressure-scan", "gas-survey", "beamline", "eta-profile", "extrapolate")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_EMPTY = 3


def fmt(x) -> str:
    """Decimal with 17 significant digits."""
    return format(float(x), ".17g")


class Result:
    """Payload plus CSV table of one subcommand."""

    def __init__(self, payload: dict, header: list, rows: list):
        self.payload = payload
        self.header = header
        self.rows = rows

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
        return buf.getvalue()


def _visibility(cfg: RunConfig, seed: int) -> Result:
    geom = cfg.geometry()
    v = cfg.get("interferometer", "velocity_mps")
    lam = de_broglie_wavelength(cfg.molecule().mass_kg, v)
    spec = talbot_lau_spectrum(geom, lam, cfg.get("interferometer", "l_max"))
    rows = [[int(ell), float(c.real), float(c.imag)] for ell, c in zip(spec.orders, spec.coefficients)]
    payload = {
        "velocity_mps": v,
        "wavelength_m": lam,
        "talbot_length_m": talbot_length(geom.period, lam),
        "visibility": visibility(spec),
        "coefficients": [{"order": r[0], "re": r[1], "im": r[2]} for r in rows],
    }
    return Result(payload, ["order", "re", "im"], rows)


def _scan_payload(scan, fit, predicted):
    return {
        "gas": scan.gas.name,
        "points": [
            {"pressure_mbar": pa_to_mbar(p), "visibility": v, "visibility_err": e}
            for p, v, e in scan.points
        ],
        "fit": None if fit is None else {
            "v0": fit.v0_fit,
            "v0_err": fit.v0_err,
            "p0_mbar": pa_to_mbar(fit.p0_fit),
            "p0_err_mbar": pa_to_mbar(fit.p0_err),
            "residual_norm": fit.residual_norm,
            "n_used": fit.n_used,
        },
        "p0_predicted_mbar": pa_to_mbar(predicted),
    }


def _pressure_scan(cfg: RunConfig, seed: int) -> Result:
    gas = cfg.gas_species()
    cond = cfg.conditions()
    scan = simulate_pressure_scan(gas, cond, cfg.pressures_pa(), cfg.noise(), RngStream(seed))
    try:
        fit = fit_exponential(scan)
    except TalbotDecohError as exc:
        warnings.warn(f"no exponential fit: {exc}", stacklevel=2)
        fit = None
    predicted = decoherence_pressure(gas, cond.v_m, cond.temperature, cond.geometry.spacing)
    rows = [[pa_to_mbar(p), v, e] for p, v, e in scan.points]
    return Result(_scan_payload(scan, fit, predicted),
                  ["pressure_mbar", "visibility", "visibility_err"], rows)


def _gas_survey(cfg: RunConfig, seed: int) -> Result:
    cond = cfg.conditions()
    survey = gas_survey(cfg.all_gases(), cond, cfg.pressures_pa(), cfg.noise(), RngStream(seed))
    rows = [[r.gas, pa_to_mbar(r.p0_predicted), pa_to_mbar(r.p0_fitted), r.ratio] for r in survey]
    pred = [r.p0_predicted for r in survey]
    payload = {
        "rows": [
            {"gas": r[0], "p0_pred_mbar": r[1], "p0_fit_mbar": r[2], "ratio": r[3]} for r in rows
        ],
        "predicted_spread": max(pred) / min(pred),
    }
    return Result(payload, ["gas", "p0_pred_mbar", "p0_fit_mbar", "ratio"], rows)


def _beamline(cfg: RunConfig, seed: int) -> Result:
    bcfg = cfg.beamline()
    b = cfg["beamline"]
    gas = cfg.gas_species()
    state = ThermalGasState(gas, cfg.get("gas", "temperature_K"), mbar_to_pa(b["pressure_mbar"]))
    dist = detected_velocity_distribution(
        bcfg, state, b["n_samples"], RngStream(seed), cfg.kick(gas), bins=b["n_bins"],
        threads=cfg.get("run", "threads"),
    )
    rows = [[lo, hi, w] for lo, hi, w in zip(dist.edges[:-1], dist.edges[1:], dist.weights)]
    try:
        ratio = dist.fwhm_ratio
    except TalbotDecohError:
        ratio = None
    payload = {
        "pressure_mbar": b["pressure_mbar"],
        "n_samples": dist.n_samples,
        "transmission": dist.transmission,
        "mean_speed_mps": dist.mean,
        "speed_variance_m2ps2": dist.variance,
        "fwhm_ratio": ratio,
        "mean_collisions": dist.mean_collisions,
        "selected_speed_mps": bcfg.selected_speed,
    }
    return Result(payload, ["v_low_mps", "v_high_mps", "weight"], rows)


def _eta_profile(cfg: RunConfig, seed: int) -> Result:
    e = cfg["eta_profile"]
    gas = cfg.gas_species()
    model = cfg.scattering_model("eta")
    quad = QuadratureSpec(rel_tol=cfg.get("scattering", "rel_tol"), method=cfg.get("scattering", "method"))
    temp = cfg.get("gas", "temperature_K")
    grid = np.geomspace(e["delta_r_min_m"], e["delta_r_max_m"], e["n_points"])
    rows = [[float(dr), eta(float(dr), gas, temp, model, quad)] for dr in grid]
    payload = {"gas": gas.name, "model": model.label(),
               "profile": [{"delta_r_m": r[0], "eta": r[1]} for r in rows]}
    return Result(payload, ["delta_r_m", "eta"], rows)


def _extrapolate(cfg: RunConfig, seed: int) -> Result:
    x = cfg["extrapolate"]
    temp = cfg.get("gas", "temperature_K")
    p0 = extrapolate_vacuum_requirement(x["particle_mass_amu"], x["particle_velocity_mps"],
                                        x["length_m"], temp)
    payload = {
        "mass_amu": x["particle_mass_amu"],
        "v_mps": x["particle_velocity_mps"],
        "L_m": x["length_m"],
        "temperature_K": temp,
        "p0_pa": p0,
        "p0_mbar": pa_to_mbar(p0),
        "p0_L_over_v_mbar_s_per_m": extrapolation_constant(x["particle_mass_amu"],
                                                           x["particle_velocity_mps"], temp),
    }
    rows = [[x["particle_mass_amu"], x["particle_velocity_mps"], x["length_m"], pa_to_mbar(p0)]]
    return Result(payload, ["mass_amu", "v_mps", "L_m", "p0_mbar"], rows)


_DISPATCH = {
    "visibility": _visibility,
    "pressure-scan": _pressure_scan,
    "gas-survey": _gas_survey,
    "beamline": _beamline,
    "eta-profile": _eta_profile,
    "extrapolate": _extrapolate,
}


def _clean(obj):
    """Replace non-finite floats (not valid JSON) with None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def run_subcommand(name: str, cfg: RunConfig, timestamp: str | None = None) -> tuple:
    """Run one subcommand; returns ``(envelope dict, csv text)``."""
    if name not in _DISPATCH:
        raise ConfigError(f"unknown subcommand {name!r}; choose from {', '.join(SUBCOMMANDS)}")
    result = _DISPATCH[name](cfg, cfg.get("run", "seed"))
    envelope = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "subcommand": name,
        "config": cfg.to_dict(echo=True),
        "timestamp": timestamp,
        "payload": result.payload,
    }
    return _clean(envelope), result.csv_text()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="TOML configuration file (defaults if omitted)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads for the beamline Monte Carlo")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--timestamp", action="store_true", default=argparse.SUPPRESS,
                        help="record the wall-clock time in the JSON envelope")

    parser = argparse.ArgumentParser(
        prog="talbotdecoh",
        description="Collisional decoherence in Talbot-Lau interferometry.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out-dir", default=None)
    parser.add_argument("--timestamp", action="store_true", default=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    helps = {
        "visibility": "vacuum signal spectrum and visibility",
        "pressure-scan": "visibility against background pressure, with exponential fit",
        "gas-survey": "decoherence pressure for every known gas",
        "beamline": "Monte Carlo detected-velocity distribution",
        "eta-profile": "single-collision coherence factor against separation",
        "extrapolate": "vacuum requirement for a heavy particle in N2",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "extrapolate":
            p.add_argument("--mass-amu", type=float, default=None)
            p.add_argument("--v-mps", type=float, default=None)
            p.add_argument("--L-m", dest="L_m", type=float, default=None)
    return parser


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        overrides = [("run", "seed", args.seed), ("run", "threads", args.threads)]
        if args.command == "extrapolate":
            overrides += [
                ("extrapolate", "particle_mass_amu", args.mass_amu),
                ("extrapolate", "particle_velocity_mps", args.v_mps),
                ("extrapolate", "length_m", args.L_m),
            ]
        for section, key, value in overrides:
            if value is None:
                continue
            if (key in ("seed",) and value < 0) or (key == "threads" and value < 1) or \
                    (isinstance(value, float) and not value > 0):
                raise ConfigError(f"value {value!r} out of range", key)
            cfg = cfg.with_value(section, key, value)
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat() if args.timestamp else None
        envelope, csv_text = run_subcommand(args.command, cfg, stamp)
    except ConfigError as exc:
        print(f"talbotdecoh: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EmptyDistributionError, NoSignalError) as exc:
        print(f"talbotdecoh: empty result: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except TalbotDecohError as exc:
        print(f"talbotdecoh: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, args.command)
    _write(stem + ".csv", csv_text)
    _write(stem + ".json", json.dumps(envelope, indent=2, allow_nan=False) + "\n")
    print(f"wrote {stem}.csv and {stem}.json")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
