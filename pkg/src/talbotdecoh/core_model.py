"""Physical constants, unit conversion, species and thermal-gas kinematics.

Everything inside the package is SI.  Convenience units (amu, nm, pm,
mbar, meV nm^6) are converted exactly once, at construction of the species
objects or in the CLI layer, through the helpers defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .errors import DomainError

__all__ = [
    "CONSTANTS",
    "PhysicalConstants",
    "GasSpecies",
    "MoleculeSpecies",
    "ThermalGasState",
    "GAS_TABLE",
    "C70",
    "ROOM_TEMPERATURE",
    "get_gas",
    "de_broglie_wavelength",
    "talbot_length",
    "most_probable_speed",
    "maxwell_boltzmann_pdf",
    "amu_to_kg",
    "kg_to_amu",
    "mbar_to_pa",
    "pa_to_mbar",
    "c6_to_si",
    "c6_from_si",
]


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA 2018 values (exact where SI defines them)."""

    planck_h: float = 6.62607015e-34
    hbar: float = 6.62607015e-34 / (2.0 * math.pi)
    boltzmann_kB: float = 1.380649e-23
    gravity_g: float = 9.80665
    amu: float = 1.66053906660e-27
    mbar_to_pascal: float = 100.0
    # 1 meV nm^6 = 1.602176634e-22 J * 1e-54 m^6
    meV_nm6_to_SI: float = 1.602176634e-22 * 1e-54


CONSTANTS = PhysicalConstants()

ROOM_TEMPERATURE = 300.0


def amu_to_kg(mass_amu):
    return mass_amu * CONSTANTS.amu


def kg_to_amu(mass_kg):
    return mass_kg / CONSTANTS.amu


def mbar_to_pa(p_mbar):
    return p_mbar * CONSTANTS.mbar_to_pascal


def pa_to_mbar(p_pa):
    return p_pa / CONSTANTS.mbar_to_pascal


def c6_to_si(c6_mev_nm6):
    return c6_mev_nm6 * CONSTANTS.meV_nm6_to_SI


def c6_from_si(c6_si):
    return c6_si / CONSTANTS.meV_nm6_to_SI


@dataclass(frozen=True)
class GasSpecies:
    """A background gas.

    Parameters
    ----------
    name : str
        Label, e.g. ``"CH4"``.
    mass : float
        Particle mass in amu.
    c6 : float
        Van der Waals coefficient of the gas/C70 pair in meV nm^6.
    """

    name: str
    mass: float
    c6: float

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError(f"gas mass must be positive, got {self.mass!r}")
        if not self.c6 > 0:
            raise DomainError(f"C6 must be positive, got {self.c6!r}")

    @property
    def mass_kg(self) -> float:
        return amu_to_kg(self.mass)

    @property
    def c6_si(self) -> float:
        return c6_to_si(self.c6)


@dataclass(frozen=True)
class MoleculeSpecies:
    """The interfering particle (mass in amu)."""

    name: str = "C70"
    mass: float = 70 * 12.011

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError(f"molecule mass must be positive, got {self.mass!r}")

    @property
    def mass_kg(self) -> float:
        return amu_to_kg(self.mass)


C70 = MoleculeSpecies()

# C6 values for the X/C70 pair, meV nm^6; masses are standard atomic weights.
GAS_TABLE = MappingProxyType(
    {
        "H2": GasSpecies("H2", 2.016, 0.80),
        "D2": GasSpecies("D2", 4.028, 0.77),
        "He": GasSpecies("He", 4.003, 0.31),
        "CH4": GasSpecies("CH4", 16.043, 3.3),
        "N2": GasSpecies("N2", 28.014, 2.1),
        "Ne": GasSpecies("Ne", 20.180, 0.71),
        "Ar": GasSpecies("Ar", 39.948, 2.3),
        "Kr": GasSpecies("Kr", 83.798, 3.4),
        "Xe": GasSpecies("Xe", 131.293, 5.1),
    }
)


def get_gas(name, extra=None) -> GasSpecies:
    """Look up a gas by name; ``extra`` (a mapping) takes precedence."""
    if extra and name in extra:
        return extra[name]
    try:
        return GAS_TABLE[name]
    except KeyError:
        known = ", ".join(sorted(set(GAS_TABLE) | set(extra or ())))
        raise DomainError(f"unknown gas {name!r}; known gases: {known}") from None


@dataclass(frozen=True)
class ThermalGasState:
    """A resting thermal background gas; temperature in K, pressure in Pa."""

    species: GasSpecies
    temperature: float = ROOM_TEMPERATURE
    pressure: float = 0.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise DomainError(f"temperature must be positive, got {self.temperature!r}")
        if not self.pressure >= 0:
            raise DomainError(f"pressure must be non-negative, got {self.pressure!r}")

    @property
    def number_density(self) -> float:
        return self.pressure / (CONSTANTS.boltzmann_kB * self.temperature)

    @property
    def most_probable_speed(self) -> float:
        return most_probable_speed(self.species, self.temperature)

    def with_pressure(self, pressure) -> "ThermalGasState":
        return ThermalGasState(self.species, self.temperature, pressure)


def de_broglie_wavelength(mass, velocity) -> float:
    """Return h / (m v) in metres; ``mass`` in kg, ``velocity`` in m/s."""
    if not (mass > 0 and velocity > 0):
        raise DomainError(
            f"mass and velocity must be positive, got mass={mass!r}, velocity={velocity!r}"
        )
    return CONSTANTS.planck_h / (mass * velocity)


def talbot_length(period, wavelength) -> float:
    """Return d**2 / lambda."""
    if not (period > 0 and wavelength > 0):
        raise DomainError(
            f"period and wavelength must be positive, got {period!r}, {wavelength!r}"
        )
    return period * period / wavelength


def most_probable_speed(gas: GasSpecies, temperature) -> float:
    """sqrt(2 k_B T / m_g), the mode of the Maxwell-Boltzmann speed density."""
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature!r}")
    return math.sqrt(2.0 * CONSTANTS.boltzmann_kB * temperature / gas.mass_kg)


def maxwell_boltzmann_pdf(gas: GasSpecies, temperature, v):
    """Three-dimensional Maxwell-Boltzmann speed density in s/m.

    ``g(v) = 4/sqrt(pi) * v**2 / vp**3 * exp(-(v/vp)**2)`` with ``vp`` the
    most probable speed.  Accepts scalars or arrays.
    """
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr < 0):
        raise DomainError("speed must be non-negative")
    vp = most_probable_speed(gas, temperature)
    x = v_arr / vp
    out = 4.0 / math.sqrt(math.pi) * x * x * np.exp(-x * x) / vp
    return float(out) if out.ndim == 0 else out
