"""Collisional decoherence in Talbot-Lau matter-wave interferometry.

Modules
-------
core_model
    Constants, unit conversion, gas and molecule species.
talbot_lau
    Signal spectrum and visibility of the three-grating interferometer.
collisions
    Single-collision coherence factor, effective cross section, damping
    of the signal spectrum and decoherence pressure.
beamline
    Monte Carlo of the molecular beam through gravity, apertures and
    background-gas collisions.
experiment
    Simulated pressure scans, exponential fits, gas survey and the
    heavy-particle extrapolation.
config, cli
    Configuration parsing and the ``talbotdecoh`` command.
"""

__version__ = "0.1.0"

from .kernels import active_backend, available_backends, use_backend  # noqa: E402

__all__ = ["__version__", "active_backend", "available_backends", "use_backend"]
