"""Bilateral car-following simulation and multi-agent DDPG.

Set ``BILATERAL_CF_DISABLE_NUMBA=1`` before import to run the pure-numpy
kernels instead of the compiled ones.
"""
__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402
from .sim import ConfigError, SimulationError  # noqa: E402

__all__ = ["BACKEND", "ConfigError", "SimulationError", "__version__"]
