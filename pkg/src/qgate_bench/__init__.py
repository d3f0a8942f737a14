"""Simulation and benchmarking of parametric CZ and iSWAP gates through a tunable coupler."""

__version__ = "0.1.0"

from .errors import QGateError  # noqa: E402

__all__ = ["__version__", "QGateError"]
