"""EPIRK exponential integrators with adaptive Krylov evaluation."""

__version__ = "0.1.0"
