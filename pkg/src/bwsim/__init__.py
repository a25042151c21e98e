"""Bit-weight-dimension MAC/TPE simulator and analytics suite."""

__version__ = "0.1.0"
