"""Synthetic out-of-distribution reasoning benchmark for time-series forecasters."""

__version__ = "0.1.0"
