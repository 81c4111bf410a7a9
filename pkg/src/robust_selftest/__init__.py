"""Optimized robustness bounds for self-testing via moment-matrix SDP relaxations."""

__version__ = "0.1.0"
