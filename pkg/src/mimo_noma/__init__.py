"""Uplink spectral-efficiency simulator for code-domain NOMA in Massive MIMO."""

__version__ = "0.1.0"
