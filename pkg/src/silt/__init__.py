"""Differential testing of a small multi-level compiler IR with UB elimination."""

__version__ = "0.1.0"
