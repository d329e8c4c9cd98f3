"""Degree-aware Sobolev kernel ridge regression with regime and entropy tools."""

__version__ = "0.1.0"
