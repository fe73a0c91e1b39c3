"""Informational balance function, CIMA predictive-coding loop, antifragility and criticality tools."""

__version__ = "0.1.0"
