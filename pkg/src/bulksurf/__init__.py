"""Evolving bulk-surface finite elements for a curvature-driven
free-boundary flow, plus discrete fractional Sobolev norm tools."""

__version__ = "0.1.0"
