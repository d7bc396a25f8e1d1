"""Pseudo-spectral Navier-Stokes on the periodic torus, plus tools that measure
sup-norm smoothing constants of the heat flow and of short-time solutions."""

__version__ = "0.1.0"
