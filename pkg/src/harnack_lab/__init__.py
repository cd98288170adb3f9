"""Numerical laboratory for differential Harnack inequalities of logarithmic heat equations."""

__version__ = "0.1.0"
