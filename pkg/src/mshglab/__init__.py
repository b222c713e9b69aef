"""Numerical laboratory for monodromy-free Fuchsian operators and the modified sinh-Gordon equation."""

__version__ = "0.1.0"
