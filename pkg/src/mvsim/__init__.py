"""Finite-difference simulator for penalized magnetoviscoelastic flow in 2D."""

__version__ = "0.1.0"
