"""Symbolic-numeric tools for two-input control-affine systems.

Decides whether a system dx/dt = f + g1*u1 + g2*u2 admits a flat
triangular normal form, constructs the coordinate change and static
feedback when it does, and validates the construction numerically.
"""

__version__ = "0.1.0"
