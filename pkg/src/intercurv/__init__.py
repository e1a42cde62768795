"""Numerical workbench for intermediate-curvature counterexample metrics."""

__version__ = "0.1.0"
