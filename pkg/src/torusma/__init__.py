"""Numerical laboratory for degenerate complex Monge-Ampere equations on flat tori."""

__version__ = "0.1.0"
