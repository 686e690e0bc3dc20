"""Numerical laboratory for Schottky groups with a cusp: warped cusp metrics,
transfer operators, stable laws and orbit or closed-geodesic counting."""

__version__ = "0.1.0"

__all__ = ["geometry", "schottky", "cuspmetric", "regvar", "stablelaw", "transfer", "asymptotics", "cli"]
