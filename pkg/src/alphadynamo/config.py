"""Numerical tolerances shared across the package."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    algebraic: float = 1e-10
    iterative: float = 1e-8
    reality: float = 1e-12
    near_singular_cond: float = 1e12
    series_stop: float = 1e-12


TOL = Tolerances()
