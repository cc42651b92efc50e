"""Importance sampling estimators for small-noise diffusions."""

from ._isdiff import (
    ArgumentError,
    CatalogError,
    catalog,
    check,
    estimate,
    expansion,
    pde,
    problem_info,
    reference_theta,
    second_moment,
    solve_G,
    solve_v0,
    sweep,
)

__all__ = [
    "ArgumentError",
    "CatalogError",
    "catalog",
    "check",
    "estimate",
    "expansion",
    "pde",
    "problem_info",
    "reference_theta",
    "second_moment",
    "solve_G",
    "solve_v0",
    "sweep",
]

__version__ = "0.1.0"
