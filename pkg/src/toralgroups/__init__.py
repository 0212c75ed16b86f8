"""Orbit counting, spectral and equidistribution experiments for thin subgroups
of SL2(Z) acting on the hyperbolic plane, the free-group boundary and the torus."""

__version__ = "0.1.0"

from .errors import BudgetExceeded, DimensionMismatch, FreenessViolation, ManifestError
from .matrix_core import (
    GroupElement,
    GroupPresentation,
    ball_membership,
    compose,
    displacement,
    free_group,
    sanov,
)
from .group_enum import GroupMeasure, ShellMeasure, enumerate_ball, fit_critical_exponent
from .torus import TorusPoint, act, classify_psi, solve_shrinking_target, torus_dist

__all__ = [
    "BudgetExceeded", "DimensionMismatch", "FreenessViolation", "ManifestError",
    "GroupElement", "GroupPresentation", "ball_membership", "compose", "displacement",
    "free_group", "sanov", "GroupMeasure", "ShellMeasure", "enumerate_ball",
    "fit_critical_exponent", "TorusPoint", "act", "classify_psi", "solve_shrinking_target",
    "torus_dist",
]
