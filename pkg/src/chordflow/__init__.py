"""Chord shortening flow on submanifolds of Euclidean space.

Endpoints of a chord move by minus the tangential part of the chord's outward
conormal.  Flows either shrink the chord to a point in finite time or converge
to a chord meeting the submanifold orthogonally at both ends.
"""
from .chordcore import Chord, boundary_angle, conormal_data, make_chord, ogc_residual
from .flowengine import (BudgetExhausted, ConvergedToOGC, FlowParams, ShrunkToPoint,
                         StepFailure, run, run_many)
from .manifold import ManifoldModel, builtin

__version__ = "0.1.0"

__all__ = [
    "BudgetExhausted", "Chord", "ConvergedToOGC", "FlowParams", "ManifoldModel",
    "ShrunkToPoint", "StepFailure", "boundary_angle", "builtin", "conormal_data",
    "make_chord", "ogc_residual", "run", "run_many",
]
