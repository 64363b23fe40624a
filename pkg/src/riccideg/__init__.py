"""Numerical construction and verification of Ricci-degenerate 3-manifolds.

Modules
-------
jets      truncated Taylor jets in three variables
ode       fixed-step RK4 with dense output and domain guards
tensors   curvature of diagonal metrics
families  explicit (g, f) instances
verify    residual checks and reports
cli       command-line surface
"""

from .families import (
    EquationSpec,
    MetricInstance,
    PFamily,
    QBFamily,
    SolitonCylinder,
    WarpedConstCurv,
    build,
    closed_form_reference,
    dumps_instance,
    loads_instance,
)
from .jets import Box, Jet, ScalarField
from .tensors import MetricField, cotton, curvature, generalized_eigen
from .verify import SampleGrid, run_suite

__all__ = [
    "Box",
    "EquationSpec",
    "Jet",
    "MetricField",
    "MetricInstance",
    "PFamily",
    "QBFamily",
    "SampleGrid",
    "ScalarField",
    "SolitonCylinder",
    "WarpedConstCurv",
    "build",
    "closed_form_reference",
    "cotton",
    "curvature",
    "dumps_instance",
    "generalized_eigen",
    "loads_instance",
    "run_suite",
]
