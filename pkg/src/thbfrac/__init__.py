"""Adaptive isogeometric phase-field brittle fracture on THB-splines.

Subpackages follow the solver pipeline: spline kernels (`splines`),
hierarchical spaces (`hierarchy`), phase-field model catalogue (`model`),
Galerkin assembly (`assembly`), staggered/PSOR solvers (`solvers`),
damage-driven refinement (`adaptivity`), crack initialization
(`initialization`) and the benchmark front end (`config`, `driver`, `cli`).
"""

from .splines import KnotVector
from .hierarchy import HierarchicalMesh, ThbSpace, build_space

__all__ = [
    "KnotVector",
    "HierarchicalMesh",
    "ThbSpace",
    "build_space",
]
