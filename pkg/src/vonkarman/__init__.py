"""Von Karman plate equations on C1 rational triangular Bezier splines."""
from .analysis import (ErrorReport, ExactField, ExactSolution, benchmark_solution, convergence_study,
                       error_norms, manufactured_forcing, reentrant_compare, solve_on)
from .assembly import GlobalSystem, ProblemSpec, apply_bc, assemble
from .bezier import BezierElement, basis_derivatives, bernstein_eval, geometry_map, rational_eval
from .domains import get_domain
from .mesh import CurvedEdge, MeshError, SplitKind, Triangulation, barycentric, load_mesh, refine_uniform, split
from .quadrature import QuadratureRule, quadrature_rule
from .solver import NewtonState, SolveOptions, jacobian, newton_solve, residual, solve_mixed
from .spline import SplineField, SplineSpace, build_space, expand, smooth_refine_smooth, verify_smoothness

__version__ = "0.1.0"

__all__ = [
    "BezierElement", "CurvedEdge", "ErrorReport", "ExactField", "ExactSolution", "GlobalSystem",
    "MeshError", "NewtonState", "ProblemSpec", "QuadratureRule", "SolveOptions", "SplineField",
    "SplineSpace", "SplitKind", "Triangulation", "apply_bc", "assemble", "barycentric",
    "basis_derivatives", "benchmark_solution", "bernstein_eval", "build_space", "convergence_study",
    "error_norms", "expand", "geometry_map", "get_domain", "jacobian", "load_mesh",
    "manufactured_forcing", "newton_solve", "quadrature_rule", "rational_eval", "reentrant_compare",
    "refine_uniform", "residual", "smooth_refine_smooth", "solve_mixed", "solve_on", "split",
    "verify_smoothness",
]
