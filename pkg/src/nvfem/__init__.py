"""Nonvariational finite element method for ``A : D^2 u = f`` in two dimensions."""

__version__ = "0.1.0"

from .assembly import NvSystem, assemble_system
from .estimator import NonvariationalFEM, QuasilinearFEM, StandardFEM
from .fespace import build_space, error_norms, interpolate
from .linsolve import Solution, dense_schur_solve, fe_hessian, nvfem_solve
from .mesh import Mesh, mesh_metrics, read_mesh, uniform_square_mesh, write_mesh
from .problems import ProblemSpec, make_problem

__all__ = [
    "Mesh",
    "NonvariationalFEM",
    "NvSystem",
    "ProblemSpec",
    "QuasilinearFEM",
    "Solution",
    "StandardFEM",
    "assemble_system",
    "build_space",
    "dense_schur_solve",
    "error_norms",
    "fe_hessian",
    "interpolate",
    "make_problem",
    "mesh_metrics",
    "nvfem_solve",
    "read_mesh",
    "uniform_square_mesh",
    "write_mesh",
]
