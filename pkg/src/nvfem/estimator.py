"""scikit-learn style wrappers around the solvers.

``fit`` takes a :class:`~nvfem.problems.ProblemSpec` (or a problem id) and
solves it on a uniform mesh; ``predict`` evaluates the discrete solution at
query points of shape (m, 2). ``score`` is the usual R^2 from
:class:`~sklearn.base.RegressorMixin` against exact values.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .assembly import assemble_system
from .fespace import build_space, error_norms, reference_basis
from .linsolve import nvfem_solve
from .mesh import mesh_metrics, uniform_square_mesh
from .problems import ProblemSpec, make_problem, standard_fem_solve
from .quasilinear import mean_curvature_problem, quasilinear_solve


def _as_problem(problem, params=None) -> ProblemSpec:
    if isinstance(problem, ProblemSpec):
        return problem
    if problem == "quasilinear":
        return mean_curvature_problem()
    return make_problem(problem, **(params or {}))


class _FEMBase(RegressorMixin, BaseEstimator):
    def _setup(self, problem):
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree!r}")
        self.problem_ = _as_problem(problem)
        self.mesh_ = uniform_square_mesh(self.n)
        self.space_ = build_space(self.mesh_, self.degree)
        self.h_, self.shape_regularity_ = mesh_metrics(self.mesh_)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValueError(f"expected points with 2 coordinates, got {X.shape[1]}")
        return self.space_.evaluate(self.coef_, X)

    def error_norms(self):
        """``(L2, H1 seminorm)`` errors against the fitted problem's exact solution."""
        check_is_fitted(self, "coef_")
        p = self.problem_
        if p.exact_u is None:
            raise ValueError(f"problem {p.name!r} has no exact solution")
        return error_norms(self.space_, self.coef_, p.exact_u, p.exact_grad_u)


class NonvariationalFEM(_FEMBase):
    """Nonvariational FE solver for ``A : D^2 u = f``.

    Parameters
    ----------
    n : int
        Subdivisions per side of the uniform mesh of (-1, 1)^2.
    degree : {1, 2}
    tol, restart, maxiter :
        Restarted GMRES controls for the block system.
    preconditioner : {None, "lumped", "diagonal"}
    """

    def __init__(self, n=16, degree=1, tol=1e-10, restart=50, maxiter=None, preconditioner=None):
        self.n = n
        self.degree = degree
        self.tol = tol
        self.restart = restart
        self.maxiter = maxiter
        self.preconditioner = preconditioner

    def fit(self, problem, y=None):
        self._setup(problem)
        p = self.problem_
        self.system_ = assemble_system(self.space_, p.A, p.f, p.g)
        sol = nvfem_solve(self.system_, tol=self.tol, restart=self.restart, maxiter=self.maxiter,
                          preconditioner=self.preconditioner)
        self.solution_ = sol
        self.coef_ = sol.coefficients
        self.hessian_ = sol.hessian
        self.n_iter_ = sol.stats.iterations
        return self

    def predict_hessian(self, X):
        """Finite element Hessian at the query points, shape (m, 2, 2)."""
        check_is_fitted(self, "coef_")
        X = check_array(X)
        cells, bary = self.space_.locate(X)
        out = np.full((len(X), 2, 2), np.nan)
        inside = cells >= 0
        phi, _ = reference_basis(self.degree, bary[inside])
        dofs = self.space_.cell_dofs[cells[inside]]
        for a in range(2):
            for b in range(2):
                out[inside, a, b] = np.einsum("ql,ql->q", phi, self.hessian_[a][b][dofs])
        return out


class StandardFEM(_FEMBase):
    """Galerkin solve of the divergence-form rewrite, for comparison."""

    def __init__(self, n=16, degree=1):
        self.n = n
        self.degree = degree

    def fit(self, problem, y=None):
        self._setup(problem)
        self.coef_ = standard_fem_solve(self.problem_, self.space_)
        return self


class QuasilinearFEM(_FEMBase):
    """Fixed-point solver for the prescribed mean curvature problem.

    ``mode`` is ``"nonvariational"`` or ``"variational"``. ``converge_factor``
    (if set) iterates past the stagnation point to the discrete fixed point.
    """

    def __init__(self, n=16, degree=1, mode="nonvariational", tol_factor=1.0, max_iterations=100,
                 tol=1e-10, restart=50, preconditioner=None, converge_factor=None):
        self.n = n
        self.degree = degree
        self.mode = mode
        self.tol_factor = tol_factor
        self.max_iterations = max_iterations
        self.tol = tol
        self.restart = restart
        self.preconditioner = preconditioner
        self.converge_factor = converge_factor

    def fit(self, problem="quasilinear", y=None):
        self._setup(problem)
        sign = self.problem_.params.get("sign", -1.0)
        res = quasilinear_solve(self.space_, f=self.problem_.f, mode=self.mode,
                                tol_factor=self.tol_factor, max_iterations=self.max_iterations,
                                tol=self.tol, restart=self.restart,
                                preconditioner=self.preconditioner, sign=sign,
                                converge_factor=self.converge_factor)
        self.coef_ = res.U
        self.stagnation_point_ = res.stagnation_point
        self.n_iter_ = res.iterations
        self.history_ = res.history
        return self
