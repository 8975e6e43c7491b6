"""Fixed-point iteration for the prescribed mean curvature equation.

    div(grad u / sqrt(1 + |grad u|^2)) = f / sqrt(1 + |grad u|^2),  u = 0 on the boundary.

Two linearisations are provided. ``variational`` freezes the area element in
the divergence form; ``nonvariational`` freezes the coefficient of the
equivalent form ``(I - grad u grad u^T / (1 + |grad u|^2)) : D^2 u = f`` and
solves each step with the block NVFEM solver.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import assemble_load, assemble_stiffness, assemble_system
from .fespace import FeSpace, l2_norm
from .linsolve import nvfem_solve
from .mesh import mesh_metrics
from .problems import ProblemSpec, _sinsin, _sinsin_grad, zero

logger = logging.getLogger(__name__)

MODES = ("variational", "nonvariational")


class StagnationError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class QuasilinearResult:
    U: np.ndarray
    stagnation_point: int
    history: list = field(default_factory=list)
    seconds: float = 0.0
    krylov_iterations: int = 0
    iterations: int = 0


def mean_curvature_coefficient(grad: np.ndarray, sign: float = -1.0) -> np.ndarray:
    """``I + sign * g g^T / (1 + |g|^2)`` for gradients of shape (..., 2).

    ``sign=-1`` is the mean curvature operator: ``sqrt(1 + |grad u|^2)
    div(grad u / sqrt(1 + |grad u|^2))`` equals this coefficient contracted with
    ``D^2 u``. Its eigenvalues are 1 and ``1 / (1 + |g|^2)``. ``sign=+1`` gives
    a different (also elliptic) operator with eigenvalues in [1, 2).
    """
    grad = np.asarray(grad, dtype=float)
    q = 1.0 + np.sum(grad**2, axis=-1)
    return np.eye(2) + sign * grad[..., :, None] * grad[..., None, :] / q[..., None, None]


def mean_curvature_rhs(x, sign: float = -1.0):
    """``f`` making ``u = sin(pi x1) sin(pi x2)`` an exact solution for the given sign."""
    pi2 = np.pi**2
    s1, s2 = np.sin(np.pi * x[:, 0]), np.sin(np.pi * x[:, 1])
    c1, c2 = np.cos(np.pi * x[:, 0]), np.cos(np.pi * x[:, 1])
    if sign < 0:
        num = -pi2 * (pi2 * c1**2 + pi2 * c2**2 + 2) * s1 * s2
    else:
        num = pi2 * (8 * pi2 * c1**2 * c2**2 - 3 * pi2 * c1**2 - 3 * pi2 * c2**2 - 2) * s1 * s2
    return num / (pi2 * (s1**2 * c2**2 + s2**2 * c1**2) + 1.0)


def mean_curvature_problem(sign: float = -1.0) -> ProblemSpec:
    def A(x):
        return mean_curvature_coefficient(_sinsin_grad(x), sign)

    def f(x):
        return mean_curvature_rhs(x, sign)

    return ProblemSpec("quasilinear", A, f, zero, _sinsin, _sinsin_grad, params={"sign": sign})


def _gradients(space: FeSpace, coeffs):
    _, _, _, dphi = space.cell_quadrature()
    return np.einsum("cqld,cl->cqd", dphi, coeffs[space.cell_dofs])


def quasilinear_solve(space: FeSpace, f=mean_curvature_rhs, mode="nonvariational", tol_factor=1.0,
                      max_iterations=100, tol=1e-10, restart=50, preconditioner=None, sign=-1.0,
                      converge_factor=None):
    """Iterate from ``U^0 = 0`` until ``||U^k - U^(k-1)||_L2 <= tol_factor * h^2``.

    The stagnation point is the first such k. With ``converge_factor`` the
    iteration continues past it until the update is below
    ``converge_factor * h^2``, so the returned ``U`` is the discrete fixed
    point up to a negligible iteration error. ``sign`` selects the coefficient
    used by the nonvariational mode (see :func:`mean_curvature_coefficient`);
    the variational mode always discretises the divergence form. Returns a
    :class:`QuasilinearResult`; raises :class:`StagnationError` after
    ``max_iterations`` steps.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    t0 = time.perf_counter()
    h, _ = mesh_metrics(space.mesh)
    threshold = tol_factor * h**2
    final = threshold if converge_factor is None else min(threshold, converge_factor * h**2)
    stagnation = None
    n0 = space.n_interior
    x, _, _, _ = space.cell_quadrature()
    f_at = np.asarray(f(x.reshape(-1, 2)), dtype=float).reshape(x.shape[:2])
    U = np.zeros(space.n_dofs)
    history = []
    krylov = 0

    if mode == "nonvariational":
        # M and the Hessian blocks do not depend on the iterate
        system = assemble_system(space, lambda p: np.broadcast_to(np.eye(2), (len(p), 2, 2)), f_at)
        v = None
    for k in range(1, max_iterations + 1):
        grad = _gradients(space, U)
        if mode == "variational":
            inv_area = 1.0 / np.sqrt(1.0 + np.sum(grad**2, axis=-1))
            coeff = inv_area[..., None, None] * np.eye(2)
            K = assemble_stiffness(space, coeff)
            rhs = -assemble_load(space, f_at * inv_area)
            U_new = np.zeros(space.n_dofs)
            U_new[:n0] = spla.spsolve(K[:n0, :n0].tocsc(), rhs)
        else:
            step = system.with_coefficient(mean_curvature_coefficient(grad, sign))
            sol = nvfem_solve(step, tol=tol, restart=restart, preconditioner=preconditioner, x0=v)
            krylov += sol.stats.iterations
            v = np.concatenate([h_ab for row in sol.hessian for h_ab in row] + [sol.u_interior])
            U_new = sol.coefficients
        diff = l2_norm(space, U_new - U)
        history.append(diff)
        logger.debug("%s iteration %d: ||U_k - U_(k-1)|| = %.3e", mode, k, diff)
        U = U_new
        if stagnation is None and diff <= threshold:
            stagnation = k
        if diff <= final:
            return QuasilinearResult(U, stagnation, history, time.perf_counter() - t0, krylov, k)
    raise StagnationError(
        f"{mode} iteration did not reach {final:.3e} within {max_iterations} steps "
        f"(last difference {history[-1]:.3e}, stagnation point {stagnation})", history)
