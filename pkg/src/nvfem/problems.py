"""Benchmark problems ``A : D^2 u = f`` on the square (-1, 1)^2.

All callables take points of shape (m, 2). Scalar fields return (m,),
gradients (m, 2) and coefficient matrices (m, 2, 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

PROBLEM_IDS = ("test41", "test42", "test43", "poisson")


class UnknownProblemError(KeyError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    A: Callable
    f: Callable
    g: Callable
    exact_u: Callable | None = None
    exact_grad_u: Callable | None = None
    div_A: Callable | None = None
    params: dict = field(default_factory=dict)


def zero(x):
    return np.zeros(len(x))


def _tensor(m, a11, a12, a22):
    out = np.empty((m, 2, 2))
    out[:, 0, 0] = a11
    out[:, 0, 1] = out[:, 1, 0] = a12
    out[:, 1, 1] = a22
    return out


def _cusp(x):
    """(x1^2 x2^2)^(1/3), the nondifferentiable coefficient on the axes."""
    return np.cbrt((x[:, 0] * x[:, 1]) ** 2)


def _cusp_grad(x):
    # d/dx1 |x1|^(2/3) |x2|^(2/3) = (2/3) sign(x1) |x1|^(-1/3) |x2|^(2/3); infinite on the axes
    ax, ay = np.abs(x[:, 0]), np.abs(x[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        gx = 2.0 / 3.0 * np.sign(x[:, 0]) * np.cbrt(ay**2 / ax)
        gy = 2.0 / 3.0 * np.sign(x[:, 1]) * np.cbrt(ax**2 / ay)
    return np.column_stack([gx, gy])


def _sinsin(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def _sinsin_grad(x):
    s1, s2 = np.sin(np.pi * x[:, 0]), np.sin(np.pi * x[:, 1])
    c1, c2 = np.cos(np.pi * x[:, 0]), np.cos(np.pi * x[:, 1])
    return np.pi * np.column_stack([c1 * s2, s1 * c2])


def _test41():
    def a(x):
        return _cusp(x) + 1.0

    def A(x):
        return _tensor(len(x), 1.0, 0.0, a(x))

    def u(x):
        return np.exp(-10.0 * np.sum(x**2, axis=1))

    def grad_u(x):
        return -20.0 * x * u(x)[:, None]

    def f(x):
        ux = u(x)
        return (400.0 * x[:, 0] ** 2 - 20.0) * ux + a(x) * (400.0 * x[:, 1] ** 2 - 20.0) * ux

    def div_A(x):
        return np.column_stack([np.zeros(len(x)), _cusp_grad(x)[:, 1]])

    return ProblemSpec("test41", A, f, zero, u, grad_u, div_A)


def arctan_coefficient(K):
    """``a(x) = arctan(K(|x|^2 - 1)) + 2`` and its gradient."""

    def a(x):
        return np.arctan(K * (np.sum(x**2, axis=1) - 1.0)) + 2.0

    def da(x):
        s = np.sum(x**2, axis=1) - 1.0
        return 2.0 * K * x / (1.0 + (K * s) ** 2)[:, None]

    return a, da


def _test42(K=5000.0):
    if not K > 0:
        raise ValueError(f"test42 requires K > 0, got {K!r}")
    a, da = arctan_coefficient(K)

    def A(x):
        return _tensor(len(x), 1.0, 0.0, a(x))

    def f(x):
        return -np.pi**2 * _sinsin(x) * (1.0 + a(x))

    def div_A(x):
        return np.column_stack([np.zeros(len(x)), da(x)[:, 1]])

    return ProblemSpec("test42", A, f, zero, _sinsin, _sinsin_grad, div_A, {"K": float(K)})


def _test43():
    def A(x):
        return _tensor(len(x), 1.0, _cusp(x), 2.0)

    def u(x):
        x1, x2 = x[:, 0], x[:, 1]
        r2 = x1**2 + x2**2
        out = np.zeros(len(x))
        nz = r2 > 0
        out[nz] = x1[nz] * x2[nz] * (x1[nz] ** 2 - x2[nz] ** 2) / r2[nz]
        return out

    def grad_u(x):
        x1, x2 = x[:, 0], x[:, 1]
        r2 = x1**2 + x2**2
        out = np.zeros((len(x), 2))
        nz = r2 > 0
        a, b, q = x1[nz], x2[nz], r2[nz] ** 2
        out[nz, 0] = b * (a**4 + 4 * a**2 * b**2 - b**4) / q
        out[nz, 1] = a * (a**4 - 4 * a**2 * b**2 - b**4) / q
        return out

    def hess_u(x):
        x1, x2 = x[:, 0], x[:, 1]
        r2 = x1**2 + x2**2
        out = np.zeros((len(x), 3))
        nz = r2 > 0
        a, b, c = x1[nz], x2[nz], r2[nz] ** 3
        out[nz, 0] = -4 * a * b**3 * (a**2 - 3 * b**2) / c
        out[nz, 1] = (a**2 - b**2) * (a**4 + 10 * a**2 * b**2 + b**4) / c
        out[nz, 2] = -4 * a**3 * b * (3 * a**2 - b**2) / c
        return out

    def f(x):
        h = hess_u(x)
        return h[:, 0] + 2.0 * _cusp(x) * h[:, 1] + 2.0 * h[:, 2]

    def div_A(x):
        g = _cusp_grad(x)
        return np.column_stack([g[:, 1], g[:, 0]])

    return ProblemSpec("test43", A, f, u, u, grad_u, div_A)


def _poisson():
    def A(x):
        return _tensor(len(x), 1.0, 0.0, 1.0)

    def f(x):
        return -2.0 * np.pi**2 * _sinsin(x)

    return ProblemSpec("poisson", A, f, zero, _sinsin, _sinsin_grad, lambda x: np.zeros((len(x), 2)))


def make_problem(problem_id: str, **params) -> ProblemSpec:
    """Build one of the benchmark problems: test41, test42 (K), test43, poisson."""
    if problem_id == "test41":
        return _test41()
    if problem_id == "test42":
        return _test42(**params)
    if problem_id == "test43":
        return _test43()
    if problem_id == "poisson":
        return _poisson()
    raise UnknownProblemError(f"unknown problem {problem_id!r}; choose from {PROBLEM_IDS}")


def standard_fem_solve(problem: ProblemSpec, space, solver="direct", tol=1e-10):
    """Conforming Galerkin solve of the divergence-form rewrite.

    Uses ``A : D^2 u = div(A grad u) - div(A) . grad u`` and solves
    ``<A grad U, grad v> + <div(A) . grad U, v> = -<f, v>`` for interior v,
    with ``U = g`` at the boundary nodes. No stabilisation is applied.
    Returns the full coefficient vector.
    """
    from .assembly import assemble_load, assemble_stiffness
    from .fespace import interpolate
    from .linsolve import gmres

    if problem.div_A is None:
        raise ValueError(f"problem {problem.name!r} has no closed-form div(A)")
    n0 = space.n_interior
    K = assemble_stiffness(space, problem.A, advection=problem.div_A)
    g = interpolate(space, problem.g)[n0:]
    rhs = -assemble_load(space, problem.f) - K[:n0, n0:] @ g
    Kii = K[:n0, :n0].tocsc()
    if solver == "direct":
        u = spla.spsolve(Kii, rhs)
    else:
        u, _ = gmres(Kii, rhs, tol=tol)
    if not np.all(np.isfinite(u)):
        raise np.linalg.LinAlgError("standard FEM solve produced non-finite values")
    return np.concatenate([u, g])
