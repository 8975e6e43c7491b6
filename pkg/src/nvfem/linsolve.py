"""Block-operator solve for the nonvariational FE system.

The unknown vector is stacked as ``(h_11, h_12, h_21, h_22, u)`` where each
``h_ab`` holds N Hessian coefficients and ``u`` the N0 interior values.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import NvSystem

logger = logging.getLogger(__name__)

DENSE_LIMIT = 5000


class NonConvergenceError(RuntimeError):
    """Raised when an iterative solve hits its iteration cap.

    ``x`` carries the best iterate found and ``stats`` the diagnostics.
    """

    def __init__(self, message, x=None, stats=None):
        super().__init__(message)
        self.x = x
        self.stats = stats


class DegenerateSystemError(ValueError):
    pass


class DenseLimitError(ValueError):
    pass


@dataclass
class SolverStats:
    iterations: int = 0
    residual: float = np.nan
    converged: bool = False
    seconds: float = 0.0
    history: list = field(default_factory=list, repr=False)


class BlockOperator(spla.LinearOperator):
    """Matrix-free action of the (d^2 + 1) x (d^2 + 1) block matrix E."""

    def __init__(self, system: NvSystem):
        self.system = system
        n = system.size
        super().__init__(dtype=np.float64, shape=(n, n))

    def _blocks(self):
        d = self.system.d
        return [(a, b) for a in range(d) for b in range(d)]

    def split(self, v):
        s = self.system
        N = s.n_dofs
        h = [v[k * N:(k + 1) * N] for k in range(s.d**2)]
        return h, v[s.d**2 * N:]

    def _matvec(self, v):
        s = self.system
        v = np.asarray(v, dtype=float).ravel()
        if v.shape[0] != self.shape[1]:
            raise ValueError(f"expected vector of length {self.shape[1]}, got {v.shape[0]}")
        h, u = self.split(v)
        out = np.empty(self.shape[0])
        N = s.n_dofs
        last = np.zeros(s.n_interior)
        for k, (a, b) in enumerate(self._blocks()):
            out[k * N:(k + 1) * N] = s.M @ h[k] - s.C[a][b] @ u
            last += s.B[a][b] @ h[k]
        out[s.d**2 * N:] = last
        return out

    def _rmatvec(self, w):
        s = self.system
        w = np.asarray(w, dtype=float).ravel()
        r, last = self.split(w)
        out = np.empty(self.shape[1])
        N = s.n_dofs
        tail = np.zeros(s.n_interior)
        for k, (a, b) in enumerate(self._blocks()):
            out[k * N:(k + 1) * N] = s.M.T @ r[k] + s.B[a][b].T @ last
            tail -= s.C[a][b].T @ r[k]
        out[s.d**2 * N:] = tail
        return out

    def apply(self, v):
        return self._matvec(v)

    def boundary_lift(self, g):
        """``E_bdry @ (0, ..., 0, g)``: the block rows ``-Cb_ab g`` and a zero last row."""
        s = self.system
        N = s.n_dofs
        out = np.zeros(self.shape[0])
        for k, (a, b) in enumerate(self._blocks()):
            out[k * N:(k + 1) * N] = -(s.Cb[a][b] @ g)
        return out

    def to_dense(self):
        return self.to_sparse().toarray()

    def to_sparse(self):
        s = self.system
        d2 = s.d**2
        rows = []
        for k, (a, b) in enumerate(self._blocks()):
            row = [None] * (d2 + 1)
            row[k] = s.M
            row[d2] = -s.C[a][b]
            rows.append(row)
        rows.append([s.B[a][b] for a, b in self._blocks()] + [None])
        return sp.bmat(rows, format="csr")


def block_apply(op: BlockOperator, v):
    return op.apply(v)


def mass_diagonal_preconditioner(system: NvSystem, kind: str = "lumped") -> spla.LinearOperator:
    """Block-diagonal inverse of a diagonal mass approximation, identity on u.

    ``kind="lumped"`` uses row sums (P1 only, where they are positive);
    ``kind="diagonal"`` uses the diagonal of M and works for any degree.
    """
    if kind == "lumped":
        if system.space.degree != 1:
            raise ValueError("lumped-mass preconditioning requires P1 elements")
        diag = np.asarray(system.M.sum(axis=1)).ravel()
    elif kind == "diagonal":
        diag = system.M.diagonal()
    else:
        raise ValueError(f"unknown preconditioner {kind!r}")
    inv = np.concatenate([np.tile(1.0 / diag, system.d**2), np.ones(system.n_interior)])
    return spla.LinearOperator((system.size, system.size), matvec=lambda v: inv * v.ravel(),
                               dtype=np.float64)


def gmres(op, b, tol=1e-10, restart=50, maxiter=None, x0=None, preconditioner=None,
          raise_on_failure=True):
    """Restarted GMRES with right preconditioning.

    Stops when ``||b - op x|| <= tol ||b||``. ``maxiter`` counts inner
    iterations (matrix-vector products). Returns ``(x, SolverStats)``.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float).ravel()
    n = b.shape[0]
    if op.shape != (n, n):
        raise ValueError(f"operator shape {op.shape} incompatible with rhs of length {n}")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side must be finite")
    matvec = op.matvec if hasattr(op, "matvec") else (lambda v: op @ v)
    precond = (lambda v: v) if preconditioner is None else preconditioner.matvec
    maxiter = 20 * n if maxiter is None else int(maxiter)
    restart = max(1, min(int(restart), n))

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float).ravel()
    stats = SolverStats()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        stats.residual, stats.converged = 0.0, True
        stats.seconds = time.perf_counter() - t0
        return np.zeros(n), stats
    target = tol * bnorm

    r = b - matvec(x)
    beta = np.linalg.norm(r)
    best_x, best_res = x.copy(), beta
    while True:
        if beta <= target:
            stats.converged = True
            break
        if stats.iterations >= maxiter:
            break
        V = np.zeros((restart + 1, n))
        H = np.zeros((restart + 1, restart))
        cs = np.zeros(restart)
        sn = np.zeros(restart)
        g = np.zeros(restart + 1)
        V[0] = r / beta
        g[0] = beta
        Z = []
        j = 0
        for j in range(restart):
            z = precond(V[j])
            Z.append(z)
            w = matvec(z)
            # classical Gram-Schmidt, applied twice
            h = V[: j + 1] @ w
            w = w - h @ V[: j + 1]
            h2 = V[: j + 1] @ w
            w = w - h2 @ V[: j + 1]
            H[: j + 1, j] = h + h2
            H[j + 1, j] = np.linalg.norm(w)
            breakdown = H[j + 1, j] <= 1e-14 * np.linalg.norm(H[: j + 2, j])
            if not breakdown:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                tmp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = tmp
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if denom == 0.0 else (H[j, j] / denom, H[j + 1, j] / denom)
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            stats.iterations += 1
            est = abs(g[j + 1])
            stats.history.append(est / bnorm)
            if est <= target or breakdown or stats.iterations >= maxiter:
                break
        k = j + 1
        y = sla.solve_triangular(H[:k, :k], g[:k]) if H[k - 1, k - 1] != 0.0 else \
            np.linalg.lstsq(H[:k, :k], g[:k], rcond=None)[0]
        x = x + np.asarray(Z).T @ y
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        if beta < best_res:
            best_x, best_res = x.copy(), beta
        if breakdown and beta > target:
            # lucky breakdown should give the exact solution; anything else is stagnation
            stats.residual = best_res / bnorm
            stats.seconds = time.perf_counter() - t0
            if raise_on_failure:
                raise NonConvergenceError(
                    f"GMRES breakdown at iteration {stats.iterations} with residual "
                    f"{stats.residual:.3e}", best_x, stats)
            return best_x, stats
    if stats.converged:
        best_x, best_res = x, beta
    stats.residual = best_res / bnorm
    stats.seconds = time.perf_counter() - t0
    if not stats.converged and raise_on_failure:
        raise NonConvergenceError(
            f"GMRES did not reach tol={tol:g} in {stats.iterations} iterations "
            f"(relative residual {stats.residual:.3e})", best_x, stats)
    return best_x, stats


krylov_solve = gmres


@dataclass
class Solution:
    space: object
    u_interior: np.ndarray
    u_boundary: np.ndarray
    hessian: list
    stats: SolverStats

    @property
    def coefficients(self) -> np.ndarray:
        """Full length-N coefficient vector (interior then boundary)."""
        return np.concatenate([self.u_interior, self.u_boundary])


def block_rhs(system: NvSystem, op: BlockOperator | None = None) -> np.ndarray:
    """Right-hand side ``b - E_bdry b_bdry`` of the lifted block system."""
    op = BlockOperator(system) if op is None else op
    b = np.zeros(system.size)
    b[system.d**2 * system.n_dofs:] = system.fvec
    return b - op.boundary_lift(system.gvec)


def nvfem_solve(system: NvSystem, tol=1e-10, restart=50, maxiter=None, preconditioner=None,
                x0=None) -> Solution:
    """Solve the block system by restarted GMRES and unpack ``(h_ab, u)``."""
    if system.n_interior == 0:
        raise DegenerateSystemError("space has no interior degrees of freedom")
    op = BlockOperator(system)
    b = block_rhs(system, op)
    maxiter = 20 * system.size if maxiter is None else maxiter
    if isinstance(preconditioner, str):
        preconditioner = mass_diagonal_preconditioner(system, preconditioner)
    v, stats = gmres(op, b, tol=tol, restart=restart, maxiter=maxiter,
                     preconditioner=preconditioner, x0=x0)
    logger.debug("block GMRES: %d iterations, residual %.2e", stats.iterations, stats.residual)
    h, u = op.split(v)
    d = system.d
    hessian = [[h[a * d + b].copy() for b in range(d)] for a in range(d)]
    return Solution(system.space, u.copy(), np.array(system.gvec, dtype=float), hessian, stats)


def _check_dense(n):
    if n > DENSE_LIMIT:
        raise DenseLimitError(f"dense work on size {n} exceeds the limit of {DENSE_LIMIT}")


def dense_schur_solve(system: NvSystem) -> np.ndarray:
    """Direct solve of ``sum_ab B^ab M^-1 C_ab u = f - sum_ab B^ab M^-1 Cb_ab g``."""
    _check_dense(system.n_dofs)
    if system.n_interior == 0:
        raise DegenerateSystemError("space has no interior degrees of freedom")
    lu = sla.lu_factor(system.M.toarray())
    D = np.zeros((system.n_interior, system.n_interior))
    rhs = np.array(system.fvec, dtype=float)
    for a in range(system.d):
        for b in range(system.d):
            Bab = system.B[a][b].toarray()
            D += Bab @ sla.lu_solve(lu, system.C[a][b].toarray())
            rhs -= Bab @ sla.lu_solve(lu, system.Cb[a][b] @ system.gvec)
    return np.linalg.solve(D, rhs)


class _MassSolver:
    def __init__(self, M, tol=1e-12):
        self.M = M
        self.tol = tol
        self.factor = spla.splu(M.tocsc()) if M.shape[0] <= DENSE_LIMIT else None

    def __call__(self, rhs):
        if self.factor is not None:
            return self.factor.solve(rhs)
        x, info = spla.cg(self.M, rhs, rtol=self.tol, maxiter=10 * self.M.shape[0])
        if info != 0:
            raise NonConvergenceError(f"mass solve did not converge (info={info})", x)
        return x


def fe_hessian(system: NvSystem, u_interior, u_boundary=None):
    """``h_ab`` solving ``M h_ab = C_ab u_interior + Cb_ab u_boundary``."""
    u_interior = np.asarray(u_interior, dtype=float)
    u_boundary = np.zeros(system.space.n_boundary) if u_boundary is None else np.asarray(u_boundary, dtype=float)
    if u_interior.shape != (system.n_interior,) or u_boundary.shape != (system.space.n_boundary,):
        raise ValueError("coefficient vectors do not match the space")
    solve = _MassSolver(system.M)
    return [[solve(system.C[a][b] @ u_interior + system.Cb[a][b] @ u_boundary)
             for b in range(system.d)] for a in range(system.d)]


def condition_number(E) -> float:
    """Ratio of extreme singular values of a dense (or sparse) matrix."""
    E = E.toarray() if sp.issparse(E) else np.asarray(E, dtype=float)
    _check_dense(E.shape[0])
    s = np.linalg.svd(E, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def condition_estimate(system: NvSystem) -> float:
    _check_dense(system.size)
    return condition_number(BlockOperator(system).to_dense())
