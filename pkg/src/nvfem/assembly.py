"""Assembly of the mass, coefficient-weighted mass, and FE Hessian matrices."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fespace import FeSpace, interpolate

DIM = 2


class UnsupportedOptionError(ValueError):
    pass


def _scatter(space: FeSpace, local: np.ndarray, rows=None, cols=None) -> sp.csr_matrix:
    """Sum per-cell (nc, nloc, nloc) blocks into an N x N CSR matrix, then slice."""
    dofs = space.cell_dofs
    nloc = dofs.shape[1]
    I = np.repeat(dofs, nloc, axis=1).ravel()
    J = np.tile(dofs, (1, nloc)).ravel()
    n = space.n_dofs
    A = sp.coo_matrix((local.ravel(), (I, J)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    if rows is not None:
        A = A[rows]
    if cols is not None:
        A = A[:, cols]
    return A


def _coefficient_at_quadrature(space: FeSpace, A, x: np.ndarray) -> np.ndarray:
    """Evaluate a coefficient field at cell quadrature points -> (nc, nq, d, d).

    ``A`` is either a callable mapping (m, 2) points to (m, 2, 2) matrices or an
    array already tabulated at the cell quadrature points.
    """
    nc, nq = x.shape[:2]
    if callable(A):
        vals = np.asarray(A(x.reshape(-1, 2)), dtype=float)
    else:
        vals = np.asarray(A, dtype=float)
    return vals.reshape(nc, nq, DIM, DIM)


def assemble_mass(space: FeSpace, lumped: bool = False) -> sp.csr_matrix:
    """Consistent mass matrix, or its row-sum lumped diagonal (P1 only)."""
    if lumped and space.degree != 1:
        raise UnsupportedOptionError("mass lumping is only available for P1 elements")
    _, w, phi, _ = space.cell_quadrature()
    local = np.einsum("cq,qi,qj->cij", w, phi, phi)
    M = _scatter(space, local)
    if lumped:
        return sp.diags(np.asarray(M.sum(axis=1)).ravel(), format="csr")
    return M


def assemble_B(space: FeSpace, A, alpha: int, beta: int) -> sp.csr_matrix:
    """Weighted mass ``B[i, j] = int Phi_i A[alpha, beta] Phi_j`` for interior i, all j.

    Indices are 0-based. Shape is (n_interior, n_dofs).
    """
    return assemble_B_all(space, A)[alpha][beta]


def assemble_B_all(space: FeSpace, A) -> list[list[sp.csr_matrix]]:
    x, w, phi, _ = space.cell_quadrature()
    a = _coefficient_at_quadrature(space, A, x)
    rows = slice(0, space.n_interior)
    out = []
    for alpha in range(DIM):
        row = []
        for beta in range(DIM):
            local = np.einsum("cq,qi,qj->cij", w * a[:, :, alpha, beta], phi, phi)
            row.append(_scatter(space, local, rows=rows))
        out.append(row)
    return out


def hessian_matrix(space: FeSpace, alpha: int, beta: int) -> sp.csr_matrix:
    """Full N x N matrix ``G[i, j] = -int d_b Phi_i d_a Phi_j + oint Phi_i n_b d_a Phi_j``."""
    _, w, _, dphi = space.cell_quadrature()
    local = -np.einsum("cq,cqi,cqj->cij", w, dphi[..., beta], dphi[..., alpha])
    cells, _, wb, phib, dphib, normals = space.boundary_quadrature()
    edge_local = np.einsum("bq,bqi,bqj->bij", wb * normals[:, beta, None], phib, dphib[..., alpha])
    # boundary edges add to their owning cell's block; np.add.at keeps the order fixed
    np.add.at(local, cells, edge_local)
    return _scatter(space, local)


def assemble_C(space: FeSpace, alpha: int, beta: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Return ``(C, Cb)``: the FE Hessian matrix split into interior / boundary trial columns."""
    G = hessian_matrix(space, alpha, beta).tocsc()
    n0 = space.n_interior
    return G[:, :n0].tocsr(), G[:, n0:].tocsr()


def assemble_load(space: FeSpace, f) -> np.ndarray:
    """``f_i = int f Phi_i`` over the interior basis functions.

    ``f`` is a callable or an array tabulated at the cell quadrature points.
    """
    x, w, phi, _ = space.cell_quadrature()
    fx = np.asarray(f(x.reshape(-1, 2)) if callable(f) else f, dtype=float).reshape(w.shape)
    local = np.einsum("cq,qi->ci", w * fx, phi)
    out = np.bincount(space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.n_dofs)
    return out[: space.n_interior]


def assemble_stiffness(space: FeSpace, A=None, advection=None) -> sp.csr_matrix:
    """``K[i, j] = int grad Phi_i . A grad Phi_j + int Phi_i (b . grad Phi_j)`` on all dofs.

    ``A`` and ``advection`` follow the same callable-or-tabulated convention as
    the B matrices; ``A=None`` means the identity and ``advection=None`` zero.
    """
    x, w, phi, dphi = space.cell_quadrature()
    if A is None:
        local = np.einsum("cq,cqid,cqjd->cij", w, dphi, dphi)
    else:
        a = _coefficient_at_quadrature(space, A, x)
        local = np.einsum("cq,cqid,cqde,cqje->cij", w, dphi, a, dphi)
    if advection is not None:
        if callable(advection):
            b = np.asarray(advection(x.reshape(-1, 2)), dtype=float).reshape(x.shape)
        else:
            b = np.asarray(advection, dtype=float).reshape(x.shape)
        local += np.einsum("cq,qi,cqd,cqjd->cij", w, phi, b, dphi)
    return _scatter(space, local)


@dataclass(eq=False)
class NvSystem:
    """Component matrices of the nonvariational FE discretisation.

    ``B[a][b]`` is (N0, N), ``C[a][b]`` is (N, N0), ``Cb[a][b]`` is (N, Nb),
    ``M`` is (N, N), ``fvec`` has length N0 and ``gvec`` length Nb.
    """

    space: FeSpace
    M: sp.csr_matrix
    B: list
    C: list
    Cb: list
    fvec: np.ndarray
    gvec: np.ndarray

    @property
    def d(self) -> int:
        return DIM

    @property
    def n_dofs(self) -> int:
        return self.space.n_dofs

    @property
    def n_interior(self) -> int:
        return self.space.n_interior

    @property
    def size(self) -> int:
        return self.d**2 * self.n_dofs + self.n_interior

    def with_coefficient(self, A) -> "NvSystem":
        """Copy with B reassembled for a new coefficient; M, C, Cb are shared."""
        return NvSystem(self.space, self.M, assemble_B_all(self.space, A), self.C, self.Cb,
                        self.fvec, self.gvec)

    def with_data(self, f=None, g=None) -> "NvSystem":
        fvec = self.fvec if f is None else assemble_load(self.space, f)
        gvec = self.gvec if g is None else interpolate(self.space, g)[self.space.n_interior:]
        return NvSystem(self.space, self.M, self.B, self.C, self.Cb, fvec, gvec)


def assemble_hessian_blocks(space: FeSpace):
    C, Cb = [], []
    for alpha in range(DIM):
        crow, cbrow = [], []
        for beta in range(DIM):
            c, cb = assemble_C(space, alpha, beta)
            crow.append(c)
            cbrow.append(cb)
        C.append(crow)
        Cb.append(cbrow)
    return C, Cb


def assemble_system(space: FeSpace, A, f, g=None) -> NvSystem:
    """Assemble every component for ``A : D^2 u = f`` with ``u = g`` on the boundary."""
    C, Cb = assemble_hessian_blocks(space)
    if g is None:
        gvec = np.zeros(space.n_boundary)
    else:
        gvec = interpolate(space, g)[space.n_interior:]
    return NvSystem(
        space=space,
        M=assemble_mass(space),
        B=assemble_B_all(space, A),
        C=C,
        Cb=Cb,
        fvec=assemble_load(space, f),
        gvec=gvec,
    )


def export_coo(matrix, path) -> None:
    """Write ``row col value`` lines (0-based) for offline inspection."""
    coo = sp.coo_matrix(matrix)
    lines = [f"{i} {j} {v!r}" for i, j, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def import_coo(path, shape) -> sp.csr_matrix:
    data = np.loadtxt(path, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape).tocsr()
