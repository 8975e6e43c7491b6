"""Lagrange P1/P2 finite element spaces on triangle meshes.

Dofs are numbered interior-first: indices ``0..n_interior-1`` are the
interior nodes and the remaining ``n_boundary`` indices lie on the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import roots_jacobi, roots_legendre

from .mesh import Mesh, _unique_edges

SUPPORTED_DEGREES = (1, 2)


class UnsupportedDegreeError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle (or reference edge [0, 1]).

    ``points`` are barycentric coordinates, shape (nq, 3) on the triangle and
    (nq, 2) on the edge. Weights sum to the reference measure (1/2 or 1).
    """

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int


def triangle_rule(degree: int) -> QuadratureRule:
    """Collapsed-coordinate Gauss rule exact for polynomials of total ``degree``."""
    m = max(1, math.ceil((degree + 1) / 2))
    xs, ws = roots_jacobi(m, 1.0, 0.0)
    xt, wt = roots_legendre(m)
    s = 0.5 * (1.0 + xs)
    t = 0.5 * (1.0 + xt)
    S, T = np.meshgrid(s, t, indexing="ij")
    xi = S.ravel()
    eta = ((1.0 - S) * T).ravel()
    w = (0.125 * np.outer(ws, wt)).ravel()
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    return QuadratureRule(bary, w, degree)


def edge_rule(degree: int) -> QuadratureRule:
    m = max(1, math.ceil((degree + 1) / 2))
    x, w = roots_legendre(m)
    t = 0.5 * (1.0 + x)
    return QuadratureRule(np.column_stack([1.0 - t, t]), 0.5 * w, degree)


# Reference triangle (0,0), (1,0), (0,1); barycentric l0 = 1-x-y, l1 = x, l2 = y.
_BARY_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
# P2 edge dofs: local 3 on (0,1), 4 on (1,2), 5 on (2,0)
_P2_EDGES = ((0, 1), (1, 2), (2, 0))


def reference_basis(degree: int, bary: np.ndarray):
    """Basis values (nq, nloc) and reference gradients (nq, nloc, 2)."""
    bary = np.atleast_2d(bary)
    if degree == 1:
        vals = bary.copy()
        grads = np.broadcast_to(_BARY_GRAD, (len(bary), 3, 2)).copy()
        return vals, grads
    if degree == 2:
        nq = len(bary)
        vals = np.empty((nq, 6))
        grads = np.empty((nq, 6, 2))
        for i in range(3):
            li = bary[:, i]
            vals[:, i] = li * (2.0 * li - 1.0)
            grads[:, i] = (4.0 * li - 1.0)[:, None] * _BARY_GRAD[i]
        for k, (i, j) in enumerate(_P2_EDGES, start=3):
            li, lj = bary[:, i], bary[:, j]
            vals[:, k] = 4.0 * li * lj
            grads[:, k] = 4.0 * (lj[:, None] * _BARY_GRAD[i] + li[:, None] * _BARY_GRAD[j])
        return vals, grads
    raise UnsupportedDegreeError(f"degree must be one of {SUPPORTED_DEGREES}, got {degree!r}")


def reference_nodes(degree: int) -> np.ndarray:
    """Barycentric coordinates of the local Lagrange nodes."""
    nodes = [np.eye(3)[i] for i in range(3)]
    if degree == 2:
        for i, j in _P2_EDGES:
            b = np.zeros(3)
            b[i] = b[j] = 0.5
            nodes.append(b)
    return np.array(nodes)


@dataclass(frozen=True, eq=False)
class FeSpace:
    mesh: Mesh
    degree: int
    dof_coords: np.ndarray
    cell_dofs: np.ndarray
    n_interior: int

    @property
    def n_dofs(self) -> int:
        return len(self.dof_coords)

    @property
    def n_boundary(self) -> int:
        return self.n_dofs - self.n_interior

    @property
    def interior_dofs(self) -> np.ndarray:
        return np.arange(self.n_interior)

    @property
    def boundary_dofs(self) -> np.ndarray:
        return np.arange(self.n_interior, self.n_dofs)

    @property
    def n_local(self) -> int:
        return self.cell_dofs.shape[1]

    @cached_property
    def _jacobians(self):
        p = self.mesh.vertices[self.mesh.cells]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1]
        inv[:, 1, 1] = J[:, 0, 0]
        inv[:, 0, 1] = -J[:, 0, 1]
        inv[:, 1, 0] = -J[:, 1, 0]
        inv /= det[:, None, None]
        return J, det, inv

    def cell_quadrature(self, degree: int | None = None):
        """Tabulate basis data at cell quadrature points.

        Returns ``(x, w, phi, dphi)`` with physical points x (nc, nq, 2),
        weights w (nc, nq) including the Jacobian, basis values phi
        (nq, nloc) and physical gradients dphi (nc, nq, nloc, 2).
        """
        rule = triangle_rule(2 * self.degree + 2 if degree is None else degree)
        phi, ref_grad = reference_basis(self.degree, rule.points)
        J, det, inv = self._jacobians
        p = self.mesh.vertices[self.mesh.cells]
        x = np.einsum("qi,cid->cqd", rule.points, p)
        w = np.abs(det)[:, None] * rule.weights[None, :]
        # grad_phys = J^{-T} grad_ref
        dphi = np.einsum("ced,qle->cqld", inv, ref_grad)
        return x, w, phi, dphi

    def boundary_quadrature(self, degree: int | None = None):
        """Tabulate owning-cell basis data on boundary edges.

        Returns ``(cells, x, w, phi, dphi, normals)`` where ``cells`` (nb,) are
        the owning cells, x (nb, nq, 2), w (nb, nq) include the edge length,
        phi (nb, nq, nloc), dphi (nb, nq, nloc, 2) and normals (nb, 2).
        """
        mesh = self.mesh
        rule = edge_rule(2 * self.degree + 1 if degree is None else degree)
        cells = mesh.boundary_cells
        edges = mesh.boundary_edges
        ends = mesh.vertices[edges]
        x = np.einsum("qi,bid->bqd", rule.points, ends)
        length = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
        w = length[:, None] * rule.weights[None, :]
        # barycentric coordinates of edge points with respect to the owning cell
        cell_vertices = mesh.cells[cells]
        nb, nq = len(cells), len(rule.weights)
        bary = np.zeros((nb, nq, 3))
        for end in range(2):
            local = np.argmax(cell_vertices == edges[:, end][:, None], axis=1)
            bary[np.arange(nb), :, local] = rule.points[:, end][None, :]
        phi, ref_grad = reference_basis(self.degree, bary.reshape(-1, 3))
        phi = phi.reshape(nb, nq, -1)
        ref_grad = ref_grad.reshape(nb, nq, -1, 2)
        inv = self._jacobians[2][cells]
        dphi = np.einsum("bed,bqle->bqld", inv, ref_grad)
        return cells, x, w, phi, dphi, mesh.boundary_normals

    @cached_property
    def _locator(self):
        centroids = self.mesh.vertices[self.mesh.cells].mean(axis=1)
        return cKDTree(centroids)

    def locate(self, points: np.ndarray):
        """Return (cell index, barycentric coords) for each point; -1 if outside."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        J, _, inv = self._jacobians
        origin = self.mesh.vertices[self.mesh.cells[:, 0]]
        k = min(16, self.mesh.n_cells)
        _, cand = self._locator.query(points, k=k)
        cand = np.asarray(cand).reshape(len(points), k)
        found = np.full(len(points), -1)
        bary = np.zeros((len(points), 3))
        for col in range(k):
            todo = found < 0
            if not todo.any():
                break
            c = cand[todo, col]
            ref = np.einsum("cde,ce->cd", inv[c], points[todo] - origin[c])
            b = np.column_stack([1.0 - ref.sum(axis=1), ref])
            ok = b.min(axis=1) >= -1e-12
            idx = np.flatnonzero(todo)[ok]
            found[idx] = c[ok]
            bary[idx] = b[ok]
        for i in np.flatnonzero(found < 0):
            ref = np.einsum("cde,ce->cd", inv, points[i] - origin)
            b = np.column_stack([1.0 - ref.sum(axis=1), ref])
            hit = np.flatnonzero(b.min(axis=1) >= -1e-12)
            if len(hit):
                found[i] = hit[0]
                bary[i] = b[hit[0]]
        return found, bary

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate the FE function with ``coeffs`` at arbitrary points (NaN outside)."""
        coeffs = np.asarray(coeffs, dtype=float)
        cells, bary = self.locate(points)
        out = np.full(len(cells), np.nan)
        inside = cells >= 0
        phi, _ = reference_basis(self.degree, bary[inside])
        out[inside] = np.einsum("ql,ql->q", phi, coeffs[self.cell_dofs[cells[inside]]])
        return out


def build_space(mesh: Mesh, degree: int) -> FeSpace:
    if degree not in SUPPORTED_DEGREES:
        raise UnsupportedDegreeError(f"degree must be one of {SUPPORTED_DEGREES}, got {degree!r}")
    nv = mesh.n_vertices
    boundary_vertex = np.zeros(nv, dtype=bool)
    boundary_vertex[mesh.boundary_edges.ravel()] = True
    if degree == 1:
        coords = mesh.vertices
        cell_dofs = mesh.cells
        on_boundary = boundary_vertex
    else:
        edges, cell_edge = _unique_edges(mesh.cells)
        coords = np.vstack([mesh.vertices, mesh.vertices[edges].mean(axis=1)])
        # _unique_edges uses local edge k = (k, k+1), matching the P2 edge dof layout
        cell_dofs = np.hstack([mesh.cells, nv + cell_edge])
        boundary_edge = np.zeros(len(edges), dtype=bool)
        bkeys = {tuple(sorted(e)) for e in mesh.boundary_edges.tolist()}
        boundary_edge[[k for k, e in enumerate(edges.tolist()) if tuple(e) in bkeys]] = True
        on_boundary = np.concatenate([boundary_vertex, boundary_edge])
    order = np.concatenate([np.flatnonzero(~on_boundary), np.flatnonzero(on_boundary)])
    new_index = np.empty_like(order)
    new_index[order] = np.arange(len(order))
    return FeSpace(
        mesh=mesh,
        degree=degree,
        dof_coords=np.ascontiguousarray(coords[order]),
        cell_dofs=new_index[cell_dofs],
        n_interior=int((~on_boundary).sum()),
    )


def interpolate(space: FeSpace, g) -> np.ndarray:
    """Lagrange interpolant: nodal values of ``g`` at every dof."""
    return np.asarray(g(space.dof_coords), dtype=float).reshape(space.n_dofs)


def error_norms(space: FeSpace, coeffs, u, grad_u, degree: int | None = None) -> tuple[float, float]:
    """Return ``(L2 error, H1 seminorm error)`` of the FE function against ``u``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.n_dofs,):
        raise ValueError(f"expected {space.n_dofs} coefficients, got {coeffs.shape}")
    x, w, phi, dphi = space.cell_quadrature(degree)
    local = coeffs[space.cell_dofs]
    U = np.einsum("ql,cl->cq", phi, local)
    dU = np.einsum("cqld,cl->cqd", dphi, local)
    pts = x.reshape(-1, 2)
    eu = np.asarray(u(pts)).reshape(U.shape) - U
    eg = np.asarray(grad_u(pts)).reshape(dU.shape) - dU
    e0 = math.fsum((w * eu**2).ravel())
    e1 = math.fsum((w[..., None] * eg**2).ravel())
    return math.sqrt(e0), math.sqrt(e1)


def l2_norm(space: FeSpace, coeffs) -> float:
    x, w, phi, _ = space.cell_quadrature()
    U = np.einsum("ql,cl->cq", phi, np.asarray(coeffs)[space.cell_dofs])
    return math.sqrt(math.fsum((w * U**2).ravel()))
