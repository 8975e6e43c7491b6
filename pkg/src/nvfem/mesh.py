"""Conforming triangulations of planar polygonal domains."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """A conforming triangle mesh.

    Attributes
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array, counterclockwise vertex triples
    boundary_edges : (nb, 2) int array of endpoint vertex indices
    boundary_cells : (nb,) int array, the unique cell owning each boundary edge
    boundary_normals : (nb, 2) float array of unit outward normals
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_edges: np.ndarray = field(default=None)
    boundary_cells: np.ndarray = field(default=None)
    boundary_normals: np.ndarray = field(default=None)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (nv, 2)")
        if cells.ndim != 2 or cells.shape[1] != 3:
            raise ValueError("cells must have shape (nc, 3)")
        if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
            raise ValueError("cell vertex index out of range")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "cells", cells)
        if np.any(self.cell_areas() <= 0.0):
            raise ValueError("cells must be counterclockwise with positive area")

        edges, cells_of_edge = _boundary_topology(cells)
        normals = _outward_normals(vertices, cells, edges, cells_of_edge)
        if self.boundary_edges is not None:
            # keep the caller's edge order but always recompute ownership and normals
            given = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
            lookup = {tuple(sorted(e)): k for k, e in enumerate(edges.tolist())}
            try:
                order = np.array([lookup[tuple(sorted(e))] for e in given.tolist()], dtype=np.int64)
            except KeyError as exc:
                raise ValueError(f"edge {exc.args[0]} is not a boundary edge") from None
            if len(order) != len(edges):
                raise ValueError("boundary edge list is incomplete")
            edges, cells_of_edge, normals = edges[order], cells_of_edge[order], normals[order]
        for name, arr in (("boundary_edges", edges), ("boundary_cells", cells_of_edge),
                          ("boundary_normals", normals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        vertices.setflags(write=False)
        cells.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cell_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def cell_diameters(self) -> np.ndarray:
        p = self.vertices[self.cells]
        lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return lengths.max(axis=1)

    def cell_inradii(self) -> np.ndarray:
        p = self.vertices[self.cells]
        perimeter = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2).sum(axis=1)
        return 2.0 * self.cell_areas() / perimeter

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs, in first-seen cell order."""
        return _unique_edges(self.cells)[0]

    def write(self, path) -> None:
        write_mesh(self, path)


def _local_edges(cells: np.ndarray) -> np.ndarray:
    # local edge k joins local vertices (k, k+1 mod 3)
    return np.stack([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]], axis=1)


def _unique_edges(cells: np.ndarray):
    """Return (edges, cell_edge_index) with edges sorted pairs in first-seen order."""
    local = _local_edges(cells).reshape(-1, 2)
    key = np.sort(local, axis=1)
    uniq, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    # renumber by first appearance for a traversal-ordered numbering
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return uniq[order], rank[inverse.ravel()].reshape(-1, 3)


def _boundary_topology(cells: np.ndarray):
    edges, cell_edge = _unique_edges(cells)
    counts = np.bincount(cell_edge.ravel(), minlength=len(edges))
    if np.any(counts > 2):
        raise ValueError("non-manifold mesh: an edge is shared by more than two cells")
    flat = cell_edge.ravel()
    owner = np.repeat(np.arange(len(cells)), 3)
    local = _local_edges(cells).reshape(-1, 2)
    on_boundary = counts[flat] == 1
    # oriented as in the owning cell, so the owner lies to the left
    return local[on_boundary].copy(), owner[on_boundary].copy()


def _outward_normals(vertices, cells, edges, owners):
    if len(edges) == 0:
        return np.zeros((0, 2))
    t = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    n = np.column_stack([t[:, 1], -t[:, 0]])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    mid = vertices[edges].mean(axis=1)
    centroid = vertices[cells[owners]].mean(axis=1)
    flip = np.einsum("ij,ij->i", n, mid - centroid) < 0
    n[flip] *= -1.0
    return n


def uniform_square_mesh(n: int, lower: float = -1.0, upper: float = 1.0) -> Mesh:
    """Uniform mesh of the square (lower, upper)^2 with n subdivisions per side.

    Each grid square is split along its bottom-left to top-right diagonal.
    Vertices are numbered row-major from the bottom-left corner; each square
    contributes its lower triangle then its upper triangle.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    t = np.linspace(lower, upper, n + 1)
    x, y = np.meshgrid(t, t)
    vertices = np.column_stack([x.ravel(), y.ravel()])
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    lower_tri = np.column_stack([v00, v10, v11])
    upper_tri = np.column_stack([v00, v11, v01])
    cells = np.stack([lower_tri, upper_tri], axis=1).reshape(-1, 3)
    return Mesh(vertices, cells)


def mesh_metrics(mesh: Mesh) -> tuple[float, float]:
    """Return ``(h, mu)``: the largest cell diameter and the shape regularity.

    ``mu`` is the minimum over cells of inradius / diameter.
    """
    diam = mesh.cell_diameters()
    return float(diam.max()), float((mesh.cell_inradii() / diam).min())


def read_mesh(path) -> Mesh:
    """Read the plain-text mesh format written by :func:`write_mesh`."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 3:
        raise ValueError("mesh header must be 'nv nc nb'")
    nv, nc, nb = (int(v) for v in lines[0])
    if len(lines) != 1 + nv + nc + nb:
        raise ValueError(f"expected {1 + nv + nc + nb} non-empty lines, got {len(lines)}")
    body = lines[1:]
    vertices = np.array(body[:nv], dtype=float).reshape(nv, 2)
    cells = np.array(body[nv:nv + nc], dtype=np.int64).reshape(nc, 3)
    edges = np.array(body[nv + nc:], dtype=np.int64).reshape(nb, 2)
    return Mesh(vertices, cells, boundary_edges=edges)


def write_mesh(mesh: Mesh, path) -> None:
    out = [f"{mesh.n_vertices} {mesh.n_cells} {len(mesh.boundary_edges)}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    out += ["{} {} {}".format(*c) for c in mesh.cells.tolist()]
    out += ["{} {}".format(*e) for e in mesh.boundary_edges.tolist()]
    Path(path).write_text("\n".join(out) + "\n")
