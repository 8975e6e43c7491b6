import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvfem.mesh import Mesh, mesh_metrics, read_mesh, uniform_square_mesh, write_mesh


def test_minimal_mesh_counts():
    m = uniform_square_mesh(1)
    assert (m.n_vertices, m.n_cells, len(m.boundary_edges)) == (4, 2, 4)


def test_interior_vertex_count_n5():
    m = uniform_square_mesh(5)
    interior = np.all(np.abs(m.vertices) < 1 - 1e-12, axis=1)
    assert interior.sum() == 16


def test_cell_areas_n2():
    areas = uniform_square_mesh(2).cell_areas()
    assert len(areas) == 8
    np.testing.assert_allclose(areas, 0.5, rtol=0, atol=1e-15)
    assert math.isclose(areas.sum(), 4.0)


def test_zero_subdivisions_rejected():
    with pytest.raises(ValueError):
        uniform_square_mesh(0)


def test_vertex_and_cell_ordering():
    m = uniform_square_mesh(2)
    np.testing.assert_array_equal(m.vertices[0], [-1, -1])
    np.testing.assert_array_equal(m.vertices[1], [0, -1])
    # lower triangle of the first grid square, then the upper one
    np.testing.assert_array_equal(m.cells[0], [0, 1, 4])
    np.testing.assert_array_equal(m.cells[1], [0, 4, 3])


def test_metrics_n2():
    h, mu = mesh_metrics(uniform_square_mesh(2))
    assert math.isclose(h, math.sqrt(2), rel_tol=1e-14)
    # right isosceles triangle, legs L: rho = L(2 - sqrt2)/2, h = L sqrt2
    assert math.isclose(mu, (2 - math.sqrt(2)) / 2 / math.sqrt(2), rel_tol=1e-12)


def test_metrics_equilateral():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    m = Mesh(v, np.array([[0, 1, 2]]))
    h, mu = mesh_metrics(m)
    assert math.isclose(h, 1.0)
    assert math.isclose(mu, 1 / (2 * math.sqrt(3)), rel_tol=1e-12)


def test_clockwise_cell_rejected():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        Mesh(v, np.array([[0, 2, 1]]))


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 24))
def test_mesh_invariants(n):
    m = uniform_square_mesh(n)
    assert m.n_cells == 2 * n * n
    assert np.all(m.cell_areas() > 0)
    assert abs(m.cell_areas().sum() - 4.0) <= 1e-12
    # each edge belongs to one cell (boundary) or two (interior)
    local = np.sort(np.concatenate([m.cells[:, [0, 1]], m.cells[:, [1, 2]], m.cells[:, [2, 0]]]), axis=1)
    _, counts = np.unique(local, axis=0, return_counts=True)
    assert set(counts) <= {1, 2}
    assert (counts == 1).sum() == len(m.boundary_edges) == 4 * n
    # normals: unit length and pointing away from the owning cell
    np.testing.assert_allclose(np.linalg.norm(m.boundary_normals, axis=1), 1.0, atol=1e-14)
    mid = m.vertices[m.boundary_edges].mean(axis=1)
    centroid = m.vertices[m.cells[m.boundary_cells]].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", m.boundary_normals, mid - centroid) > 0)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 32))
def test_meshsize_halves(n):
    h1, _ = mesh_metrics(uniform_square_mesh(n))
    h2, _ = mesh_metrics(uniform_square_mesh(2 * n))
    assert math.isclose(h1, 2 * h2, rel_tol=1e-14)
    assert math.isclose(h1, 2 * math.sqrt(2) / n, rel_tol=1e-14)


def test_file_roundtrip(tmp_path):
    m = uniform_square_mesh(3)
    write_mesh(m, tmp_path / "sq.mesh")
    header = (tmp_path / "sq.mesh").read_text().splitlines()[0]
    assert header.split() == ["16", "18", "12"]
    r = read_mesh(tmp_path / "sq.mesh")
    np.testing.assert_array_equal(r.vertices, m.vertices)
    np.testing.assert_array_equal(r.cells, m.cells)
    np.testing.assert_array_equal(r.boundary_cells, m.boundary_cells)
    np.testing.assert_allclose(r.boundary_normals, m.boundary_normals)
