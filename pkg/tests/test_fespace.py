import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import factorial

from nvfem.fespace import (
    UnsupportedDegreeError,
    build_space,
    edge_rule,
    error_norms,
    interpolate,
    reference_basis,
    reference_nodes,
    triangle_rule,
)
from nvfem.mesh import uniform_square_mesh


def _monomial_integral(a, b):
    # integral of x^a y^b over the reference triangle: a! b! / (a + b + 2)!
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("deg", range(0, 9))
def test_triangle_rule_exact(deg):
    rule = triangle_rule(deg)
    assert np.all(rule.weights > 0)
    assert math.isclose(rule.weights.sum(), 0.5, rel_tol=1e-14)
    x, y = rule.points[:, 1], rule.points[:, 2]
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            got = np.dot(rule.weights, x**a * y**b)
            assert math.isclose(got, _monomial_integral(a, b), rel_tol=1e-13, abs_tol=1e-16)


@pytest.mark.parametrize("deg", range(0, 9))
def test_edge_rule_exact(deg):
    rule = edge_rule(deg)
    t = rule.points[:, 1]
    assert np.all(rule.weights > 0)
    for a in range(deg + 1):
        assert math.isclose(np.dot(rule.weights, t**a), 1 / (a + 1), rel_tol=1e-13)


def test_reference_basis_lagrange_property(degree):
    nodes = reference_nodes(degree)
    vals, _ = reference_basis(degree, nodes)
    np.testing.assert_allclose(vals, np.eye(len(nodes)), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2), st.floats(0, 1), st.floats(0, 1))
def test_partition_of_unity(deg, s, t):
    bary = np.array([[1 - s, s * (1 - t), s * t]])
    vals, grads = reference_basis(deg, bary)
    assert abs(vals.sum() - 1) <= 1e-12
    assert np.abs(grads.sum(axis=1)).max() <= 1e-10


def test_unsupported_degree():
    with pytest.raises(UnsupportedDegreeError):
        build_space(uniform_square_mesh(2), 3)


def test_dof_counts():
    m = uniform_square_mesh(2)
    s1 = build_space(m, 1)
    assert (s1.n_dofs, s1.n_interior, s1.n_boundary) == (9, 1, 8)
    s2 = build_space(m, 2)
    assert s2.n_dofs == 9 + 16
    assert build_space(uniform_square_mesh(1), 1).n_interior == 0


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 12), st.integers(1, 2))
def test_space_invariants(n, deg):
    m = uniform_square_mesh(n)
    s = build_space(m, deg)
    n_edges = len(m.edges())
    assert s.n_dofs == (m.n_vertices if deg == 1 else m.n_vertices + n_edges)
    both = np.concatenate([s.interior_dofs, s.boundary_dofs])
    np.testing.assert_array_equal(np.sort(both), np.arange(s.n_dofs))
    on_boundary = np.abs(np.abs(s.dof_coords).max(axis=1) - 1) <= 1e-12
    assert not on_boundary[: s.n_interior].any()
    assert on_boundary[s.n_interior:].all()


def test_global_lagrange_property(small_space):
    s = small_space
    for i in range(0, s.n_dofs, 7):
        e = np.zeros(s.n_dofs)
        e[i] = 1.0
        np.testing.assert_allclose(s.evaluate(e, s.dof_coords), e, atol=1e-12)


def test_interpolate_zero_and_linear(small_space):
    s = small_space
    np.testing.assert_array_equal(interpolate(s, lambda x: np.zeros(len(x))), 0)
    c = interpolate(s, lambda x: x[:, 0])
    np.testing.assert_array_equal(c, s.dof_coords[:, 0])
    pts = np.random.default_rng(1).uniform(-1, 1, (50, 2))
    np.testing.assert_allclose(s.evaluate(c, pts), pts[:, 0], atol=1e-13)


def test_p2_reproduces_quadratic():
    s = build_space(uniform_square_mesh(3), 2)
    u = lambda x: x[:, 0] * x[:, 1]
    grad = lambda x: x[:, ::-1].copy()
    e0, e1 = error_norms(s, interpolate(s, u), u, grad)
    assert e0 <= 1e-12 and e1 <= 1e-12


def test_polynomial_reproduction(small_space):
    s = small_space
    if s.degree == 1:
        u, grad = (lambda x: 2 * x[:, 0] - x[:, 1] + 0.5), (lambda x: np.tile([2.0, -1.0], (len(x), 1)))
    else:
        u = lambda x: x[:, 0] ** 2 - 3 * x[:, 0] * x[:, 1] + x[:, 1]
        grad = lambda x: np.column_stack([2 * x[:, 0] - 3 * x[:, 1], 1 - 3 * x[:, 0]])
    e0, e1 = error_norms(s, interpolate(s, u), u, grad)
    assert e0 <= 1e-10 and e1 <= 1e-10


def test_constant_error_norm(small_space):
    s = small_space
    e0, e1 = error_norms(s, np.zeros(s.n_dofs), lambda x: np.ones(len(x)),
                         lambda x: np.zeros((len(x), 2)))
    assert math.isclose(e0, 2.0, rel_tol=1e-13)
    assert e1 == 0.0


def test_interpolation_rate_p1():
    u = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    grad = lambda x: np.pi * np.column_stack([np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                                              np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])])
    errs = []
    for n in (8, 16, 32):
        s = build_space(uniform_square_mesh(n), 1)
        errs.append(error_norms(s, interpolate(s, u), u, grad)[0])
    for a, b in zip(errs, errs[1:]):
        assert 3.6 < a / b < 4.4


def test_interpolation_idempotent(small_space, rng):
    s = small_space
    c = rng.standard_normal(s.n_dofs)
    np.testing.assert_allclose(interpolate(s, lambda x: s.evaluate(c, x)), c, atol=1e-12)


def test_error_norms_length_check(small_space):
    with pytest.raises(ValueError):
        error_norms(small_space, np.zeros(3), lambda x: x[:, 0], lambda x: x)


def test_locate_outside():
    s = build_space(uniform_square_mesh(2), 1)
    cells, _ = s.locate(np.array([[2.0, 0.0], [0.1, 0.2]]))
    assert cells[0] == -1 and cells[1] >= 0
