import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial.legendre import leggauss

from vemstokes import poly
from vemstokes.poly import ScaledMonomialBasis

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
PENTAGON = np.array([[0.0, 0.0], [1.2, 0.1], [1.5, 0.9], [0.6, 1.4], [-0.2, 0.8]])


def _green_integral(polygon, a, b):
    """int_E x^a y^b by Green's theorem, x^(a+1) y^b / (a+1) dy on the boundary."""
    s, w = leggauss(a + b + 3)
    s, w = 0.5 * (s + 1.0), 0.5 * w
    total = 0.0
    for i in range(len(polygon)):
        p, q = polygon[i], polygon[(i + 1) % len(polygon)]
        x = p[0] + s * (q[0] - p[0])
        y = p[1] + s * (q[1] - p[1])
        total += (w * x ** (a + 1) * y ** b).sum() / (a + 1) * (q[1] - p[1])
    return total


def test_multi_index_enumeration():
    assert poly.multi_indices(2) == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    for n in range(6):
        assert len(poly.multi_indices(n)) == (n + 1) * (n + 2) // 2 == poly.dim(n)


def test_eval_monomial_examples():
    b = ScaledMonomialBasis([0.5, 0.5], np.sqrt(2.0), 3)
    x = np.array([[0.3, 0.9], [1.0, 1.0]])
    assert np.allclose(b.eval_monomial((0, 0), x), 1.0)
    assert b.eval_monomial((1, 0), [[0.5, 0.5]])[0] == 0.0
    assert b.eval_monomial((1, 1), [[1.0, 1.0]])[0] == pytest.approx(0.125, rel=1e-14)
    vals = b.eval(x)
    for j, a in enumerate(b.alphas):
        assert np.allclose(vals[:, j], b.eval_monomial(a, x))
    assert np.allclose(b.eval([[0.5, 0.5]])[0, 1:], 0.0)


def test_grad_matrix_examples():
    h = 0.7
    G = poly.grad_matrix(3, h)
    d2 = poly.dim(2)
    e = np.zeros(poly.dim(3))
    e[0] = 1.0
    assert np.allclose(G @ e, 0.0)
    e[:] = 0.0
    e[1] = 1.0
    g = G @ e
    assert g[0] == pytest.approx(1 / h) and np.allclose(np.delete(g, 0), 0.0)
    # m_(2,1) against central differences
    b = ScaledMonomialBasis([0.2, -0.1], h, 3)
    c = np.zeros(poly.dim(3))
    c[poly.index_map(3)[(2, 1)]] = 1.0
    rng = np.random.default_rng(0)
    x = rng.random((5, 2))
    dc = G @ c
    b2 = ScaledMonomialBasis([0.2, -0.1], h, 2)
    exact = np.column_stack([b2.eval(x) @ dc[:d2], b2.eval(x) @ dc[d2:]])
    step = 1e-6
    fd = np.column_stack([
        (b.eval(x + [step, 0]) @ c - b.eval(x - [step, 0]) @ c) / (2 * step),
        (b.eval(x + [0, step]) @ c - b.eval(x - [0, step]) @ c) / (2 * step)])
    assert np.abs(fd - exact).max() / np.abs(exact).max() < 1e-7


def test_div_and_symgrad_examples():
    h = 1.3
    n = 2
    d = poly.dim(n)
    const = np.zeros(2 * d)
    const[0], const[d] = 2.0, -1.0
    assert np.allclose(poly.div_matrix(n, h) @ const, 0.0)
    # v = (m_(0,1), 0) = ((y - yc)/h, 0): eps_12 = eps_21 = 1/(2h)
    v = np.zeros(2 * d)
    v[poly.index_map(n)[(0, 1)]] = 1.0
    E = (poly.symgrad_matrix(n, h) @ v).reshape(4, -1)
    assert np.allclose(E[[0, 3]], 0.0)
    assert E[1, 0] == pytest.approx(0.5 / h) and E[2, 0] == pytest.approx(0.5 / h)
    assert np.allclose(E[1:3, 1:], 0.0)
    # rotation (m_(0,1), -m_(1,0)) is divergence free
    rot = np.zeros(2 * d)
    rot[poly.index_map(n)[(0, 1)]] = 1.0
    rot[d + poly.index_map(n)[(1, 0)]] = -1.0
    assert np.allclose(poly.div_matrix(n, h) @ rot, 0.0)


def test_div_grad_is_laplacian():
    rng = np.random.default_rng(1)
    n, h = 4, 0.9
    c = rng.standard_normal(poly.dim(n))
    lap = (poly.derivative_matrix(n - 1, 0, h) @ poly.derivative_matrix(n, 0, h)
           + poly.derivative_matrix(n - 1, 1, h) @ poly.derivative_matrix(n, 1, h)) @ c
    assert np.allclose(poly.div_matrix(n - 1, h) @ (poly.grad_matrix(n, h) @ c), lap,
                       atol=1e-13 * np.abs(lap).max())


def test_polygon_quadrature_examples():
    rule = poly.polygon_quadrature(SQUARE, 2)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(rule.weights > 0)
    assert rule.integrate(rule.points[:, 0] * rule.points[:, 1]) == pytest.approx(0.25, rel=1e-14)


@pytest.mark.parametrize("k", [2, 3])
def test_pentagon_monomials_exact(k):
    rule = poly.polygon_quadrature(PENTAGON, 2 * k + 2)
    x, y = rule.points.T
    for a, b in poly.multi_indices(2 * k + 2):
        exact = _green_integral(PENTAGON, a, b)
        assert rule.integrate(x ** a * y ** b) == pytest.approx(exact, rel=1e-12, abs=1e-14)


def test_apex_rule_handles_vertex_singularity():
    # polar integration gives 2 log(1 + sqrt 2) for 1/|x| on the unit square
    exact = 2.0 * np.log(1.0 + np.sqrt(2.0))
    rule = poly.polygon_quadrature(SQUARE, 7, apex=0)
    assert np.linalg.norm(rule.points, axis=1).min() > 0
    assert rule.integrate(1.0 / np.linalg.norm(rule.points, axis=1)) == pytest.approx(exact, rel=1e-6)
    plain = poly.polygon_quadrature(SQUARE, 7)
    assert abs(plain.integrate(1.0 / np.linalg.norm(plain.points, axis=1)) - exact) > 1e-4
    rule = poly.polygon_quadrature(PENTAGON, 6, apex=2)
    x, y = rule.points.T
    for a, b in poly.multi_indices(6):
        assert rule.integrate(x ** a * y ** b) == pytest.approx(_green_integral(PENTAGON, a, b), rel=1e-12)


def test_nonconvex_cell_falls_back_to_ear_clipping():
    # centroid of this thin L lies outside the polygon
    L = np.array([[0, 0], [3, 0], [3, 0.2], [0.2, 0.2], [0.2, 3], [0, 3]], dtype=float)
    rule = poly.polygon_quadrature(L, 4)
    assert np.all(rule.weights > 0)
    x, y = rule.points.T
    for a, b in poly.multi_indices(4):
        assert rule.integrate(x ** a * y ** b) == pytest.approx(_green_integral(L, a, b), rel=1e-12)


def test_edge_quadrature():
    a, b = np.array([0.0, 0.0]), np.array([3.0, 4.0])
    x, w, s = poly.edge_quadrature(a, b, 2)
    assert w.sum() == pytest.approx(5.0)
    assert (w / 5.0) @ s ** 2 == pytest.approx(1 / 3)
    k = 3
    x, w, s = poly.edge_quadrature(a, b, 2 * k)
    # mean of (s - 1/2)^(2k) over [0, 1] is (1/2)^(2k) / (2k + 1)
    assert (w / 5.0) @ (s - 0.5) ** (2 * k) == pytest.approx(0.5 ** (2 * k) / (2 * k + 1), rel=1e-13)


def test_l2_project_examples():
    rule = poly.polygon_quadrature(SQUARE, 6)
    b1 = ScaledMonomialBasis([0.5, 0.5], np.sqrt(2), 1)
    c = poly.l2_project(b1, rule, func=lambda x: b1.eval_monomial((1, 0), x))
    assert np.allclose(c, [0.0, 1.0, 0.0], atol=1e-13)
    b0 = ScaledMonomialBasis([0.5, 0.5], np.sqrt(2), 0)
    c0 = poly.l2_project(b0, rule, func=lambda x: np.sin(x[:, 0]))
    assert c0[0] == pytest.approx(1.0 - np.cos(1.0), rel=1e-10)
    b2 = ScaledMonomialBasis([0.5, 0.5], np.sqrt(2), 2)
    rng = np.random.default_rng(3)
    samples = rng.standard_normal(len(rule.weights))
    once = b2.eval(rule.points) @ poly.l2_project(b2, rule, values=samples)
    twice = poly.l2_project(b2, rule, values=once)
    assert np.allclose(twice, poly.l2_project(b2, rule, values=samples), atol=1e-12)
    _, cond = poly.l2_project(b2, rule, values=samples, return_condition=True)
    assert 1.0 <= cond < 1e6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 4), st.integers(0, 10_000))
def test_projection_reproduces_polynomials(n, seed):
    rng = np.random.default_rng(seed)
    rule = poly.polygon_quadrature(PENTAGON, 2 * n + 2)
    b = ScaledMonomialBasis(poly.polygon_centroid(PENTAGON), 1.8, n)
    c = rng.standard_normal(len(b))
    got = poly.l2_project(b, rule, values=b.eval(rule.points) @ c)
    assert np.allclose(got, c, rtol=1e-12, atol=1e-12 * np.abs(c).max())


def test_gauss_lobatto_nodes():
    assert poly.gauss_lobatto_interior(2) == pytest.approx([0.5])
    assert poly.gauss_lobatto_interior(3) == pytest.approx([0.5 - np.sqrt(5) / 10, 0.5 + np.sqrt(5) / 10])
