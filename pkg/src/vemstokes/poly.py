"""Scaled monomial bases, polynomial calculus and quadrature on polygons.

Monomials on an element are centred at the centroid and scaled by the
diameter, ``m_a(x) = prod(((x_i - c_i) / h) ** a_i)``, enumerated in graded
lexicographic order: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def multi_indices(n):
    """All (a1, a2) with a1 + a2 <= n, graded lexicographic."""
    if n < 0:
        return ()
    return tuple((d - j, j) for d in range(n + 1) for j in range(d + 1))


def dim(n):
    """Dimension of the scalar polynomial space of degree n in 2D."""
    return 0 if n < 0 else (n + 1) * (n + 2) // 2


@lru_cache(maxsize=None)
def index_map(n):
    return {a: i for i, a in enumerate(multi_indices(n))}


class ScaledMonomialBasis:
    """Scaled monomials of degree <= ``degree`` centred at ``center``."""

    def __init__(self, center, h, degree):
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)
        self.degree = int(degree)
        self.alphas = multi_indices(self.degree)
        self._exps = np.array(self.alphas, dtype=int).reshape(-1, 2)

    def __len__(self):
        return len(self.alphas)

    def eval(self, x):
        """Values of every basis monomial, shape (npts, dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi = (x - self.center) / self.h
        n = self.degree
        # powers[p, k, i] = xi[p, i] ** k
        powers = np.ones((x.shape[0], n + 1, 2))
        for k in range(1, n + 1):
            powers[:, k, :] = powers[:, k - 1, :] * xi
        e = self._exps
        return powers[:, e[:, 0], 0] * powers[:, e[:, 1], 1]

    def eval_monomial(self, alpha, x):
        xi = (np.atleast_2d(np.asarray(x, dtype=float)) - self.center) / self.h
        return xi[:, 0] ** alpha[0] * xi[:, 1] ** alpha[1]


@lru_cache(maxsize=None)
def _derivative_ref(n, i):
    """d/dxi_i on reference monomials: degree n -> degree n-1."""
    D = np.zeros((dim(n - 1), dim(n)))
    lower = index_map(max(n - 1, 0))
    for col, a in enumerate(multi_indices(n)):
        if a[i] == 0:
            continue
        b = (a[0] - (i == 0), a[1] - (i == 1))
        D[lower[b], col] = a[i]
    D.flags.writeable = False
    return D


def derivative_matrix(n, i, h):
    """Coefficient map of d/dx_i: P_n -> P_{n-1} in the scaled basis."""
    return _derivative_ref(n, i) / h


def grad_matrix(n, h):
    """Scalar degree n -> vector degree n-1, stacked [d/dx1; d/dx2]."""
    return np.vstack([derivative_matrix(n, 0, h), derivative_matrix(n, 1, h)])


def div_matrix(n, h):
    """Vector degree n (stacked components) -> scalar degree n-1."""
    return np.hstack([derivative_matrix(n, 0, h), derivative_matrix(n, 1, h)])


def symgrad_matrix(n, h):
    """Vector degree n -> tensor degree n-1, components ordered 11, 12, 21, 22."""
    D1, D2 = derivative_matrix(n, 0, h), derivative_matrix(n, 1, h)
    Z = np.zeros_like(D1)
    return np.vstack([
        np.hstack([D1, Z]),
        np.hstack([0.5 * D2, 0.5 * D1]),
        np.hstack([0.5 * D2, 0.5 * D1]),
        np.hstack([Z, D2]),
    ])


def vector_grad_matrix(n, h):
    """Vector degree n -> full gradient tensor (dv_i/dx_j), ordered 11, 12, 21, 22."""
    D1, D2 = derivative_matrix(n, 0, h), derivative_matrix(n, 1, h)
    Z = np.zeros_like(D1)
    return np.vstack([
        np.hstack([D1, Z]),
        np.hstack([D2, Z]),
        np.hstack([Z, D1]),
        np.hstack([Z, D2]),
    ])


@lru_cache(maxsize=None)
def multiply_matrix(n, beta):
    """Coefficient map of multiplication by m_beta: P_n -> P_{n+|beta|}."""
    out = index_map(n + beta[0] + beta[1])
    M = np.zeros((dim(n + beta[0] + beta[1]), dim(n)))
    for col, a in enumerate(multi_indices(n)):
        M[out[(a[0] + beta[0], a[1] + beta[1])], col] = 1.0
    M.flags.writeable = False
    return M


def embed_matrix(n, m):
    """Inclusion P_n -> P_m for n <= m (zero padding)."""
    E = np.zeros((dim(m), dim(n)))
    E[: dim(n), : dim(n)] = np.eye(dim(n))
    return E


@lru_cache(maxsize=None)
def _helmholtz_ref(n):
    """Inverse of the joint map [grad P_{n+1} (no constant) | mperp P_{n-1}] -> [P_n]^2.

    Computed on reference monomials with unit scaling; see ``helmholtz_split``.
    """
    G = grad_matrix(n + 1, 1.0)[:, 1:]
    mp1 = multiply_matrix(n - 1, (0, 1)) if n >= 1 else np.zeros((dim(n), 0))
    mp2 = -multiply_matrix(n - 1, (1, 0)) if n >= 1 else np.zeros((dim(n), 0))
    R = np.vstack([mp1, mp2])
    J = np.hstack([G, R])
    Jinv = np.linalg.solve(J, np.eye(J.shape[0]))
    Jinv.flags.writeable = False
    return Jinv


def helmholtz_split(n, h):
    """Split w in [P_n]^2 as grad(psi) + mperp * chi.

    Returns (Psi, Chi): matrices mapping stacked coefficients of w to the
    coefficients of psi in P_{n+1} (zero constant term) and chi in P_{n-1},
    where mperp = ((x2 - c2) / h, -(x1 - c1) / h).
    """
    Jinv = _helmholtz_ref(n)
    ng = dim(n + 1) - 1
    Psi = np.zeros((dim(n + 1), 2 * dim(n)))
    Psi[1:] = h * Jinv[:ng]
    return Psi, Jinv[ng:]


# quadrature -----------------------------------------------------------------

@lru_cache(maxsize=None)
def _collapsed_triangle_rule(order):
    """Rule on the unit triangle (0,0),(1,0),(0,1), exact to ``order``.

    Conical product of Gauss-Jacobi (alpha=1) and Gauss-Legendre points; all
    points are strictly interior and all weights positive.
    """
    n = max(1, (order + 2) // 2)
    a, wa = roots_jacobi(n, 1.0, 0.0)  # weight (1 - a)
    b, wb = roots_legendre(n)
    s = (1.0 + a) / 2.0
    t = (1.0 + b) / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(wa / 4.0, wb / 2.0)
    # x = s, y = (1 - s) t, Jacobian (1 - s) carried by the Jacobi weight
    pts = np.column_stack([S.ravel(), ((1.0 - S) * T).ravel()])
    w = W.ravel()
    pts.flags.writeable = False
    w.flags.writeable = False
    return pts, w


@lru_cache(maxsize=None)
def _duffy_triangle_rule(order):
    """Rule on the unit triangle collapsed at (1, 0), exact to ``order``.

    Gauss-Legendre in both collapsed coordinates with the Jacobian (1 - s)
    folded into the weights, so an integrand behaving like 1/|x - (1, 0)|
    pulls back to a bounded function.
    """
    n = max(1, (order + 3) // 2)
    s, ws = _gauss_01(n)
    t, wt = _gauss_01(n)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws * (1.0 - s), wt)
    pts = np.column_stack([S.ravel(), ((1.0 - S) * T).ravel()])
    w = W.ravel()
    pts.flags.writeable = False
    w.flags.writeable = False
    return pts, w


def triangle_quadrature(tri, order, duffy=False):
    """Points and weights on a physical triangle (3x2 array).

    With ``duffy`` the rule is collapsed at the second vertex.
    """
    ref, w = (_duffy_triangle_rule if duffy else _collapsed_triangle_rule)(order)
    tri = np.asarray(tri, dtype=float)
    J = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    return tri[0] + ref @ J.T, w * abs(det)


class QuadratureRule:
    def __init__(self, points, weights):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))


def cross2(u, v):
    return u[0] * v[1] - u[1] * v[0]


def ear_clip(poly):
    """Triangulate a simple CCW polygon; returns a list of index triples."""
    idx = list(range(len(poly)))
    tris = []

    def inside(p, a, b, c):
        d1 = cross2(b - a, p - a)
        d2 = cross2(c - b, p - b)
        d3 = cross2(a - c, p - c)
        return d1 >= 0 and d2 >= 0 and d3 >= 0

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(poly) ** 2:
            raise ValueError("ear clipping failed; polygon not simple")
        for j in range(len(idx)):
            i0, i1, i2 = idx[j - 1], idx[j], idx[(j + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross2(b - a, c - b) <= 0:
                continue
            if any(inside(poly[m], a, b, c) for m in idx if m not in (i0, i1, i2)):
                continue
            tris.append((i0, i1, i2))
            idx.pop(j)
            break
    tris.append(tuple(idx))
    return tris


def polygon_quadrature(polygon, order, center=None, apex=None):
    """Fan sub-triangulation from ``center`` (default: centroid) with a
    per-triangle rule exact to total degree ``order``.

    With ``apex`` (a vertex index) the fan starts at that vertex instead and
    every sub-triangle gets a Duffy rule collapsed there, so integrands with
    an integrable 1/|x - apex| singularity pull back to bounded functions.  Falls back
    to ear clipping when some fan triangle is not positively oriented.
    """
    poly = np.asarray(polygon, dtype=float)
    nv = len(poly)
    if apex is not None:
        a = poly[apex]
        # (p_j, apex, p_j+1): the reference rule collapses at its second vertex
        fan = [(poly[(apex + j) % nv], a, poly[(apex + j + 1) % nv]) for j in range(1, nv - 1)]
        ok = all(cross2(p - b, q - b) > 0 for p, b, q in fan)
    else:
        if center is None:
            center = polygon_centroid(poly)
        fan = [(center, poly[i], poly[(i + 1) % nv]) for i in range(nv)]
        ok = all(cross2(b - a, c - a) > 0 for a, b, c in fan)
    if not ok:
        fan = [(poly[i], poly[j], poly[m]) for i, j, m in ear_clip(poly)]
    duffy = apex is not None and ok
    pts, wts = [], []
    for tri in fan:
        p, w = triangle_quadrature(np.array(tri), order, duffy)
        pts.append(p)
        wts.append(w)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts))


def polygon_centroid(poly):
    poly = np.asarray(poly, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    A = 0.5 * cr.sum()
    return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6.0 * A)


@lru_cache(maxsize=None)
def _gauss_01(n):
    s, w = roots_legendre(n)
    s, w = (s + 1.0) / 2.0, w / 2.0
    s.flags.writeable = False
    w.flags.writeable = False
    return s, w


def edge_quadrature(a, b, order):
    """Gauss-Legendre on segment [a, b], exact to ``order``.

    Returns (points, weights, s) with s in [0, 1] the edge parameter.
    """
    n = max(1, (order + 2) // 2)
    s, w = _gauss_01(n)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    L = np.hypot(*(b - a))
    return a + np.outer(s, b - a), w * L, s


@lru_cache(maxsize=None)
def gauss_lobatto_interior(k):
    """The k-1 interior Gauss-Lobatto nodes of [0, 1] (k+1 nodes overall)."""
    if k < 2:
        return np.zeros(0)
    # interior nodes are the roots of P'_k on [-1, 1]
    from numpy.polynomial import legendre
    c = np.zeros(k + 1)
    c[k] = 1.0
    r = np.sort(np.real(legendre.legroots(legendre.legder(c))))
    out = (r + 1.0) / 2.0
    out.flags.writeable = False
    return out


def lagrange_basis_1d(nodes, s):
    """Values of the Lagrange polynomials on ``nodes`` at ``s``: (len(s), len(nodes))."""
    nodes = np.asarray(nodes, dtype=float)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.ones((s.size, nodes.size))
    for j, xj in enumerate(nodes):
        for m, xm in enumerate(nodes):
            if m != j:
                out[:, j] *= (s - xm) / (xj - xm)
    return out


def gram_matrix(basis, rule):
    """Mass matrix int m_a m_b over the rule's domain."""
    V = basis.eval(rule.points)
    return (V * rule.weights[:, None]).T @ V


def l2_project(basis, rule, values=None, func=None, return_condition=False):
    """L2 projection onto ``basis`` of sampled values (at rule points) or a callable.

    Solves the Gram system with an LU factorization.  With
    ``return_condition`` the Gram 2-norm condition number is returned too.
    """
    if values is None:
        values = func(rule.points)
    values = np.asarray(values, dtype=float)
    V = basis.eval(rule.points)
    G = (V * rule.weights[:, None]).T @ V
    b = (V * rule.weights[:, None]).T @ values
    c = np.linalg.solve(G, b)
    if return_condition:
        return c, np.linalg.cond(G)
    return c
