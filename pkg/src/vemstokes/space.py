"""Enhanced divergence-free virtual element space on a polygon.

Local DoF ordering (N_E = 2 nv k + dim P_{k-3} + dim P_{k-1} - 1):

* vertex values, two per vertex: index 2*i + c;
* values at the k-1 interior Gauss-Lobatto nodes of every edge, local edge i
  running from vertex i to vertex i+1: index 2*nv + 2*(i*(k-1) + j) + c;
* interior moments (1/|E|) int v . mperp m_a, m_a in M_{k-3};
* divergence moments (h/|E|) int div(v) m_a, m_a in M_{k-1}, |a| > 0.

Here mperp = ((x2 - xc2)/h, -(x1 - xc1)/h).  Tensors are flattened in the
order 11, 12, 21, 22 with entry (i, j) = d v_i / d x_j.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import poly
from .mesh import DIRICHLET, NEUMANN, INTERIOR
from .poly import ScaledMonomialBasis, dim

COND_LIMIT = 1e13


class SpaceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class DofLayout:
    k: int
    n_vertices: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("the enhanced space requires k >= 2")

    @property
    def n_vertex(self):
        return 2 * self.n_vertices

    @property
    def n_edge(self):
        return 2 * self.n_vertices * (self.k - 1)

    @property
    def n_interior(self):
        return dim(self.k - 3)

    @property
    def n_div(self):
        return dim(self.k - 1) - 1

    @property
    def offset_interior(self):
        return self.n_vertex + self.n_edge

    @property
    def offset_div(self):
        return self.offset_interior + self.n_interior

    @property
    def size(self):
        return self.offset_div + self.n_div

    def kinds(self):
        return (["D_U1"] * self.n_vertex + ["D_U2"] * self.n_edge
                + ["D_U3"] * self.n_interior + ["D_U4"] * self.n_div)

    def edge_node_dofs(self, i):
        """(k+1, 2) local DoF indices of the trace nodes of local edge i."""
        k, nv = self.k, self.n_vertices
        out = np.empty((k + 1, 2), dtype=int)
        out[0] = (2 * i, 2 * i + 1)
        out[k] = (2 * ((i + 1) % nv), 2 * ((i + 1) % nv) + 1)
        for j in range(1, k):
            base = 2 * nv + 2 * (i * (k - 1) + j - 1)
            out[j] = (base, base + 1)
        return out


def dof_layout(k, cell):
    """Layout for a cell given as a vertex loop (or vertex count)."""
    nv = cell if isinstance(cell, (int, np.integer)) else len(cell)
    return DofLayout(k, int(nv))


def edge_nodes(k):
    """Trace nodes on [0, 1]: endpoints plus the interior Gauss-Lobatto nodes."""
    return np.concatenate([[0.0], poly.gauss_lobatto_interior(k), [1.0]])


def edge_trace_from_moments(a, b, v, k, order=None):
    """Degree-k trace on segment [a, b] matching v at the endpoints and the
    moments of v against the scaled edge monomials (s - 1/2)^j, j <= k-2.

    Returns the trace values at the ``edge_nodes(k)``, shape (k+1, 2).
    """
    order = 2 * k + 6 if order is None else order
    nodes = edge_nodes(k)
    x, w, s = poly.edge_quadrature(a, b, order)
    L = w.sum()
    vals = np.asarray(v(x), dtype=float)
    ell = poly.lagrange_basis_1d(nodes, s)
    mono = np.column_stack([(s - 0.5) ** j for j in range(k - 1)])
    A = np.zeros((k + 1, k + 1))
    rhs = np.zeros((k + 1, 2))
    A[0, 0] = 1.0
    A[1, k] = 1.0
    rhs[0] = np.asarray(v(np.atleast_2d(a)), dtype=float)[0]
    rhs[1] = np.asarray(v(np.atleast_2d(b)), dtype=float)[0]
    A[2:] = (mono * w[:, None]).T @ ell / L
    rhs[2:] = (mono * w[:, None]).T @ vals / L
    return np.linalg.solve(A, rhs)


class LocalSpace:
    """Geometry, DoF layout and projector matrices of one element.

    Projector attributes map a local DoF vector to polynomial coefficients:

    ``pi_nabla``  (2 dim P_k, N)      H1-seminorm projection, stacked components
    ``pi_zero``   (2 dim P_k, N)      L2 projection onto [P_k]^2
    ``pi_grad``   (4 dim P_{k-1}, N)  L2 projection of the gradient
    ``pi_eps``    (4 dim P_{k-1}, N)  L2 projection of the symmetric gradient
    ``div_map``   (dim P_{k-1}, N)    divergence, exactly a polynomial

    ``apex`` is the index of a vertex where data may be singular; the
    volumetric rule is then fanned from that vertex.
    """

    def __init__(self, points, k, order=None, cell_id=None, apex=None):
        pts = np.asarray(points, dtype=float)
        self.points = pts
        self.k = k
        self.cell_id = cell_id
        self.apex = apex
        self.layout = dof_layout(k, len(pts))
        self.order = 2 * k + 3 if order is None else order
        if self.order < 2 * k:
            raise ValueError("volumetric quadrature order must be >= 2k")
        x, y = pts[:, 0], pts[:, 1]
        self.area = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        self.centroid = poly.polygon_centroid(pts)
        diff = pts[:, None, :] - pts[None, :, :]
        self.h = float(np.sqrt((diff ** 2).sum(-1)).max())
        self.N = self.layout.size
        self.rule = poly.polygon_quadrature(pts, self.order, center=self.centroid, apex=apex)
        self._basis = {}
        self._setup_edges()
        self._build()

    def basis(self, n):
        if n not in self._basis:
            self._basis[n] = ScaledMonomialBasis(self.centroid, self.h, n)
        return self._basis[n]

    def mass(self, n, m=None):
        """Integrals of m_a m_b for a in M_n, b in M_m (exact for n + m <= order)."""
        m = n if m is None else m
        Vn = self._vol_eval(n)
        Vm = self._vol_eval(m)
        return (Vn * self.rule.weights[:, None]).T @ Vm

    def _vol_eval(self, n):
        key = ("vol", n)
        if key not in self._basis:
            self._basis[key] = self.basis(max(n, 0)).eval(self.rule.points)[:, : dim(n)]
        return self._basis[key]

    # edges -----------------------------------------------------------------
    def _setup_edges(self):
        k, pts, nv = self.k, self.points, len(self.points)
        nodes = edge_nodes(k)
        self.edge_points, self.edge_weights, self.edge_lagrange = [], [], []
        self.normals, self.edge_dofs = [], []
        for i in range(nv):
            a, b = pts[i], pts[(i + 1) % nv]
            xq, wq, s = poly.edge_quadrature(a, b, 2 * k + 3)
            t = (b - a) / np.hypot(*(b - a))
            self.edge_points.append(xq)
            self.edge_weights.append(wq)
            self.edge_lagrange.append(poly.lagrange_basis_1d(nodes, s))
            self.normals.append(np.array([t[1], -t[0]]))
            self.edge_dofs.append(self.layout.edge_node_dofs(i))
        s_nodes = nodes[1:-1]
        self.node_points = [pts[i] + np.outer(s_nodes, pts[(i + 1) % nv] - pts[i])
                            for i in range(nv)]

    def boundary_rows(self, g):
        """Rows of the functionals v -> int_{dE} v . g_m for m = 0..M-1.

        ``g(i, xq, normal)`` returns an (nq, 2, M) array on local edge i.
        """
        rows = None
        for i, xq in enumerate(self.edge_points):
            G = g(i, xq, self.normals[i])
            if rows is None:
                rows = np.zeros((G.shape[2], self.N))
            W = self.edge_weights[i][:, None, None] * G
            # contribution to trace node j, component c
            contrib = np.einsum("qj,qcm->mjc", self.edge_lagrange[i], W)
            dofs = self.edge_dofs[i]
            for c in range(2):
                rows[:, dofs[:, c]] += contrib[:, :, c]
        return rows

    # projector construction ------------------------------------------------
    def _check_cond(self, G, what):
        cond = np.linalg.cond(G)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SpaceError(f"singular {what} system on cell {self.cell_id} "
                             f"(condition estimate {cond:.3e})")

    def _build(self):
        k, h, lay = self.k, self.h, self.layout
        N = self.N
        d1 = dim(k - 1)

        # divergence: mean from the boundary flux, the rest from D_U4
        M1 = self.mass(k - 1)
        self._check_cond(M1, "mass")
        R = np.zeros((d1, N))
        R[0] = self.boundary_rows(lambda i, xq, n: np.broadcast_to(
            n[None, :, None], (len(xq), 2, 1)))[0]
        for a in range(1, d1):
            R[a, lay.offset_div + a - 1] = self.area / h
        self.div_map = np.linalg.solve(M1, R)

        # H1 projection
        dk = dim(k)
        Bk = self.basis(k)
        D1 = poly.derivative_matrix(k, 0, h)
        D2 = poly.derivative_matrix(k, 1, h)
        K = D1.T @ M1 @ D1 + D2.T @ M1 @ D2
        bmean = np.zeros(dk)
        for i, xq in enumerate(self.edge_points):
            bmean += self.edge_weights[i] @ Bk.eval(xq)
        G = K.copy()
        G[0] = bmean
        self._check_cond(G, "H1 projection")
        lap = (poly.derivative_matrix(k - 1, 0, h) @ D1
               + poly.derivative_matrix(k - 1, 1, h) @ D2)  # (dim P_{k-2}, dk)
        pi_nabla = np.zeros((2 * dk, N))
        for c in range(2):
            W = np.zeros((2 * dim(k - 2), dk))
            W[c * dim(k - 2):(c + 1) * dim(k - 2)] = lap
            vol = -self.vector_moment_rows(W, k - 2)

            def g_grad(i, xq, n, c=c):
                V = Bk.eval(xq)
                dn = (V[:, :dim(k - 1)] @ D1) * n[0] + (V[:, :dim(k - 1)] @ D2) * n[1]
                out = np.zeros((len(xq), 2, dk))
                out[:, c, :] = dn
                return out

            def g_one(i, xq, n, c=c):
                out = np.zeros((len(xq), 2, 1))
                out[:, c, 0] = 1.0
                return out

            rhs = vol + self.boundary_rows(g_grad)
            rhs[0] = self.boundary_rows(g_one)[0]
            pi_nabla[c * dk:(c + 1) * dk] = np.linalg.solve(G, rhs)
        self.pi_nabla = pi_nabla

        # L2 projection of the gradient
        Bk1 = self.basis(k - 1)
        Dk1 = [poly.derivative_matrix(k - 1, j, h) for j in range(2)]
        pi_grad = np.zeros((4 * d1, N))
        for i_comp in range(2):
            for j in range(2):
                W = np.zeros((2 * dim(k - 2), d1))
                W[i_comp * dim(k - 2):(i_comp + 1) * dim(k - 2)] = Dk1[j]
                vol = -self.vector_moment_rows(W, k - 2)

                def g_b(e, xq, n, i_comp=i_comp, j=j):
                    out = np.zeros((len(xq), 2, d1))
                    out[:, i_comp, :] = Bk1.eval(xq) * n[j]
                    return out

                blk = 2 * i_comp + j
                pi_grad[blk * d1:(blk + 1) * d1] = np.linalg.solve(
                    M1, vol + self.boundary_rows(g_b))
        self.pi_grad = pi_grad
        pg = pi_grad.reshape(4, d1, N)
        sym = 0.5 * (pg[1] + pg[2])
        self.pi_eps = np.concatenate([pg[0], sym, sym, pg[3]])

        # L2 projection onto [P_k]^2, with the enhancement constraint
        Mk = self.mass(k)
        self._check_cond(Mk, "mass")
        rows = self.vector_moment_rows(np.eye(2 * dk), k)
        self.pi_zero = np.vstack([np.linalg.solve(Mk, rows[:dk]),
                                  np.linalg.solve(Mk, rows[dk:])])

        # DoFs of polynomials and the projection onto polynomials in DoF space
        self.poly_dofs = self._poly_dof_matrix()
        self.proj = self.poly_dofs @ self.pi_zero
        self.mass_k = Mk
        self.mass_k1 = M1

    def vector_moment_rows(self, W, n):
        """Rows of v -> int_E v . w for vector polynomials w in [P_n]^2, n <= k.

        ``W`` holds stacked coefficients (2 dim P_n, M).  Uses the split
        w = grad(psi) + mperp chi: the gradient part by parts through the
        divergence and boundary trace, chi of degree <= k-3 through the
        interior moments and higher chi through the H1 projection.
        """
        k, h, lay = self.k, self.h, self.layout
        if n > k:
            raise ValueError("moments are only computable up to degree k")
        Psi, Chi = poly.helmholtz_split(n, h)
        psi = Psi @ W
        chi = Chi @ W
        M = W.shape[1]
        rows = -(psi.T @ self.mass(n + 1, k - 1)) @ self.div_map
        Bp = self.basis(n + 1)

        def g_psi(i, xq, nrm):
            vals = Bp.eval(xq) @ psi
            return nrm[None, :, None] * vals[:, None, :]

        rows = rows + self.boundary_rows(g_psi)
        if n >= 1:
            n3 = lay.n_interior
            lo = min(dim(n - 1), n3)
            if lo:
                rows[:, lay.offset_interior:lay.offset_interior + lo] += self.area * chi[:lo].T
            if dim(n - 1) > n3:
                Q = self._mperp_moments(n - 1)[:, n3:]  # (2 dim P_k, high)
                rows += (chi[n3:].T @ Q.T) @ self.pi_nabla
        return rows

    def _mperp_moments(self, m):
        """Q[(c, b), g] = int m_b (mperp)_c m_g, b in M_k, g in M_m."""
        key = ("mperp", m)
        if key not in self._basis:
            xq, wq = self.rule.points, self.rule.weights
            xi = (xq - self.centroid) / self.h
            Vk = self._vol_eval(self.k)
            Vm = self._vol_eval(m)
            Q1 = (Vk * (wq * xi[:, 1])[:, None]).T @ Vm
            Q2 = (Vk * (-wq * xi[:, 0])[:, None]).T @ Vm
            self._basis[key] = np.vstack([Q1, Q2])
        return self._basis[key]

    def _poly_dof_matrix(self):
        """(N, 2 dim P_k): DoF values of the vector monomials m_b e_c."""
        k, h, lay = self.k, self.h, self.layout
        dk = dim(k)
        Bk = self.basis(k)
        D = np.zeros((self.N, 2 * dk))
        Vv = Bk.eval(self.points)
        for i in range(len(self.points)):
            D[2 * i, :dk] = Vv[i]
            D[2 * i + 1, dk:] = Vv[i]
            if k > 1:
                Ve = Bk.eval(self.node_points[i])
                for j in range(k - 1):
                    base = 2 * len(self.points) + 2 * (i * (k - 1) + j)
                    D[base, :dk] = Ve[j]
                    D[base + 1, dk:] = Ve[j]
        if lay.n_interior:
            Q = self._mperp_moments(k - 3)  # (2dk, n3)
            D[lay.offset_interior:lay.offset_div] = Q.T / self.area
        if lay.n_div:
            div = poly.div_matrix(k, h)  # (dim P_{k-1}, 2dk)
            Md = self.mass(k - 1)[1:]
            D[lay.offset_div:] = (h / self.area) * Md @ div
        return D

    # evaluation helpers -----------------------------------------------------
    def eval_tensor(self, coeffs_map, x):
        """Evaluate a (4 dim P_{k-1}, ...) tensor map at points: (npts, 4, ...)."""
        V = self.basis(self.k - 1).eval(x)
        d1 = V.shape[1]
        C = coeffs_map.reshape((4, d1) + coeffs_map.shape[1:])
        return np.einsum("pa,ta...->pt...", V, C)

    def eval_vector(self, coeffs_map, x):
        """Evaluate a (2 dim P_k, ...) vector map at points: (npts, 2, ...)."""
        V = self.basis(self.k).eval(x)
        dk = V.shape[1]
        C = coeffs_map.reshape((2, dk) + coeffs_map.shape[1:])
        return np.einsum("pa,ta...->pt...", V, C)

    @property
    def dof_kinds(self):
        return self.layout.kinds()

    @cached_property
    def eps_q(self):
        """Projected symmetric gradient of every DoF basis function at the
        quadrature points, (nq, 4, N)."""
        return self.eval_tensor(self.pi_eps, self.rule.points)

    @cached_property
    def grad_q(self):
        return self.eval_tensor(self.pi_grad, self.rule.points)

    @cached_property
    def pi0_q(self):
        return self.eval_vector(self.pi_zero, self.rule.points)

    @cached_property
    def i_minus_p(self):
        return np.eye(self.N) - self.proj


def compute_projectors(points, k, order=None, cell_id=None):
    return LocalSpace(points, k, order=order, cell_id=cell_id)


def div_from_dofs(local, dofvec):
    """Coefficients of div v in the scaled basis of P_{k-1}."""
    return local.div_map @ np.asarray(dofvec, dtype=float)


def dofs_of_polynomial(local, coeffs):
    """DoF vector of the vector polynomial with stacked coefficients in [P_k]^2."""
    return local.poly_dofs @ np.asarray(coeffs, dtype=float)


def interpolate(local, v, div=None):
    """DoFs of the interpolant: vertex values, edge traces from moments,
    interior moments and divergence moments by quadrature.

    ``div`` evaluates div v; when omitted it is approximated by central
    differences.
    """
    k, lay = local.k, local.layout
    pts = local.points
    nv = len(pts)
    out = np.zeros(local.N)
    vv = np.asarray(v(pts), dtype=float)
    out[:2 * nv] = vv.ravel()
    for i in range(nv):
        trace = edge_trace_from_moments(pts[i], pts[(i + 1) % nv], v, k)
        for j in range(1, k):
            base = 2 * nv + 2 * (i * (k - 1) + j - 1)
            out[base:base + 2] = trace[j]
    xq, wq = local.rule.points, local.rule.weights
    if lay.n_interior:
        vals = np.asarray(v(xq), dtype=float)
        xi = (xq - local.centroid) / local.h
        dot = vals[:, 0] * xi[:, 1] - vals[:, 1] * xi[:, 0]
        Vm = local.basis(k - 3).eval(xq)
        out[lay.offset_interior:lay.offset_div] = (wq * dot) @ Vm / local.area
    if lay.n_div:
        if div is None:
            div = _fd_divergence(v, 1e-5 * local.h)
        dv = np.asarray(div(xq), dtype=float)
        Vm = local.basis(k - 1).eval(xq)[:, 1:]
        out[lay.offset_div:] = local.h / local.area * (wq * dv) @ Vm
    return out


def _fd_divergence(v, step):
    def div(x):
        ex, ey = np.array([step, 0.0]), np.array([0.0, step])
        return ((np.asarray(v(x + ex))[:, 0] - np.asarray(v(x - ex))[:, 0])
                + (np.asarray(v(x + ey))[:, 1] - np.asarray(v(x - ey))[:, 1])) / (2 * step)
    return div


# global numbering --------------------------------------------------------------

class GlobalDofMap:
    """Velocity DoFs glued across cells plus a discontinuous pressure space.

    Velocity numbering: vertex values 2*v + c, then edge node values
    2*nv + 2*((k-1)*e + j) + c with nodes ordered from the lower to the higher
    vertex index of the edge, then per-cell interior and divergence moments.
    Pressures are numbered cell by cell, dim P_{k-1} scaled monomials each.
    """

    def __init__(self, mesh, k):
        self.k = k
        self.mesh = mesh
        nv, ne = mesh.n_vertices, mesh.n_edges
        lay0 = DofLayout(k, 3)
        self.n_int = lay0.n_interior + lay0.n_div
        self.offset_edge = 2 * nv
        self.offset_cell = 2 * nv + 2 * (k - 1) * ne
        self.n_velocity = self.offset_cell + self.n_int * mesh.n_cells
        self.n_pdofs_cell = dim(k - 1)
        self.n_pressure = self.n_pdofs_cell * mesh.n_cells
        self.cell_dofs = [self._cell_dofs(c) for c in range(mesh.n_cells)]
        self.dirichlet = np.zeros(self.n_velocity, dtype=bool)
        for e in mesh.boundary_edges(DIRICHLET):
            for c in (0, 1):
                self.dirichlet[2 * mesh.edges[e] + c] = True
            self.dirichlet[self.edge_node_dofs(e).ravel()] = True
        self.mean_constraint = not mesh.boundary_edges(NEUMANN)

    def edge_node_dofs(self, e):
        """(k-1, 2) global indices of edge e's interior nodes, canonical order."""
        k = self.k
        base = self.offset_edge + 2 * (k - 1) * e
        return base + np.arange(2 * (k - 1)).reshape(k - 1, 2)

    def _cell_dofs(self, c):
        mesh, k = self.mesh, self.k
        cell = mesh.cells[c]
        nv = len(cell)
        lay = DofLayout(k, nv)
        out = np.empty(lay.size, dtype=int)
        for i, v in enumerate(cell):
            out[2 * i:2 * i + 2] = (2 * v, 2 * v + 1)
        for i, e in enumerate(mesh.cell_edges[c]):
            g = self.edge_node_dofs(e)
            if cell[i] != mesh.edges[e][0]:
                g = g[::-1]
            out[2 * nv + 2 * i * (k - 1): 2 * nv + 2 * (i + 1) * (k - 1)] = g.ravel()
        out[lay.offset_interior:] = self.offset_cell + self.n_int * c + np.arange(self.n_int)
        return out

    def pressure_dofs(self, c):
        return self.n_pdofs_cell * c + np.arange(self.n_pdofs_cell)

    @property
    def free(self):
        return np.flatnonzero(~self.dirichlet)


def build_global_map(mesh, k):
    return GlobalDofMap(mesh, k)


def boundary_values(mesh, dofmap, g):
    """Global velocity vector holding the Dirichlet datum ``g`` on the
    Dirichlet DoFs (vertex values and edge traces fitted to edge moments).
    """
    k = dofmap.k
    out = np.zeros(dofmap.n_velocity)
    for e in mesh.boundary_edges(DIRICHLET):
        i, j = mesh.edges[e]
        a, b = mesh.vertices[i], mesh.vertices[j]
        trace = edge_trace_from_moments(a, b, g, k)
        out[2 * i:2 * i + 2] = trace[0]
        out[2 * j:2 * j + 2] = trace[k]
        out[dofmap.edge_node_dofs(e).ravel()] = trace[1:k].ravel()
    return out


def _apex(pts, singular_points):
    """Index of the first vertex of ``pts`` at one of ``singular_points``."""
    for sp in singular_points:
        d = np.hypot(*(pts - np.asarray(sp, dtype=float)).T)
        i = int(np.argmin(d))
        if d[i] <= 1e-12 * d.max():
            return i
    return None


class Discretization:
    """Mesh, degree, local spaces and global DoF map bundled for reuse."""

    def __init__(self, mesh, k=2, order=None, singular_points=()):
        self.mesh = mesh
        self.k = k
        self.order = 2 * k + 3 if order is None else order
        self.spaces = [LocalSpace(mesh.cell_points(c), k, order=self.order, cell_id=c,
                                  apex=_apex(mesh.cell_points(c), singular_points))
                       for c in range(mesh.n_cells)]
        self.dofmap = GlobalDofMap(mesh, k)

    def local_dofs(self, u, c):
        return u[self.dofmap.cell_dofs[c]]

    def local_pressure(self, p, c):
        return p[self.dofmap.pressure_dofs(c)]
