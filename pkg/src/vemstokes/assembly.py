"""Element and global assembly of the discrete Stokes forms."""
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .law import shear_factor, stress_flat, viscosity
from .mesh import NEUMANN
from .space import boundary_values


class StabilizationKind(str, Enum):
    S1 = "s1"
    S2 = "s2"


def _kind(kind):
    return StabilizationKind(kind.lower() if isinstance(kind, str) else kind)


# element forms ------------------------------------------------------------------

def element_b(local):
    """b(phi_i, m_a) = -int_E div(phi_i) m_a, exact through the div map."""
    return -(local.mass_k1 @ local.div_map).T


def element_viscous_linearized(local, law, r_eff, prev=None):
    """Frozen-viscosity block sum_q w nu Pi eps(phi_i) : Pi eps(phi_j).

    ``prev`` is the local DoF vector of the previous iterate, or None for
    the Stokes start where nu = mu.
    """
    E = local.eps_q  # (nq, 4, N)
    xq, wq = local.rule.points, local.rule.weights
    if prev is None:
        nu = law.mu(xq)
    else:
        Z = E @ prev
        nu = viscosity(law, r_eff, xq, Z)
    Ef = E.reshape(-1, E.shape[2])
    return Ef.T @ (np.repeat(wq * nu, 4)[:, None] * Ef)


def mean_viscosity(local, law):
    """Cell average of mu by quadrature."""
    return float(local.rule.weights @ law.mu(local.rule.points)) / local.area


def stabilization_coefficients(kind, law, r, h, mu_bar, dofs):
    """Diagonal of D for the tilde-DoF vector ``dofs`` (S1: one shared value)."""
    dofs = np.asarray(dofs, dtype=float)
    if _kind(kind) is StabilizationKind.S1:
        t = np.linalg.norm(dofs) / h
        return np.full(len(dofs), mu_bar * float(
            shear_factor(t, r, law.delta, law.alpha, law.eps_reg)))
    t = np.abs(dofs) / h
    return mu_bar * shear_factor(t, r, law.delta, law.alpha, law.eps_reg)


def element_stabilization(local, kind, law, r, prev=None, mode="frozen", dofvec=None):
    """Stabilization on the non-polynomial part (I - P) of the DoF vector.

    ``mode="frozen"`` returns (I - P)^T D (I - P) with D evaluated at
    ``prev`` (None gives the Newtonian coefficient mu_bar).
    ``mode="nonlinear"`` returns the vector S(u~, phi~_i) for ``dofvec``.
    """
    IP = local.i_minus_p
    mu_bar = mean_viscosity(local, law)
    if mode == "frozen":
        if prev is None:
            d = np.full(local.N, mu_bar)
        else:
            d = stabilization_coefficients(kind, law, r, local.h, mu_bar, IP @ prev)
        return IP.T @ (d[:, None] * IP)
    if mode == "nonlinear":
        if dofvec is None:
            raise ValueError("nonlinear mode needs a dofvec")
        ut = IP @ dofvec
        d = stabilization_coefficients(kind, law, r, local.h, mu_bar, ut)
        return IP.T @ (d * ut)
    raise ValueError(f"unknown stabilization mode {mode!r}")


def stabilization_energy(local, kind, law, r, u, w):
    """S^E(u~, w~) for two local DoF vectors."""
    return float(element_stabilization(local, kind, law, r, mode="nonlinear", dofvec=u) @ w)


def element_rhs(local, f):
    """int_E Pi0_k f . phi_i = int_E f . Pi0_k phi_i, by quadrature."""
    xq, wq = local.rule.points, local.rule.weights
    fq = np.asarray(f(xq), dtype=float)
    return np.einsum("q,qc,qcn->n", wq, fq, local.pi0_q)


def element_stress_form(local, law, r, dofvec):
    """Consistency part of a_h(u, phi_i) with the true stress."""
    E = local.eps_q
    xq, wq = local.rule.points, local.rule.weights
    Z = np.einsum("qtn,n->qt", E, dofvec)
    S = stress_flat(law, xq, Z, r=r)
    return np.einsum("q,qt,qtn->n", wq, S, E)


def neumann_rhs(disc, g):
    """int_{Gamma_N} g . phi_i with ``g(x, normal)`` returning (nq, 2)."""
    mesh, dm = disc.mesh, disc.dofmap
    out = np.zeros(dm.n_velocity)
    if g is None:
        return out
    for e in mesh.boundary_edges(NEUMANN):
        c = mesh.edge_cells[e, 0]
        i = list(mesh.cell_edges[c]).index(e)
        local = disc.spaces[c]
        xq = local.edge_points[i]
        G = np.asarray(g(xq, local.normals[i]), dtype=float)
        vals = np.einsum("q,qj,qc->jc", local.edge_weights[i], local.edge_lagrange[i], G)
        glob = dm.cell_dofs[c][local.edge_dofs[i]]
        np.add.at(out, glob.ravel(), vals.ravel())
    return out


def load_vector(disc, f, g_neumann=None):
    """Global velocity load: projected body force plus Neumann traction."""
    dm = disc.dofmap
    out = np.zeros(dm.n_velocity)
    if f is not None:
        for c, local in enumerate(disc.spaces):
            np.add.at(out, dm.cell_dofs[c], element_rhs(local, f))
    return out + neumann_rhs(disc, g_neumann)


# global system ------------------------------------------------------------------

@dataclass
class AssembledSystem:
    """Saddle-point blocks on the free velocity DoFs.

    ``A`` (nf, nf), ``B`` (np, nf), ``c`` the mean-pressure row or None,
    ``rhs_u`` and ``rhs_p`` after Dirichlet lifting, ``g`` the full Dirichlet
    velocity vector and ``free`` the free indices.
    """
    A: sp.csr_matrix
    B: sp.csr_matrix
    c: np.ndarray
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    g: np.ndarray
    free: np.ndarray
    p_const: np.ndarray = None  # pressure coefficients of the global constant 1

    @property
    def n_free(self):
        return self.A.shape[0]

    @property
    def n_pressure(self):
        return self.B.shape[0]

    def matrix(self):
        blocks = [[self.A, self.B.T], [self.B, None]]
        if self.c is not None:
            cc = sp.csr_matrix(self.c[None, :])
            blocks = [[self.A, self.B.T, None],
                      [self.B, None, cc.T],
                      [None, cc, None]]
        M = sp.bmat(blocks, format="csc")
        return M

    def rhs(self):
        parts = [self.rhs_u, self.rhs_p]
        if self.c is not None:
            parts.append(np.zeros(1))
        return np.concatenate(parts)

    def split(self, x):
        """Full velocity vector, pressure coefficients and multiplier."""
        nf, npr = self.n_free, self.n_pressure
        u = self.g.copy()
        u[self.free] = x[:nf]
        p = x[nf:nf + npr]
        lam = float(x[-1]) if self.c is not None else 0.0
        return u, p, lam


def pressure_mean_row(disc):
    """Row c with c . p = int_Omega p_h."""
    dm = disc.dofmap
    c = np.zeros(dm.n_pressure)
    for cell, local in enumerate(disc.spaces):
        c[dm.pressure_dofs(cell)] = local.mass_k1[0] * 1.0
    return c


def constant_pressure(disc):
    dm = disc.dofmap
    out = np.zeros(dm.n_pressure)
    out[::dm.n_pdofs_cell] = 1.0
    return out


def divergence_matrix(disc):
    """Global B over all velocity DoFs, (n_pressure, n_velocity)."""
    dm = disc.dofmap
    rows, cols, vals = [], [], []
    for c, local in enumerate(disc.spaces):
        Be = element_b(local).T  # (dim P_{k-1}, N)
        pd, vd = dm.pressure_dofs(c), dm.cell_dofs[c]
        rows.append(np.repeat(pd, len(vd)))
        cols.append(np.tile(vd, len(pd)))
        vals.append(Be.ravel())
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(dm.n_pressure, dm.n_velocity))


def velocity_matrix(disc, law, r_eff, prev=None, stab="s1"):
    """Global frozen-coefficient A over all velocity DoFs."""
    dm = disc.dofmap
    if prev is not None and len(prev) != dm.n_velocity:
        raise ValueError(f"prev has length {len(prev)}, expected {dm.n_velocity}")
    rows, cols, vals = [], [], []
    for c, local in enumerate(disc.spaces):
        vd = dm.cell_dofs[c]
        up = None if prev is None else prev[vd]
        Ke = element_viscous_linearized(local, law, r_eff, up)
        Ke += element_stabilization(local, stab, law, r_eff, up)
        n = len(vd)
        rows.append(np.repeat(vd, n))
        cols.append(np.tile(vd, n))
        vals.append(Ke.ravel())
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dm.n_velocity, dm.n_velocity))
    A.sum_duplicates()
    return A


def assemble(disc, law, r_eff, prev=None, stab="s1", load=None, dirichlet=None, B=None):
    """Frozen-coefficient saddle system.

    ``load`` is the global velocity load (see ``load_vector``), ``dirichlet``
    the boundary datum g(x) or a precomputed full Dirichlet vector, ``B``
    an optional precomputed ``divergence_matrix``.
    """
    dm = disc.dofmap
    A_full = velocity_matrix(disc, law, r_eff, prev, stab)
    B_full = divergence_matrix(disc) if B is None else B
    if dirichlet is None:
        g = np.zeros(dm.n_velocity)
    elif callable(dirichlet):
        g = boundary_values(disc.mesh, dm, dirichlet)
    else:
        g = np.asarray(dirichlet, dtype=float)
    F = np.zeros(dm.n_velocity) if load is None else np.asarray(load, dtype=float)
    free = dm.free
    fixed = np.flatnonzero(dm.dirichlet)
    A_ff = A_full[free][:, free]
    rhs_u = F[free] - A_full[free][:, fixed] @ g[fixed]
    B_f = B_full[:, free].tocsr()
    rhs_p = -(B_full[:, fixed] @ g[fixed])
    c = pressure_mean_row(disc) if dm.mean_constraint else None
    return AssembledSystem(A=A_ff.tocsr(), B=B_f, c=c, rhs_u=rhs_u, rhs_p=rhs_p,
                           g=g, free=free, p_const=constant_pressure(disc))


def nonlinear_residual(disc, law, u, p, load, stab="s1", r=None, B=None):
    """Discrete residual on the free velocity DoFs followed by the pressure rows.

    Velocity rows: a_h(u, phi_i) + b(phi_i, p) - load_i with the true stress
    and the nonlinear stabilization.  Pressure rows: b(u, q_j).
    """
    dm = disc.dofmap
    r = law.r if r is None else r
    res = -np.asarray(load, dtype=float).copy()
    for c, local in enumerate(disc.spaces):
        vd = dm.cell_dofs[c]
        ue = u[vd]
        Re = element_stress_form(local, law, r, ue)
        Re += element_stabilization(local, stab, law, r, mode="nonlinear", dofvec=ue)
        Re += element_b(local) @ p[dm.pressure_dofs(c)]
        np.add.at(res, vd, Re)
    B_full = divergence_matrix(disc) if B is None else B
    return np.concatenate([res[dm.free], B_full @ u])
