"""Manufactured solutions, error norms and convergence studies."""
import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate

from . import mesh as meshmod
from .law import CarreauYasuda, stress_flat
from .solve import FixedPointConfig, Problem, solve_nonnewtonian
from .poly import polygon_quadrature
from .space import Discretization, interpolate


# manufactured cases ---------------------------------------------------------------

@dataclass
class ManufacturedCase:
    """Exact pair (u, p) with derivatives.

    ``grad_u(x)`` returns (n, 2, 2) with [i, j] = d u_i / d x_j,
    ``eps(x)`` (n, 2, 2) and ``d_eps(x)`` (n, 2, 2, 2) with [k] = d_k eps.
    """
    name: str
    law: CarreauYasuda
    u: Callable
    grad_u: Callable
    eps: Callable
    d_eps: Callable
    p: Callable
    grad_p: Callable
    domain: tuple = ((0.0, 1.0), (0.0, 1.0))
    boundary: object = meshmod.DIRICHLET
    load: Callable = field(default=None, repr=False)
    singular_points: tuple = ()

    def __post_init__(self):
        if self.load is None:
            self.load = stress_load(self.law, self.eps, self.d_eps, self.grad_p)

    def div_u(self, x):
        G = self.grad_u(x)
        return G[:, 0, 0] + G[:, 1, 1]

    def stress(self, x):
        E = self.eps(x).reshape(-1, 4)
        return stress_flat(self.law, x, E)

    def traction(self, x, normal):
        """sigma(eps(u)) n - p n, for Neumann data."""
        S = self.stress(x).reshape(-1, 2, 2)
        return S @ normal - self.p(x)[:, None] * normal[None, :]


def stress_load(law, eps, d_eps, grad_p):
    """f = -div sigma(eps) + grad p for constant mu = law.mu.

    With phi(t) = (delta^a + t^a)^((r-2)/a):
    d_j sigma_ij = mu [phi'(|e|) (e : d_j e)/|e| e_ij + phi(|e|) d_j e_ij].
    """
    r, d, a = law.r, law.delta, law.alpha

    def f(x):
        x = np.atleast_2d(x)
        E = eps(x)
        dE = d_eps(x)  # (n, k, 2, 2)
        t = np.sqrt((E ** 2).sum(axis=(1, 2)))
        base = d ** a + t ** a
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where(base > 0, base ** ((r - 2) / a), 0.0)
            # phi'(t) / t
            dphi_t = np.where(t > 0, (r - 2) * t ** (a - 2) * base ** ((r - 2) / a - 1), 0.0)
        ed = np.einsum("nij,nkij->nk", E, dE)  # e : d_k e
        div = (np.einsum("n,nj,nij->ni", dphi_t, ed, E)
               + phi[:, None] * np.einsum("njij->ni", dE))
        return -law.mu(x)[:, None] * div + grad_p(x)

    return f


def make_test1(r=2.0, delta=1.0):
    """Smooth solution on the unit square with mu = 1, alpha = 2."""
    law = CarreauYasuda(r=r, delta=delta, alpha=2.0)
    a = 0.5 * np.pi

    def u(x):
        x = np.atleast_2d(x)
        s1, c1 = np.sin(a * x[:, 0]), np.cos(a * x[:, 0])
        s2, c2 = np.sin(a * x[:, 1]), np.cos(a * x[:, 1])
        return np.column_stack([s1 * c2, -c1 * s2])

    def grad_u(x):
        x = np.atleast_2d(x)
        s1, c1 = np.sin(a * x[:, 0]), np.cos(a * x[:, 0])
        s2, c2 = np.sin(a * x[:, 1]), np.cos(a * x[:, 1])
        G = np.empty((len(x), 2, 2))
        G[:, 0, 0] = a * c1 * c2
        G[:, 0, 1] = -a * s1 * s2
        G[:, 1, 0] = a * s1 * s2
        G[:, 1, 1] = -a * c1 * c2
        return G

    def eps(x):
        x = np.atleast_2d(x)
        e = a * np.cos(a * x[:, 0]) * np.cos(a * x[:, 1])
        E = np.zeros((len(x), 2, 2))
        E[:, 0, 0], E[:, 1, 1] = e, -e
        return E

    def d_eps(x):
        x = np.atleast_2d(x)
        s1, c1 = np.sin(a * x[:, 0]), np.cos(a * x[:, 0])
        s2, c2 = np.sin(a * x[:, 1]), np.cos(a * x[:, 1])
        dE = np.zeros((len(x), 2, 2, 2))
        for k, de in enumerate((-a * a * s1 * c2, -a * a * c1 * s2)):
            dE[:, k, 0, 0], dE[:, k, 1, 1] = de, -de
        return dE

    def p(x):
        x = np.atleast_2d(x)
        return -np.sin(a * x[:, 0]) * np.sin(a * x[:, 1]) + 4.0 / np.pi ** 2

    def grad_p(x):
        x = np.atleast_2d(x)
        s1, c1 = np.sin(a * x[:, 0]), np.cos(a * x[:, 0])
        s2, c2 = np.sin(a * x[:, 1]), np.cos(a * x[:, 1])
        return np.column_stack([-a * c1 * s2, -a * s1 * c2])

    return ManufacturedCase(f"test1_r{r:g}_d{delta:g}", law, u, grad_u, eps, d_eps, p, grad_p)


def pressure_offset_test2(gamma):
    """Mean of |x|^gamma over (-1, 1)^2, in polar form over one octant."""
    val, _ = integrate.quad(lambda t: np.cos(t) ** (-(gamma + 2)), 0.0, 0.25 * np.pi,
                            epsabs=1e-14, epsrel=1e-13)
    return 2.0 * val / (gamma + 2)


def make_test2(r=2.0, s=0.01):
    """Singular solution on (-1, 1)^2 with delta = 0, mu = 1, alpha = 1."""
    law = CarreauYasuda(r=r, delta=0.0, alpha=1.0)
    gamma = 2.0 / r - 1.0 + s
    c_gamma = pressure_offset_test2(gamma)

    def rho2(x):
        return (x ** 2).sum(axis=1)

    def _pow(x, e):
        q = rho2(x)
        with np.errstate(divide="ignore"):
            return np.where(q > 0, q ** (0.5 * e), 0.0)

    def u(x):
        x = np.atleast_2d(x)
        return _pow(x, s)[:, None] * np.column_stack([x[:, 1], -x[:, 0]])

    def grad_u(x):
        x = np.atleast_2d(x)
        x1, x2 = x[:, 0], x[:, 1]
        w = s * _pow(x, s - 2)
        rs = _pow(x, s)
        G = np.empty((len(x), 2, 2))
        G[:, 0, 0] = w * x1 * x2
        G[:, 0, 1] = rs + w * x2 * x2
        G[:, 1, 0] = -rs - w * x1 * x1
        G[:, 1, 1] = -w * x1 * x2
        return G

    def _Q(x):
        x1, x2 = x[:, 0], x[:, 1]
        Q = np.empty((len(x), 2, 2))
        Q[:, 0, 0] = 2 * x1 * x2
        Q[:, 0, 1] = Q[:, 1, 0] = x2 ** 2 - x1 ** 2
        Q[:, 1, 1] = -2 * x1 * x2
        return Q

    def eps(x):
        x = np.atleast_2d(x)
        return (0.5 * s * _pow(x, s - 2))[:, None, None] * _Q(x)

    def d_eps(x):
        x = np.atleast_2d(x)
        x1, x2 = x[:, 0], x[:, 1]
        Q = _Q(x)
        dQ = np.empty((len(x), 2, 2, 2))
        dQ[:, 0] = np.stack([np.stack([2 * x2, -2 * x1], -1), np.stack([-2 * x1, -2 * x2], -1)], 1)
        dQ[:, 1] = np.stack([np.stack([2 * x1, 2 * x2], -1), np.stack([2 * x2, -2 * x1], -1)], 1)
        r4, r2 = _pow(x, s - 4), _pow(x, s - 2)
        out = (s - 2) * (r4[:, None] * x)[:, :, None, None] * Q[:, None] \
            + r2[:, None, None, None] * dQ
        return 0.5 * s * out

    def p(x):
        x = np.atleast_2d(x)
        return -_pow(x, gamma) + c_gamma

    def grad_p(x):
        x = np.atleast_2d(x)
        return -gamma * _pow(x, gamma - 2)[:, None] * x

    case = ManufacturedCase(f"test2_r{r:g}", law, u, grad_u, eps, d_eps, p, grad_p,
                            domain=((-1.0, 1.0), (-1.0, 1.0)), singular_points=((0.0, 0.0),))
    case.c_gamma = c_gamma
    case.gamma = gamma
    return case


def make_polynomial_case(k=2, seed=0, domain=((0.0, 1.0), (0.0, 1.0)), boundary=meshmod.DIRICHLET):
    """Newtonian case with a divergence-free u in [P_k]^2 (curl of a random
    stream function) and p in P_{k-1} with zero mean over the domain."""
    rng = np.random.default_rng(seed)
    n = k + 2
    psi = np.zeros((n, n))
    for a in range(n):
        for b in range(n - a):
            psi[a, b] = rng.uniform(-1, 1)
    U1 = P.polyder(psi, axis=1)
    U2 = -P.polyder(psi, axis=0)
    pc = np.zeros((k, k))
    for a in range(k):
        for b in range(k - a):
            pc[a, b] = rng.uniform(-1, 1)
    (x0, x1), (y0, y1) = domain
    # subtract the mean of p over the box
    mean = 0.0
    for a in range(k):
        for b in range(k):
            mean += pc[a, b] * (x1 ** (a + 1) - x0 ** (a + 1)) / (a + 1) \
                * (y1 ** (b + 1) - y0 ** (b + 1)) / (b + 1)
    pc[0, 0] -= mean / ((x1 - x0) * (y1 - y0))
    law = CarreauYasuda(r=2.0, delta=0.0, alpha=2.0)

    def ev(C, x):
        return P.polyval2d(x[:, 0], x[:, 1], C) if C.size else np.zeros(len(x))

    def d(C, i):
        return P.polyder(C, axis=i)

    def u(x):
        x = np.atleast_2d(x)
        return np.column_stack([ev(U1, x), ev(U2, x)])

    def grad_u(x):
        x = np.atleast_2d(x)
        G = np.empty((len(x), 2, 2))
        for i, C in enumerate((U1, U2)):
            for j in range(2):
                G[:, i, j] = ev(d(C, j), x)
        return G

    def eps(x):
        G = grad_u(x)
        return 0.5 * (G + G.transpose(0, 2, 1))

    def d_eps(x):
        x = np.atleast_2d(x)
        H = np.empty((len(x), 2, 2, 2))  # [k, i, j] = d_k d_j u_i
        for kk in range(2):
            for i, C in enumerate((U1, U2)):
                for j in range(2):
                    H[:, kk, i, j] = ev(d(d(C, j), kk), x)
        return 0.5 * (H + H.transpose(0, 1, 3, 2))

    def p(x):
        return ev(pc, np.atleast_2d(x))

    def grad_p(x):
        x = np.atleast_2d(x)
        return np.column_stack([ev(d(pc, 0), x), ev(d(pc, 1), x)])

    return ManufacturedCase(f"poly_k{k}_s{seed}", law, u, grad_u, eps, d_eps, p, grad_p,
                            domain=domain, boundary=boundary)


def fd_check_load(case, n_points=20, seed=0, margin=0.05):
    """Max relative mismatch between the closed-form load and a Richardson
    finite-difference evaluation of -div sigma + grad p at random points."""
    rng = np.random.default_rng(seed)
    (x0, x1), (y0, y1) = case.domain
    lx, ly = x1 - x0, y1 - y0
    pts = np.column_stack([x0 + lx * rng.uniform(margin, 1 - margin, n_points),
                           y0 + ly * rng.uniform(margin, 1 - margin, n_points)])
    step = 1e-3 * min(lx, ly)

    def sig(x):
        return case.stress(x).reshape(-1, 2, 2)

    def cdiff(x, h):
        out = np.zeros((len(x), 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            out += (sig(x + e)[:, :, j] - sig(x - e)[:, :, j]) / (2 * h)
        return out

    div = (4 * cdiff(pts, step / 2) - cdiff(pts, step)) / 3
    fd = -div + case.grad_p(pts)
    exact = case.load(pts)
    scale = np.maximum(np.abs(exact).max(axis=1), 1e-12)
    return float((np.abs(fd - exact).max(axis=1) / scale).max())


# mesh families ------------------------------------------------------------------

def mesh_family(kind, n, domain=((0.0, 1.0), (0.0, 1.0)), seed=0, boundary=meshmod.DIRICHLET,
                beta=0.2):
    if kind == "quad":
        return meshmod.generate_quadrilateral_distorted(n, beta=beta, seed=seed, domain=domain,
                                                        boundary=boundary)
    if kind == "tri":
        return meshmod.generate_triangular(n, domain=domain, boundary=boundary)
    raise ValueError(f"unknown mesh family {kind!r}")


# error quantities -----------------------------------------------------------------

ERROR_ORDER_EXTRA = 8  # error integrands |e|^r are not smooth where e vanishes


def error_rule(local):
    """Quadrature rule for the error functionals, finer than the assembly rule."""
    rule = getattr(local, "_error_rule", None)
    if rule is None:
        rule = polygon_quadrature(local.points, local.order + ERROR_ORDER_EXTRA,
                                  center=local.centroid, apex=local.apex)
        local._error_rule = rule
    return rule


def _lp_norm(vals, w, q):
    return float((w @ np.abs(vals) ** q) ** (1.0 / q))


def err_velocity(disc, u_h, case, r=None):
    """Relative W^{1,r} error of the projected gradient."""
    r = case.law.r if r is None else r
    num = den = 0.0
    for c, local in enumerate(disc.spaces):
        rule = error_rule(local)
        xq, wq = rule.points, rule.weights
        Gh = local.eval_tensor(local.pi_grad @ disc.local_dofs(u_h, c), xq)
        Ge = case.grad_u(xq).reshape(-1, 4)
        num += wq @ np.linalg.norm(Ge - Gh, axis=1) ** r
        den += wq @ np.linalg.norm(Ge, axis=1) ** r
    return float((num / den) ** (1.0 / r))


def pressure_values(disc, p_h, c, x):
    local = disc.spaces[c]
    return local.basis(disc.k - 1).eval(x) @ disc.local_pressure(p_h, c)


def err_pressure(disc, p_h, case, r=None):
    """Relative L^{r'} pressure error."""
    r = case.law.r if r is None else r
    q = r / (r - 1.0)
    num = den = 0.0
    for c, local in enumerate(disc.spaces):
        rule = error_rule(local)
        xq, wq = rule.points, rule.weights
        pe = case.p(xq)
        num += wq @ np.abs(pe - pressure_values(disc, p_h, c, xq)) ** q
        den += wq @ np.abs(pe) ** q
    return float((num / den) ** (1.0 / q))


def err_stress(disc, u_h, case, r=None):
    """Relative L^{r'} error between sigma(eps(u)) and sigma(Pi eps(u_h))."""
    law = case.law if r is None else case.law.with_r(r)
    q = law.r / (law.r - 1.0)
    num = den = 0.0
    for c, local in enumerate(disc.spaces):
        rule = error_rule(local)
        xq, wq = rule.points, rule.weights
        Eh = local.eval_tensor(local.pi_eps @ disc.local_dofs(u_h, c), xq)
        Se = stress_flat(law, xq, case.eps(xq).reshape(-1, 4))
        Sh = stress_flat(law, xq, Eh)
        num += wq @ np.linalg.norm(Se - Sh, axis=1) ** q
        den += wq @ np.linalg.norm(Se, axis=1) ** q
    return float((num / den) ** (1.0 / q))


def divergence_ratio(disc, u_h):
    """max |div u_h| over quadrature points divided by max |Pi grad u_h|."""
    div_max = grad_max = 0.0
    for c, local in enumerate(disc.spaces):
        ue = disc.local_dofs(u_h, c)
        V = local.basis(disc.k - 1).eval(local.rule.points)
        div_max = max(div_max, np.abs(V @ (local.div_map @ ue)).max())
        G = np.einsum("qtn,n->qt", local.grad_q, ue)
        grad_max = max(grad_max, np.linalg.norm(G, axis=1).max())
    return float(div_max / max(grad_max, np.finfo(float).tiny))


def interpolate_global(disc, v, div=None):
    """Global DoF vector of the interpolant of v."""
    out = np.zeros(disc.dofmap.n_velocity)
    for c, local in enumerate(disc.spaces):
        out[disc.dofmap.cell_dofs[c]] = interpolate(local, v, div)
    return out


# studies ------------------------------------------------------------------------

@dataclass
class ErrorReport:
    one_over_h: float
    n_cells: int
    err_u: float
    err_p: float
    err_sigma: float
    iterations: str = ""
    div_ratio: float = 0.0
    linear_residual: float = 0.0
    nonlinear_residual: float = 0.0


@dataclass
class StudyResult:
    case: str
    reports: list
    acr: dict

    def to_rows(self):
        rows = []
        for rep in self.reports:
            n = (rep.iterations.split("|") + ["", ""])[:2]
            rows.append({"one_over_h": rep.one_over_h, "err_u": rep.err_u, "err_p": rep.err_p,
                         "err_sigma": rep.err_sigma, "iters_stage1": n[0], "iters_stage2": n[1]})
        return rows

    def write(self, directory):
        import pathlib
        d = pathlib.Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        rows = self.to_rows()
        with open(d / f"{self.case}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        with open(d / f"{self.case}.json", "w") as fh:
            json.dump({"case": self.case, "acr": self.acr,
                       "levels": [asdict(rep) for rep in self.reports]}, fh, indent=2)


def averaged_rate(errors, hs):
    """Arithmetic mean of the per-level rates log(e_i/e_{i+1}) / log(h_i/h_{i+1})."""
    e, h = np.asarray(errors, float), np.asarray(hs, float)
    if len(e) < 2:
        raise ValueError("need at least two levels")
    return float(np.mean(np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])))


def solve_case(case, mesh, k=2, config=None, order=None):
    """Solve one manufactured case on one mesh; returns (disc, problem, solution)."""
    disc = Discretization(mesh, k=k, order=order, singular_points=case.singular_points)
    problem = Problem(disc, case.law, f=case.load, dirichlet=case.u,
                      neumann=case.traction if mesh.boundary_edges(meshmod.NEUMANN) else None)
    return disc, problem, solve_nonnewtonian(problem, config)


def evaluate(disc, problem, sol, case, one_over_h, config=None):
    config = config or FixedPointConfig()
    return ErrorReport(
        one_over_h=one_over_h, n_cells=disc.mesh.n_cells,
        err_u=err_velocity(disc, sol.u, case), err_p=err_pressure(disc, sol.p, case),
        err_sigma=err_stress(disc, sol.u, case), iterations=str(sol.log) if sol.log else "",
        div_ratio=divergence_ratio(disc, sol.u), linear_residual=sol.linear_residual,
        nonlinear_residual=problem.relative_residual(sol.u, sol.p, config.stab))


def convergence_study(case, family, levels, k=2, config=None, seed=0, mesh_scale=1, order=None):
    """Solve on each level and report errors and averaged rates.

    A level ``L`` means nominal h = 1/L; the generator gets ``mesh_scale * L``
    cells per side.
    """
    if len(levels) < 2:
        raise ValueError("a study needs at least two levels")
    reports = []
    for L in levels:
        mesh = mesh_family(family, int(mesh_scale * L), domain=case.domain, seed=seed,
                           boundary=case.boundary)
        disc, problem, sol = solve_case(case, mesh, k, config, order)
        reports.append(evaluate(disc, problem, sol, case, L, config))
    hs = [1.0 / L for L in levels]
    acr = {q: averaged_rate([getattr(rep, q) for rep in reports], hs)
           for q in ("err_u", "err_p", "err_sigma")}
    return StudyResult(case=case.name, reports=reports, acr=acr)
