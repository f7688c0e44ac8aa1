"""Property suites run by ``vemstokes check``.

Every suite returns a ``CheckResult`` whose ``details`` hold the sampled
quantities, so failures can be inspected without rerunning.
"""
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from numpy.polynomial import polynomial as P

from . import assembly
from . import mesh as meshmod
from .law import CarreauYasuda, check_assumption1
from .space import Discretization, LocalSpace, interpolate
from .verify import (err_pressure, err_stress, err_velocity, make_polynomial_case,
                     mesh_family, solve_case)


@dataclass
class CheckResult:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.summary}"


def voronoi_mesh():
    """The bundled 40-cell Lloyd-smoothed Voronoi mesh of the unit square."""
    path = resources.files("vemstokes").joinpath("data/voronoi_40.json")
    with resources.as_file(path) as p:
        return meshmod.load_mesh(p)


def sample_polygons(seed):
    """Cells of several families plus a random non-convex star polygon."""
    rng = np.random.default_rng(seed)
    polys = []
    quad = meshmod.generate_quadrilateral_distorted(4, beta=0.2, seed=seed)
    tri = meshmod.generate_triangular(3)
    vor = voronoi_mesh()
    for m in (quad, tri, vor):
        for c in rng.choice(m.n_cells, size=2, replace=False):
            polys.append(m.cell_points(c))
    nv = 7
    ang = np.sort(rng.uniform(0, 2 * np.pi, nv))
    rad = rng.uniform(0.5, 1.0, nv)
    rad[::2] = 1.0
    polys.append(np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]) * 0.1 + 0.3)
    return polys


def _random_vector_polynomial(rng, k, center, h):
    """Callable pair (v, div v) for a random [P_k]^2 field in local coordinates."""
    C = [np.zeros((k + 1, k + 1)) for _ in range(2)]
    for comp in C:
        for a in range(k + 1):
            for b in range(k + 1 - a):
                comp[a, b] = rng.uniform(-1, 1)

    def v(x):
        y = (np.atleast_2d(x) - center) / h
        return np.column_stack([P.polyval2d(y[:, 0], y[:, 1], c) for c in C])

    def div(x):
        y = (np.atleast_2d(x) - center) / h
        return (P.polyval2d(y[:, 0], y[:, 1], P.polyder(C[0], axis=0))
                + P.polyval2d(y[:, 0], y[:, 1], P.polyder(C[1], axis=1))) / h

    def grad(x):
        y = (np.atleast_2d(x) - center) / h
        G = np.empty((len(y), 2, 2))
        for i in range(2):
            for j in range(2):
                G[:, i, j] = P.polyval2d(y[:, 0], y[:, 1], P.polyder(C[i], axis=j)) / h
        return G

    return v, div, grad


def check_projectors(seed=0, k_values=(2, 3), tol=1e-11):
    """Projectors reproduce random vector polynomials of degree k."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for pts in sample_polygons(seed):
        for k in k_values:
            loc = LocalSpace(pts, k)
            v, div, grad = _random_vector_polynomial(rng, k, loc.centroid, loc.h)
            d = interpolate(loc, v, div)
            xq = loc.rule.points
            scale = max(np.abs(v(xq)).max(), 1.0)
            gscale = max(np.abs(grad(xq)).max(), 1.0)
            checks = [
                (np.abs(loc.eval_vector(loc.pi_zero @ d, xq) - v(xq)).max() / scale),
                (np.abs(loc.eval_vector(loc.pi_nabla @ d, xq) - v(xq)).max() / scale),
                (np.abs(loc.eval_tensor(loc.pi_grad @ d, xq) - grad(xq).reshape(-1, 4)).max()
                 / gscale),
                (np.abs(loc.basis(k - 1).eval(xq) @ (loc.div_map @ d) - div(xq)).max() / gscale),
                (np.abs(loc.proj @ d - d).max() / max(np.abs(d).max(), 1.0)),
            ]
            worst = max(worst, max(checks))
    return CheckResult("projector reproduction", worst <= tol,
                       f"max relative defect {worst:.2e} (tol {tol:.0e})", {"worst": worst})


def _tilde_samples(loc, rng, n):
    X = rng.standard_normal((n, loc.N))
    return X @ loc.i_minus_p.T


def check_stabilization_equivalence(seed=0, r_values=(1.25, 1.5, 1.75), levels=(4, 8, 16),
                                    n_samples=20, spread_tol=0.2):
    """S1/S2 energy ratios stay inside the norm-equivalence bounds
    [N^((r-2)/2), 1] on every level, and their median does not drift with h."""
    rng = np.random.default_rng(seed)
    ok, info = True, {}
    for r in r_values:
        law = CarreauYasuda(r=r, delta=0.0, alpha=1.0)
        medians = []
        for n in levels:
            mesh = meshmod.generate_quadrilateral_distorted(n, beta=0.2, seed=seed)
            ratios, lower = [], 1.0
            for c in rng.choice(mesh.n_cells, size=min(8, mesh.n_cells), replace=False):
                loc = LocalSpace(mesh.cell_points(c), 2)
                lower = min(lower, loc.N ** ((r - 2) / 2))
                for u in _tilde_samples(loc, rng, n_samples) * loc.h:
                    s1 = assembly.stabilization_energy(loc, "s1", law, r, u, u)
                    s2 = assembly.stabilization_energy(loc, "s2", law, r, u, u)
                    ratios.append(s1 / s2)
            ratios = np.array(ratios)
            ok &= bool(ratios.min() >= lower * (1 - 1e-10) and ratios.max() <= 1 + 1e-10)
            medians.append(float(np.median(ratios)))
        spread = (max(medians) - min(medians)) / max(medians)
        ok &= spread <= spread_tol
        info[r] = {"medians": medians, "spread": spread}
    worst = max(v["spread"] for v in info.values())
    return CheckResult("stabilization S1/S2 equivalence", ok,
                       f"median ratio drift across levels <= {worst:.3f}", info)


def check_stabilization_monotonicity(seed=0, r_values=(1.25, 1.5, 1.75), n_samples=200):
    """Sampled strong monotonicity and Hoelder continuity of S1 and S2, delta = 0."""
    rng = np.random.default_rng(seed)
    mesh = meshmod.generate_quadrilateral_distorted(4, beta=0.2, seed=seed)
    ok, info = True, {}
    for r in r_values:
        law = CarreauYasuda(r=r, delta=0.0, alpha=1.0)
        for kind in ("s1", "s2"):
            c_min, C_max, C_bound = np.inf, 0.0, 0.0
            for cell in rng.choice(mesh.n_cells, size=4, replace=False):
                loc = LocalSpace(mesh.cell_points(cell), 2)
                h = loc.h
                C_bound = max(C_bound, 2.0 ** (2 - r) * loc.N ** ((2 - r) / 2))
                scales = 10.0 ** rng.uniform(-3, 1, (n_samples, 3))
                U = _tilde_samples(loc, rng, n_samples) * scales[:, :1]
                W = _tilde_samples(loc, rng, n_samples) * scales[:, 1:2]
                V = _tilde_samples(loc, rng, n_samples) * scales[:, 2:]
                for u, w, v in zip(U, W, V):
                    e = u - w
                    su = assembly.element_stabilization(loc, kind, law, r, mode="nonlinear",
                                                        dofvec=u)
                    sw = assembly.element_stabilization(loc, kind, law, r, mode="nonlinear",
                                                        dofvec=w)
                    se = assembly.stabilization_energy(loc, kind, law, r, e, e)
                    lhs = (su - sw) @ e
                    weight = (h ** (2 - r) * (np.linalg.norm(u) ** r + np.linalg.norm(w) ** r))
                    rhs = abs(se) ** (2 / r) * weight ** ((r - 2) / r)
                    c_min = min(c_min, lhs / rhs if rhs > 0 else np.inf)
                    cont = abs((su - sw) @ v)
                    bound = h ** (2 - r) * np.linalg.norm(e) ** (r - 1) * np.linalg.norm(v)
                    C_max = max(C_max, cont / bound)
            good = bool(c_min > 0 and np.isfinite(C_max) and C_max <= C_bound)
            ok &= good
            info[(r, kind)] = {"c_monotone": float(c_min), "C_continuity": float(C_max),
                               "C_bound": float(C_bound)}
    c_all = min(v["c_monotone"] for v in info.values())
    C_all = max(v["C_continuity"] for v in info.values())
    return CheckResult("stabilization monotonicity/continuity", ok,
                       f"min sampled c = {c_all:.3e}, max sampled C = {C_all:.3e}", info)


def check_assumption(seed=0, n_samples=10_000):
    """Continuity and monotonicity of the stress law with sigma_c, sigma_m."""
    ok, info = True, {}
    for r in (1.1, 1.25, 1.5, 1.75, 2.0):
        for delta in (0.0, 1.0):
            for alpha in (1.0, 2.0):
                rep = check_assumption1(CarreauYasuda(r=r, delta=delta, alpha=alpha),
                                        n_samples=n_samples, seed=seed)
                ok &= rep.ok
                info[(r, delta, alpha)] = rep
    bad = sum(v.continuity_violations + v.monotonicity_violations for v in info.values())
    consts = ", ".join(f"r={r}: sigma_c={CarreauYasuda(r=r).sigma_c:.4g} "
                       f"sigma_m={CarreauYasuda(r=r).sigma_m:.4g}" for r in (1.25, 1.5, 1.75, 2.0))
    return CheckResult("assumption 1 sampling", ok, f"{bad} violations; {consts}", info)


def check_regularity(seed=0, rho=0.1):
    meshes = {"quad": meshmod.generate_quadrilateral_distorted(8, beta=0.2, seed=seed),
              "tri": meshmod.generate_triangular(8),
              "voronoi": voronoi_mesh()}
    reports = {k: meshmod.check_mesh_regularity(m, rho) for k, m in meshes.items()}
    ok = all(r.ok for r in reports.values())
    counts = ", ".join(f"{k}: {len({c for c, _ in r.violations})}" for k, r in reports.items())
    summary = f"rho = {rho}: " + ("all cells pass" if ok else f"violating cells {counts}")
    return CheckResult("mesh regularity", ok, summary, reports)


def check_patch(seed=0, tol=1e-9):
    """Polynomial (u, p) at r = 2 is reproduced on three mesh families."""
    case = make_polynomial_case(k=2, seed=seed)
    meshes = {"quad": meshmod.generate_quadrilateral_distorted(6, beta=0.25, seed=seed),
              "tri": meshmod.generate_triangular(5),
              "voronoi": voronoi_mesh()}
    errs = {}
    for name, m in meshes.items():
        disc, problem, sol = solve_case(case, m)
        errs[name] = (err_velocity(disc, sol.u, case), err_pressure(disc, sol.p, case),
                      err_stress(disc, sol.u, case))
    worst = max(max(e) for e in errs.values())
    return CheckResult("patch test", worst <= tol, f"max error {worst:.2e} (tol {tol:.0e})", errs)


def inf_sup_constant(mesh, k=2):
    """Discrete inf-sup proxy: sqrt of the smallest nonzero generalized
    eigenvalue of B K^-1 B^T q = lam M q, with K the Newtonian velocity matrix
    on the free DoFs and M the pressure mass matrix."""
    disc = Discretization(mesh, k=k)
    law = CarreauYasuda(r=2.0, delta=1.0)
    dm = disc.dofmap
    A = assembly.velocity_matrix(disc, law, 2.0)
    free = dm.free
    K = A[free][:, free].tocsc()
    B = assembly.divergence_matrix(disc)[:, free].tocsc()
    lu = spla.splu(K)
    X = lu.solve(B.T.toarray())
    S = B @ X
    S = 0.5 * (S + S.T)
    M = sla.block_diag(*[loc.mass_k1 for loc in disc.spaces])
    lam = sla.eigh(S, M, eigvals_only=True)
    nonzero = lam[lam > 1e-10 * lam.max()]
    return float(np.sqrt(nonzero.min()))


def check_inf_sup(seed=0, levels=(4, 8, 16), max_variation=0.2):
    betas = [inf_sup_constant(meshmod.generate_quadrilateral_distorted(n, beta=0.2, seed=seed))
             for n in levels]
    var = (max(betas) - min(betas)) / max(betas)
    return CheckResult("inf-sup proxy", var <= max_variation,
                       "beta_h = " + ", ".join(f"{b:.4f}" for b in betas)
                       + f" (variation {var:.1%})", {"betas": betas, "variation": var})


SUITES = {
    "projectors": check_projectors,
    "stab-equivalence": check_stabilization_equivalence,
    "stab-monotonicity": check_stabilization_monotonicity,
    "assumption1": check_assumption,
    "regularity": check_regularity,
    "patch": check_patch,
    "inf-sup": check_inf_sup,
}


def run_checks(seed=0, suites=None, rho=None):
    out = []
    for name in suites or SUITES:
        fn = SUITES[name]
        if name == "regularity" and rho is not None:
            out.append(fn(seed=seed, rho=rho))
        else:
            out.append(fn(seed=seed))
    return out
