"""Linear saddle-point solves and the two-stage fixed-point driver."""
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble, divergence_matrix, load_vector, nonlinear_residual
from .space import boundary_values

log = logging.getLogger(__name__)

DIV_RTOL = 1e-14  # componentwise target on the divergence rows


class SolverError(RuntimeError):
    pass


@dataclass
class FixedPointConfig:
    tol_increment: float = 1e-8
    max_iter: int = 200
    linear_rtol: float = 1e-10
    stab: str = "s1"

    def __post_init__(self):
        if not self.tol_increment > 0:
            raise ValueError("tol_increment must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class StageLog:
    r_eff: float
    iterations: int = 0
    increments: list = field(default_factory=list)
    residual: float = float("nan")
    converged: bool = False


@dataclass
class IterationLog:
    stages: list = field(default_factory=list)

    @property
    def counts(self):
        return tuple(s.iterations for s in self.stages)

    def __str__(self):
        return "|".join(str(n) for n in self.counts)


@dataclass
class Solution:
    u: np.ndarray
    p: np.ndarray
    multiplier: float = 0.0
    log: IterationLog = None
    linear_residual: float = 0.0


def _singular_message(M):
    """Name the first DoF whose row or column of M is identically zero."""
    M = M.tocsc()
    col_nnz = np.diff(M.indptr)
    row_nnz = np.bincount(M.tocsr().nonzero()[0], minlength=M.shape[0])
    empty = np.flatnonzero((col_nnz == 0) | (row_nnz == 0))
    if len(empty):
        return f"singular saddle-point matrix: zero pivot at unknown {int(empty[0])}"
    return "singular saddle-point matrix (structurally full, numerically singular)"


def _constant_in_kernel(Bs, kern):
    if kern is None:
        return False
    top = np.abs(Bs.T @ kern).max(initial=0.0)
    return top <= 1e-12 * max(abs(Bs).max(), np.finfo(float).tiny) * np.abs(kern).max()


class _SaddleSolver:
    """Factorization of the saddle-point matrix.

    Pressure unknowns are rescaled so every row of B has unit max-norm; the
    divergence rows are otherwise tiny next to the viscous rows and the
    divergence constraint would only hold to the normwise backward error.

    With a mean-pressure border the only kernel direction of the unbordered
    matrix is the global constant pressure.  Pinning one constant pressure
    coefficient gives a sparse nonsingular matrix; the bordered solution is
    recovered by moving the multiplier term to the right-hand side and
    shifting the pressure to zero mean, which avoids the fill a dense border
    row would cause.
    """

    def __init__(self, system):
        self.system = system
        A, B = system.A, system.B
        self.nf, self.np = A.shape[0], B.shape[0]
        rmax = abs(B).max(axis=1).toarray().ravel()
        self.d = np.where(rmax > 0, 1.0 / np.where(rmax > 0, rmax, 1.0), 1.0)
        Bs = sp.diags(self.d) @ B
        K = sp.bmat([[A, Bs.T], [Bs, None]], format="csc")
        self.bordered = system.c is not None
        self.direct = False
        kern = None if system.p_const is None else system.p_const / self.d
        if self.bordered and not _constant_in_kernel(Bs, kern):
            # the shortcut needs the constant pressure in the kernel of B^T;
            # otherwise factor the bordered matrix as it is
            self.direct = True
            K = system.matrix()
        elif self.bordered:
            self.c = self.d * system.c
            self.kernel = kern
            self.pin = self.nf  # constant coefficient of the first cell
            keep = np.ones(K.shape[0], dtype=bool)
            keep[self.pin] = False
            self.keep = np.flatnonzero(keep)
            K = K[self.keep][:, self.keep].tocsc()
        try:
            self.lu = spla.splu(K)
        except RuntimeError as exc:
            raise SolverError(_singular_message(K)) from exc

    def apply(self, b):
        """Inverse of the full (bordered) matrix applied to b."""
        nf, npr, d = self.nf, self.np, self.d
        if self.direct:
            return self.lu.solve(b)
        bu, bp = b[:nf], d * b[nf:nf + npr]
        if not self.bordered:
            y = self.lu.solve(np.concatenate([bu, bp]))
            y[nf:] *= d
            return y
        c, kern = self.c, self.kernel
        lam = (kern @ bp) / (kern @ c)
        rhs = np.concatenate([bu, bp - lam * c])
        y = np.zeros(nf + npr)
        y[self.keep] = self.lu.solve(rhs[self.keep])
        p = y[nf:]
        p += kern * ((b[-1] - c @ p) / (c @ kern))
        p *= d
        return np.concatenate([y, [lam]])


def solve_linear(system, rtol=1e-10, max_refine=3):
    """Sparse LU solve of the bordered saddle-point system with iterative
    refinement up to relative residual ``rtol``.

    Returns (u, p, multiplier, relative residual) with u the full velocity.
    """
    M = system.matrix()
    b = system.rhs()
    solver = _SaddleSolver(system)
    x = solver.apply(b)
    nb = max(np.linalg.norm(b), np.finfo(float).tiny)
    nf, npr = system.n_free, system.n_pressure
    absB = abs(system.B)

    def residuals(x):
        r = b - M @ x
        # componentwise backward error of the divergence rows; the pointwise
        # divergence is this residual over the cell area, so it must reach
        # roundoff and not just the normwise tolerance
        scale = absB @ np.abs(x[:nf]) + np.abs(b[nf:nf + npr])
        rp = np.abs(r[nf:nf + npr]) / np.maximum(scale, np.finfo(float).tiny)
        return r, np.linalg.norm(r) / nb, float(rp.max(initial=0.0))

    r, res, res_div = residuals(x)
    for _ in range(max_refine):
        if (res <= rtol and res_div <= DIV_RTOL) or not np.isfinite(res):
            break
        x += solver.apply(r)
        r, res, res_div = residuals(x)
    if not np.all(np.isfinite(x)):
        raise SolverError(_singular_message(M))
    if res > rtol:
        warnings.warn(f"linear solve reached relative residual {res:.3e} > {rtol:.1e}")
    u, p, lam = system.split(x)
    return u, p, lam, float(res)


class Problem:
    """Discretization, law and data with the parts reused across iterations."""

    def __init__(self, disc, law, f=None, dirichlet=None, neumann=None):
        self.disc = disc
        self.law = law
        self.load = load_vector(disc, f, neumann)
        if dirichlet is None:
            self.g = np.zeros(disc.dofmap.n_velocity)
        else:
            self.g = boundary_values(disc.mesh, disc.dofmap, dirichlet)
        self.B = divergence_matrix(disc)

    def assemble(self, r_eff, prev=None, stab="s1"):
        return assemble(self.disc, self.law, r_eff, prev, stab=stab, load=self.load,
                        dirichlet=self.g, B=self.B)

    def residual(self, u, p, stab="s1", r=None):
        return nonlinear_residual(self.disc, self.law, u, p, self.load, stab=stab, r=r, B=self.B)

    def relative_residual(self, u, p, stab="s1", r=None):
        res = self.residual(u, p, stab, r)
        scale = max(np.abs(self.load[self.disc.dofmap.free]).max(), np.finfo(float).tiny)
        return float(np.abs(res).max() / scale)


def _increment(u_new, u_old):
    top = np.abs(u_new - u_old).max()
    return top / max(np.abs(u_new).max(), np.finfo(float).eps)


def fixed_point_stage(problem, r_eff, initial, config=None):
    """Picard iterations at exponent ``r_eff`` starting from the velocity
    ``initial``.  Returns (Solution, StageLog).
    """
    config = config or FixedPointConfig()
    stage = StageLog(r_eff=r_eff)
    u = np.asarray(initial, dtype=float)
    p = None
    lam, lin_res = 0.0, 0.0
    for it in range(1, config.max_iter + 1):
        system = problem.assemble(r_eff, u, config.stab)
        u_new, p, lam, lin_res = solve_linear(system, config.linear_rtol)
        if not np.all(np.isfinite(u_new)):
            raise SolverError(f"non-finite iterate at stage r={r_eff}, iteration {it}")
        inc = _increment(u_new, u)
        stage.increments.append(inc)
        stage.iterations = it
        u = u_new
        log.debug("r=%.3f it=%d increment=%.3e", r_eff, it, inc)
        if inc <= config.tol_increment:
            stage.converged = True
            break
    else:
        warnings.warn(f"fixed point at r={r_eff} hit max_iter={config.max_iter}")
    tail = stage.increments[-3:]
    if len(tail) == 3 and not (tail[0] >= tail[1] >= tail[2]):
        log.warning("increments not monotone in the tail at r=%.3f: %s", r_eff, tail)
    stage.residual = problem.relative_residual(u, p, config.stab, r=r_eff)
    return Solution(u=u, p=p, multiplier=lam, linear_residual=lin_res), stage


def solve_stokes(problem, config=None):
    """Newtonian solve (viscosity mu, plain stabilization)."""
    config = config or FixedPointConfig()
    system = problem.assemble(2.0, None, config.stab)
    u, p, lam, res = solve_linear(system, config.linear_rtol)
    return Solution(u=u, p=p, multiplier=lam, linear_residual=res)


def solve_nonnewtonian(problem, config=None):
    """Stokes start, a stage at (r + 2)/2, then a stage at r."""
    config = config or FixedPointConfig()
    r = problem.law.r
    start = solve_stokes(problem, config)
    sol1, log1 = fixed_point_stage(problem, 0.5 * (r + 2.0), start.u, config)
    sol2, log2 = fixed_point_stage(problem, r, sol1.u, config)
    sol2.log = IterationLog([log1, log2])
    return sol2
