import numpy as np
import pytest
import scipy.sparse as sp

from vemstokes import mesh as M
from vemstokes.assembly import AssembledSystem
from vemstokes.law import CarreauYasuda
from vemstokes.solve import (FixedPointConfig, IterationLog, Problem, SolverError, StageLog,
                             fixed_point_stage, solve_linear, solve_nonnewtonian, solve_stokes)
from vemstokes.space import Discretization
from vemstokes.verify import divergence_ratio, make_test1


def _problem(r, delta=1.0, n=4):
    case = make_test1(r, delta)
    disc = Discretization(M.generate_quadrilateral_distorted(n, beta=0.2), k=2)
    return Problem(disc, case.law, f=case.load, dirichlet=case.u)


def _toy(c=None, p_const=None):
    A = sp.identity(3, format="csr")
    B = sp.csr_matrix(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
    return AssembledSystem(A=A, B=B, c=c, rhs_u=np.array([1.0, 2.0, 3.0]), rhs_p=np.array([0.5, -1.0]),
                           g=np.zeros(3), free=np.arange(3), p_const=p_const)


def test_identity_block_toy():
    u, p, lam, res = solve_linear(_toy())
    # u1 = 0.5, u2 = -1 from the constraint, u3 = 3, p = rhs_u - u on the first two
    assert np.allclose(u, [0.5, -1.0, 3.0]) and np.allclose(p, [0.5, 3.0])
    assert res <= 1e-14 and lam == 0.0


def test_bordered_toy_matches_dense_solve():
    A = sp.csr_matrix(np.array([[2.0, 0.5, 0.0], [0.5, 3.0, 0.0], [0.0, 0.0, 1.0]]))
    B = sp.csr_matrix(np.array([[1.0, 0.0, -1.0], [0.0, 1.0, 1.0]]))
    c = np.array([0.3, 0.7])
    sysm = AssembledSystem(A=A, B=B, c=c, rhs_u=np.array([1.0, 2.0, 3.0]),
                           rhs_p=np.array([0.0, 0.0]), g=np.zeros(3), free=np.arange(3),
                           p_const=np.array([1.0, 1.0]))
    x = np.linalg.solve(sysm.matrix().toarray(), sysm.rhs())
    u, p, lam, res = solve_linear(sysm)
    assert np.allclose(np.concatenate([u, p, [lam]]), x, atol=1e-13)
    assert c @ p == pytest.approx(0.0, abs=1e-14)


def test_singular_system_reports_unknown():
    A = sp.csr_matrix(np.diag([1.0, 0.0, 1.0]))
    B = sp.csr_matrix(np.array([[1.0, 0.0, 0.0]]))
    sysm = AssembledSystem(A=A, B=B, c=None, rhs_u=np.ones(3), rhs_p=np.zeros(1),
                           g=np.zeros(3), free=np.arange(3))
    with pytest.raises(SolverError, match="unknown 1"):
        solve_linear(sysm)


def test_newtonian_end_to_end():
    problem = _problem(2.0)
    sol = solve_stokes(problem)
    assert sol.linear_residual <= 1e-10
    assert divergence_ratio(problem.disc, sol.u) <= 1e-10


def test_stage_at_two_is_one_iteration():
    problem = _problem(2.0)
    start = solve_stokes(problem)
    sol, log = fixed_point_stage(problem, 2.0, start.u)
    assert log.iterations == 1 and log.converged
    assert np.allclose(sol.u, start.u, atol=1e-12)


def test_newtonian_two_stage_equals_stokes():
    problem = _problem(2.0)
    sol = solve_nonnewtonian(problem)
    assert sol.log.counts == (1, 1) and str(sol.log) == "1|1"
    assert np.allclose(sol.u, solve_stokes(problem).u, atol=1e-12)


@pytest.fixture(scope="module")
def carreau_run():
    problem = _problem(1.5)
    return problem, solve_nonnewtonian(problem, FixedPointConfig(tol_increment=1e-8))


def test_carreau_counts_same_order(carreau_run):
    _, sol = carreau_run
    n1, n2 = sol.log.counts
    assert 2 <= n1 <= 12 and 2 <= n2 <= 15
    for st in sol.log.stages:
        assert st.converged and st.increments[-1] <= 1e-8


def test_tighter_tolerance_never_fewer_iterations():
    problem = _problem(1.5)
    counts = []
    for tol in (1e-4, 5e-5, 1e-6, 5e-7):
        counts.append(sum(solve_nonnewtonian(problem, FixedPointConfig(tol_increment=tol)).log.counts))
    assert counts == sorted(counts)


def test_restart_converges_quickly(carreau_run):
    problem, sol = carreau_run
    again, log = fixed_point_stage(problem, problem.law.r, sol.u, FixedPointConfig(tol_increment=1e-8))
    assert log.iterations <= 2
    assert np.allclose(again.u, sol.u, atol=1e-7)


def test_residual_bound_after_convergence(carreau_run):
    problem, sol = carreau_run
    assert sol.log.stages[-1].residual <= 10 * 1e-8


def test_degenerate_law_needs_more_iterations():
    n_d1 = solve_nonnewtonian(_problem(1.5, 1.0)).log.counts[1]
    n_d0 = solve_nonnewtonian(_problem(1.5, 0.0)).log.counts[1]
    assert n_d0 > n_d1


def test_deterministic():
    a = solve_nonnewtonian(_problem(1.75))
    b = solve_nonnewtonian(_problem(1.75))
    assert np.array_equal(a.u, b.u) and np.array_equal(a.p, b.p)


def test_max_iter_warns():
    problem = _problem(1.5)
    with pytest.warns(UserWarning, match="max_iter"):
        sol, log = fixed_point_stage(problem, 1.5, np.zeros(problem.disc.dofmap.n_velocity),
                                     FixedPointConfig(max_iter=2))
    assert log.iterations == 2 and not log.converged


def test_config_validation():
    with pytest.raises(ValueError):
        FixedPointConfig(tol_increment=0.0)
    with pytest.raises(ValueError):
        FixedPointConfig(max_iter=0)


def test_iteration_log_format():
    log = IterationLog([StageLog(1.75, 4), StageLog(1.5, 5)])
    assert str(log) == "4|5" and log.counts == (4, 5)
