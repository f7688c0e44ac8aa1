import numpy as np
import pytest

from vemstokes import checks
from vemstokes.checks import CheckResult, run_checks


def test_result_line_format():
    assert CheckResult("patch test", True, "max error 1e-12").line() == "[PASS] patch test: max error 1e-12"
    assert CheckResult("x", False, "bad").line().startswith("[FAIL] x")


def test_sample_polygons_are_reproducible():
    a, b = checks.sample_polygons(3), checks.sample_polygons(3)
    assert len(a) == 7 and all(np.array_equal(p, q) for p, q in zip(a, b))


def test_bundled_voronoi_mesh(voronoi):
    m = checks.voronoi_mesh()
    assert m.n_cells == 40 == voronoi.n_cells
    assert np.allclose(m.vertices, voronoi.vertices)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fast_suites_pass(seed):
    results = run_checks(seed=seed, suites=["projectors", "assumption1", "regularity", "patch"])
    assert [r.passed for r in results] == [True] * 4, [r.line() for r in results]


def test_regularity_threshold_reported():
    res = run_checks(suites=["regularity"], rho=0.99)[0]
    assert not res.passed and "violating cells" in res.summary


def test_inf_sup_proxy_stable():
    res = checks.check_inf_sup(levels=(4, 8))
    assert res.passed and all(b > 0.05 for b in res.details["betas"])
