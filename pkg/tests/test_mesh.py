import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vemstokes import mesh as M
from vemstokes.mesh import MeshError

UNIT = [(0, 0), (1, 0), (1, 1), (0, 1)]
D2 = ((-1.0, 1.0), (-1.0, 1.0))


def _euler(m):
    return m.n_vertices - m.n_edges + m.n_cells


def test_single_cell():
    m = M.build_mesh(UNIT, [[0, 1, 2, 3]])
    assert m.n_cells == 1
    assert len(m.boundary_edges()) == 4
    assert m.n_edges - len(m.boundary_edges()) == 0


def test_two_by_two_grid_counts():
    m = M.generate_quadrilateral_distorted(2, beta=0.0)
    assert m.n_cells == 4 and m.n_edges == 12
    assert len(m.boundary_edges()) == 8


def test_invalid_cells_rejected():
    with pytest.raises(MeshError, match="repeats"):
        M.build_mesh(UNIT, [[0, 1, 1, 3]])
    with pytest.raises(MeshError, match="out of range"):
        M.build_mesh(UNIT, [[0, 1, 2, 7]])
    with pytest.raises(MeshError, match="not a simple polygon"):
        M.build_mesh(UNIT, [[0, 2, 1, 3]])
    with pytest.raises(MeshError, match="not used"):
        M.build_mesh(UNIT + [(2, 2)], [[0, 1, 2, 3]])


def test_edge_shared_by_three_cells_rejected():
    verts = [(0, 0), (1, 0), (0.5, 1), (0.5, -1), (1.5, 0.5)]
    with pytest.raises(MeshError, match="more than two"):
        M.build_mesh(verts, [[0, 1, 2], [0, 3, 1], [0, 1, 4]])


def test_element_geometry_examples():
    m = M.build_mesh(UNIT, [[0, 1, 2, 3]])
    g = M.element_geometry(m, 0)
    assert g.area == pytest.approx(1.0) and g.h == pytest.approx(np.sqrt(2))
    assert np.allclose(g.centroid, [0.5, 0.5])
    t = M.build_mesh([(0, 0), (1, 0), (0, 1)], [[0, 1, 2]])
    g = M.element_geometry(t, 0)
    assert g.area == pytest.approx(0.5) and g.h == pytest.approx(np.sqrt(2))
    assert np.allclose(g.centroid, [1 / 3, 1 / 3])
    ang = np.arange(6) * np.pi / 3
    hexagon = M.build_mesh(np.column_stack([np.cos(ang), np.sin(ang)]), [list(range(6))])
    assert M.element_geometry(hexagon, 0).area == pytest.approx(3 * np.sqrt(3) / 2)


def test_quad_generator_examples():
    m = M.generate_quadrilateral_distorted(4, beta=0.0)
    assert m.h == pytest.approx(np.sqrt(2) / 4)
    a = M.generate_quadrilateral_distorted(4, beta=0.2, seed=1)
    b = M.generate_quadrilateral_distorted(4, beta=0.2, seed=1)
    assert np.array_equal(a.vertices, b.vertices) and a.cells == b.cells
    c = M.generate_quadrilateral_distorted(4, beta=0.2, seed=2)
    assert not np.array_equal(a.vertices, c.vertices)
    assert M.check_mesh_regularity(M.generate_quadrilateral_distorted(8, beta=0.2), 0.1).ok
    with pytest.raises(ValueError):
        M.generate_quadrilateral_distorted(4, beta=0.5)


def test_triangular_generator_examples():
    m = M.generate_triangular(1, domain=D2)
    assert m.n_cells == 2 and m.h == pytest.approx(2 * np.sqrt(2))
    m = M.generate_triangular(2, domain=D2)
    assert m.n_cells == 8 and m.n_vertices == 9
    m = M.generate_triangular(16, domain=D2)
    assert m.h == pytest.approx(2 * np.sqrt(2) / 16)
    assert M.check_mesh_regularity(m, 0.2).ok


def test_round_trip(tmp_path):
    m = M.generate_quadrilateral_distorted(3, beta=0.2, seed=4)
    path = tmp_path / "m.json"
    M.save_mesh(m, path)
    back = M.load_mesh(path)
    assert np.array_equal(back.vertices, m.vertices)
    assert back.cells == m.cells and np.array_equal(back.edges, m.edges)
    assert back.edge_markers == m.edge_markers


def test_clockwise_cell_is_reoriented(tmp_path):
    path = tmp_path / "cw.json"
    edges = [[0, 1], [1, 2], [2, 3], [0, 3]]
    path.write_text(json.dumps({"vertices": UNIT, "cells": [[0, 3, 2, 1]],
                                "boundary": {"dirichlet": edges, "neumann": []}}))
    with pytest.warns(UserWarning, match="clockwise"):
        m = M.load_mesh(path)
    assert M.element_geometry(m, 0).area > 0
    assert m.warnings


def test_truncated_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"vertices": [[0, 0], [1, 0]')
    with pytest.raises(MeshError, match="parse"):
        M.load_mesh(path)
    path.write_text('{"vertices": [[0, 0]]}')
    with pytest.raises(MeshError, match="lacks"):
        M.load_mesh(path)


def test_unmarked_boundary_edge(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"vertices": UNIT, "cells": [[0, 1, 2, 3]],
                                "boundary": {"dirichlet": [[0, 1]], "neumann": [[1, 2]]}}))
    with pytest.raises(MeshError, match="not marked"):
        M.load_mesh(path)


def test_mixed_boundary_markers():
    m = M.generate_quadrilateral_distorted(3, beta=0.0,
                                           boundary=lambda x: M.NEUMANN if x[0] > 1 - 1e-12 else M.DIRICHLET)
    assert len(m.boundary_edges(M.NEUMANN)) == 3
    assert len(m.boundary_edges(M.DIRICHLET)) == 9


def test_regularity_examples():
    m = M.build_mesh(UNIT, [[0, 1, 2, 3]])
    rep = M.check_mesh_regularity(m, 0.3)
    assert rep.ok and rep.ball_ratio[0] == pytest.approx(0.5 / np.sqrt(2), rel=1e-6)
    needle = M.build_mesh([(0, 0), (1, 0), (1, 0.01), (0, 0.01)], [[0, 1, 2, 3]])
    rep = M.check_mesh_regularity(needle, 0.1)
    assert not rep.ok
    assert any("edge ratio" in msg for _, msg in rep.violations)


def test_chebyshev_radius_of_triangle():
    # inradius of the 3-4-5 right triangle is 1
    assert M.chebyshev_radius(np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])) == pytest.approx(1.0)


def test_voronoi_fixture(voronoi):
    assert voronoi.n_cells == 40
    assert _euler(voronoi) == 1
    area = sum(M.element_geometry(voronoi, c).area for c in range(voronoi.n_cells))
    assert area == pytest.approx(1.0, rel=1e-12)
    assert M.check_mesh_regularity(voronoi, 0.05).ok


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 7), st.floats(0.0, 0.45), st.integers(0, 1000))
def test_generated_meshes_are_consistent(n, beta, seed):
    m = M.generate_quadrilateral_distorted(n, beta=beta, seed=seed)
    assert _euler(m) == 1
    area = sum(M.element_geometry(m, c).area for c in range(m.n_cells))
    assert area == pytest.approx(1.0, rel=1e-12)
    assert len(m.boundary_edges()) == 4 * n
    # every interior edge borders two cells with opposite traversal
    for e in range(m.n_edges):
        c0, c1 = m.edge_cells[e]
        if c1 < 0:
            continue
        i, j = m.edges[e]
        def along(c):
            cell = m.cells[c]
            p = cell.index(i)
            return cell[(p + 1) % len(cell)] == j
        assert along(c0) != along(c1)
