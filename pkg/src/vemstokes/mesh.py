"""Polygonal meshes: data model, generators, JSON I/O and regularity checks."""
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .poly import cross2, polygon_centroid

INTERIOR, DIRICHLET, NEUMANN = "interior", "dirichlet", "neumann"
MAX_DISTORTION_RETRIES = 32


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class ElementGeometry:
    h: float
    area: float
    centroid: np.ndarray
    edge_lengths: np.ndarray


class PolygonalMesh:
    """Vertices, counter-clockwise polygonal cells and marked edges.

    Built through :func:`build_mesh`; treat instances as read-only.

    Attributes
    ----------
    vertices : (nv, 2) array
    cells : tuple of tuples of vertex indices (CCW)
    edges : (ne, 2) int array, each row sorted (min, max)
    edge_cells : (ne, 2) int array, second entry -1 on the boundary
    edge_markers : tuple of str, one of interior/dirichlet/neumann
    cell_edges : tuple of tuples; local edge i joins local vertices i, i+1
    """

    def __init__(self, vertices, cells, edges, edge_cells, edge_markers, cell_edges):
        self.vertices = vertices
        self.cells = cells
        self.edges = edges
        self.edge_cells = edge_cells
        self.edge_markers = edge_markers
        self.cell_edges = cell_edges
        self.warnings = []
        self._geometry = {}

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    def cell_points(self, c):
        return self.vertices[list(self.cells[c])]

    def boundary_edges(self, marker=None):
        out = [e for e, m in enumerate(self.edge_markers) if m != INTERIOR]
        if marker is not None:
            out = [e for e in out if self.edge_markers[e] == marker]
        return out

    def geometry(self, c):
        if c not in self._geometry:
            self._geometry[c] = element_geometry(self, c)
        return self._geometry[c]

    @property
    def h(self):
        return max(self.geometry(c).h for c in range(self.n_cells))

    @property
    def all_dirichlet(self):
        return all(m != NEUMANN for m in self.edge_markers)

    def __repr__(self):
        return (f"PolygonalMesh(vertices={self.n_vertices}, cells={self.n_cells}, "
                f"edges={self.n_edges})")


def _signed_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _segments_intersect(p1, p2, q1, q2):
    d1 = cross2(q2 - q1, p1 - q1)
    d2 = cross2(q2 - q1, p2 - q1)
    d3 = cross2(p2 - p1, q1 - p1)
    d4 = cross2(p2 - p1, q2 - p1)
    return d1 * d2 <= 0 and d3 * d4 <= 0


def is_simple_polygon(pts):
    """True if no two non-adjacent edges of the closed polygon touch."""
    n = len(pts)
    if n < 3 or abs(_signed_area(pts)) <= 0.0:
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                return False
    return True


def build_mesh(vertices, cells, boundary_spec=DIRICHLET):
    """Build a validated :class:`PolygonalMesh`.

    ``boundary_spec`` is either a marker string applied to every boundary
    edge, a callable ``f(midpoint) -> marker``, or a mapping
    ``{"dirichlet": [[i, j], ...], "neumann": [...]}`` of edge keys.
    Clockwise cells are reoriented with a warning.
    """
    vertices = np.array(vertices, dtype=float).reshape(-1, 2)
    nv = len(vertices)
    fixed_cells = []
    notes = []
    used = np.zeros(nv, dtype=bool)
    for c, cell in enumerate(cells):
        cell = [int(i) for i in cell]
        if len(cell) < 3:
            raise MeshError(f"cell {c} has fewer than 3 vertices")
        if min(cell) < 0 or max(cell) >= nv:
            raise MeshError(f"cell {c} references a vertex index out of range")
        if len(set(cell)) != len(cell):
            raise MeshError(f"cell {c} repeats a vertex index")
        pts = vertices[cell]
        if not is_simple_polygon(pts):
            raise MeshError(f"cell {c} is not a simple polygon")
        if _signed_area(pts) < 0:
            cell = cell[::-1]
            notes.append(f"cell {c} was clockwise and has been reoriented")
            warnings.warn(notes[-1], stacklevel=2)
        used[cell] = True
        fixed_cells.append(tuple(cell))
    if not used.all():
        raise MeshError(f"vertex {int(np.argmin(used))} is not used by any cell")

    edge_id = {}
    edge_cells = []
    cell_edges = []
    for c, cell in enumerate(fixed_cells):
        ids = []
        n = len(cell)
        for i in range(n):
            key = (min(cell[i], cell[(i + 1) % n]), max(cell[i], cell[(i + 1) % n]))
            if key not in edge_id:
                edge_id[key] = len(edge_cells)
                edge_cells.append([c, -1])
            else:
                e = edge_id[key]
                if edge_cells[e][1] != -1:
                    raise MeshError(f"edge {key} is shared by more than two cells")
                edge_cells[e][1] = c
            ids.append(edge_id[key])
        cell_edges.append(tuple(ids))
    edges = np.array(sorted(edge_id, key=edge_id.get), dtype=int).reshape(-1, 2)
    edge_cells = np.array(edge_cells, dtype=int).reshape(-1, 2)

    if not isinstance(boundary_spec, str) and not callable(boundary_spec):
        boundary_spec = {tuple(sorted(int(v) for v in key)): marker
                         for marker in (DIRICHLET, NEUMANN)
                         for key in boundary_spec.get(marker, [])}
    markers = []
    for e, (i, j) in enumerate(edges):
        if edge_cells[e, 1] != -1:
            markers.append(INTERIOR)
            continue
        markers.append(_boundary_marker(boundary_spec, (int(i), int(j)), vertices))
    mesh = PolygonalMesh(vertices, tuple(fixed_cells), edges, edge_cells,
                         tuple(markers), tuple(cell_edges))
    mesh.warnings = notes
    return mesh


def _boundary_marker(spec, key, vertices):
    if isinstance(spec, str):
        if spec not in (DIRICHLET, NEUMANN):
            raise MeshError(f"unknown boundary marker {spec!r}")
        return spec
    if callable(spec):
        m = spec(0.5 * (vertices[key[0]] + vertices[key[1]]))
        if m not in (DIRICHLET, NEUMANN):
            raise MeshError(f"boundary edge {list(key)} got invalid marker {m!r}")
        return m
    if key in spec:
        return spec[key]
    raise MeshError(f"boundary edge {list(key)} is not marked")


def element_geometry(mesh, cell_id):
    pts = mesh.cell_points(cell_id)
    area = _signed_area(pts)
    diff = pts[:, None, :] - pts[None, :, :]
    h = float(np.sqrt((diff ** 2).sum(-1)).max())
    lengths = np.hypot(*(np.roll(pts, -1, axis=0) - pts).T)
    return ElementGeometry(h=h, area=float(area), centroid=polygon_centroid(pts),
                           edge_lengths=lengths)


# generators ------------------------------------------------------------------

def _grid_vertices(n, domain):
    (x0, x1), (y0, y1) = domain
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def generate_quadrilateral_distorted(n, beta=0.2, seed=0, domain=((0.0, 1.0), (0.0, 1.0)),
                                     boundary=DIRICHLET):
    """n x n quadrilateral grid with interior vertices randomly displaced.

    Each interior vertex moves by a uniform sample in [-beta*dx, beta*dx] x
    [-beta*dy, beta*dy]; a displacement making an incident cell non-simple is
    redrawn, at most ``MAX_DISTORTION_RETRIES`` times.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= beta < 0.5:
        raise ValueError("distortion must lie in [0, 0.5)")
    verts = _grid_vertices(n, domain)
    cells = [(j * (n + 1) + i, j * (n + 1) + i + 1, (j + 1) * (n + 1) + i + 1,
              (j + 1) * (n + 1) + i) for j in range(n) for i in range(n)]
    if beta > 0:
        dx = (domain[0][1] - domain[0][0]) / n
        dy = (domain[1][1] - domain[1][0]) / n
        rng = np.random.default_rng(seed)
        for j in range(1, n):
            for i in range(1, n):
                v = j * (n + 1) + i
                incident = [(jj * n + ii) for jj in (j - 1, j) for ii in (i - 1, i)]
                base = verts[v].copy()
                for _ in range(MAX_DISTORTION_RETRIES):
                    verts[v] = base + rng.uniform(-beta, beta, 2) * (dx, dy)
                    if all(is_simple_polygon(verts[list(cells[c])]) for c in incident):
                        break
                else:
                    raise MeshError(f"could not distort vertex {v} keeping cells simple")
    return build_mesh(verts, cells, boundary)


def generate_triangular(n, domain=((0.0, 1.0), (0.0, 1.0)), boundary=DIRICHLET):
    """n x n grid, each square split along its (i,j)-(i+1,j+1) diagonal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    verts = _grid_vertices(n, domain)
    cells = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b, c, d = a + 1, a + n + 2, a + n + 1
            cells.append((a, b, c))
            cells.append((a, c, d))
    return build_mesh(verts, cells, boundary)


# I/O -------------------------------------------------------------------------

def mesh_to_dict(mesh):
    bnd = {DIRICHLET: [], NEUMANN: []}
    for e in mesh.boundary_edges():
        bnd[mesh.edge_markers[e]].append([int(v) for v in mesh.edges[e]])
    return {"vertices": mesh.vertices.tolist(),
            "cells": [list(c) for c in mesh.cells],
            "boundary": bnd}


def save_mesh(mesh, path):
    with open(path, "w") as fh:
        json.dump(mesh_to_dict(mesh), fh)


def load_mesh(path):
    """Read a mesh in the JSON exchange format.

    Format: ``{"vertices": [[x, y], ...], "cells": [[i0, i1, ...], ...],
    "boundary": {"dirichlet": [[i, j], ...], "neumann": [...]}}``.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MeshError(f"cannot parse mesh file {path}: {exc}") from exc
    try:
        vertices, cells = data["vertices"], data["cells"]
        boundary = data["boundary"]
    except (KeyError, TypeError) as exc:
        raise MeshError(f"mesh file {path} lacks key {exc}") from exc
    return build_mesh(vertices, cells, boundary)


# regularity ------------------------------------------------------------------

@dataclass
class RegularityReport:
    rho: float
    edge_ratio: np.ndarray
    ball_ratio: np.ndarray
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def chebyshev_radius(pts):
    """Radius of the largest disc inside the kernel of a CCW polygon.

    The kernel is the intersection of the inner half-planes of all edges, so
    this is an LP in (centre, radius).
    """
    t = np.roll(pts, -1, axis=0) - pts
    nin = np.column_stack([-t[:, 1], t[:, 0]]) / np.hypot(*t.T)[:, None]
    # nin . (x - a) >= r  <=>  -nin . x + r <= -nin . a
    A = np.column_stack([-nin, np.ones(len(pts))])
    b = -(nin * pts).sum(1)
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=A, b_ub=b,
                  bounds=[(None, None), (None, None), (0.0, None)], method="highs")
    return float(res.x[2]) if res.status == 0 else 0.0


def check_mesh_regularity(mesh, rho):
    """Per-cell check of the edge-length and star-shapedness ratios against rho."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    edge_ratio = np.empty(mesh.n_cells)
    ball_ratio = np.empty(mesh.n_cells)
    violations = []
    for c in range(mesh.n_cells):
        g = mesh.geometry(c)
        edge_ratio[c] = g.edge_lengths.min() / g.h
        ball_ratio[c] = chebyshev_radius(mesh.cell_points(c)) / g.h
        if edge_ratio[c] < rho:
            violations.append((c, f"edge ratio {edge_ratio[c]:.4g} < {rho}"))
        if ball_ratio[c] < rho:
            violations.append((c, f"star-shaped ball ratio {ball_ratio[c]:.4g} < {rho}"))
    return RegularityReport(rho, edge_ratio, ball_ratio, violations)
