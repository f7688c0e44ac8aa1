"""Regenerate the Voronoi mesh fixtures (Lloyd-smoothed, unit square).

    python tests/data/make_voronoi.py
"""
import json
import pathlib

import numpy as np
from scipy.spatial import Voronoi

HERE = pathlib.Path(__file__).resolve().parent


def voronoi_cells(seeds):
    pts = np.vstack([seeds,
                     np.column_stack([-seeds[:, 0], seeds[:, 1]]),
                     np.column_stack([2 - seeds[:, 0], seeds[:, 1]]),
                     np.column_stack([seeds[:, 0], -seeds[:, 1]]),
                     np.column_stack([seeds[:, 0], 2 - seeds[:, 1]])])
    vor = Voronoi(pts)
    cells = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        poly = vor.vertices[region]
        c = poly.mean(axis=0)
        order = np.argsort(np.arctan2(poly[:, 1] - c[1], poly[:, 0] - c[0]))
        cells.append(poly[order])
    return cells


def lloyd(seeds, iters):
    for _ in range(iters):
        new = []
        for poly in voronoi_cells(seeds):
            x, y = poly[:, 0], poly[:, 1]
            xs, ys = np.roll(x, -1), np.roll(y, -1)
            cr = x * ys - xs * y
            a = cr.sum() / 2
            new.append([((x + xs) * cr).sum() / (6 * a), ((y + ys) * cr).sum() / (6 * a)])
        seeds = np.array(new)
    return seeds


def build(n_seeds, seed, iters=30, tol=1e-9):
    rng = np.random.default_rng(seed)
    seeds = lloyd(rng.random((n_seeds, 2)), iters)
    vertices, cells = [], []
    for poly in voronoi_cells(seeds):
        poly = np.clip(np.where(np.abs(poly) < tol, 0.0, poly), 0.0, 1.0)
        poly = np.where(np.abs(poly - 1) < tol, 1.0, poly)
        ids = []
        for p in poly:
            for j, q in enumerate(vertices):
                if abs(p[0] - q[0]) < tol and abs(p[1] - q[1]) < tol:
                    break
            else:
                vertices.append([float(p[0]), float(p[1])])
                j = len(vertices) - 1
            if j not in ids:
                ids.append(j)
        cells.append(ids)
    v = np.array(vertices)
    dirichlet = set()
    for cell in cells:
        for a, b in zip(cell, cell[1:] + cell[:1]):
            mid = 0.5 * (v[a] + v[b])
            on = (min(mid[0], mid[1]) < tol) or (max(mid[0], mid[1]) > 1 - tol)
            if on:
                dirichlet.add((min(a, b), max(a, b)))
    return {"vertices": vertices, "cells": cells,
            "boundary": {"dirichlet": [list(e) for e in sorted(dirichlet)], "neumann": []}}


if __name__ == "__main__":
    data = build(40, seed=7)
    for target in (HERE / "voronoi_40.json",
                   HERE.parents[1] / "src" / "vemstokes" / "data" / "voronoi_40.json"):
        target.write_text(json.dumps(data))
        print("wrote", target, len(data["cells"]), "cells")
