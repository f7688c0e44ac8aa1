"""Command-line entry point: ``vemstokes {solve,study,check}``."""
import argparse
import csv
import json
import logging
import pathlib
import sys
import traceback
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import mesh as meshmod
from .checks import run_checks, SUITES
from .law import CarreauYasuda
from .solve import FixedPointConfig, SolverError
from .space import SpaceError
from .verify import (ManufacturedCase, StudyResult, averaged_rate, evaluate, make_test1,
                     make_test2, mesh_family, solve_case)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
CASES = ("test1", "test2", "custom")


@dataclass
class RunConfig:
    command: str = "solve"
    case: str = "test1"
    r: float = 2.0
    delta: float = None
    alpha: float = None
    mesh: str = None
    mesh_file: str = None
    n: int = 8
    levels: list = field(default_factory=lambda: [4, 8, 16, 32])
    mesh_scale: int = None
    beta: float = 0.2
    k: int = 2
    stab: str = "s1"
    tol: float = 1e-8
    max_iter: int = 200
    seed: int = 0
    rho: float = None
    suites: list = None
    out: str = "out"

    def validate(self):
        if self.command not in ("solve", "study", "check"):
            raise ValueError(f"unknown command {self.command!r}")
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}")
        if not 1.0 < self.r <= 2.0:
            raise ValueError(f"r must lie in (1, 2], got {self.r}")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.stab not in ("s1", "s2"):
            raise ValueError("stab must be s1 or s2")
        if self.mesh not in (None, "quad", "tri", "file"):
            raise ValueError("mesh must be quad, tri or file")
        if self.mesh == "file" and not self.mesh_file:
            raise ValueError("--mesh file needs --mesh-file PATH")
        if self.command == "study" and self.mesh == "file":
            raise ValueError("a study needs a mesh generator, not a file")
        if self.command == "study" and len(self.levels) < 2:
            raise ValueError("a study needs at least two levels")
        if self.suites:
            unknown = set(self.suites) - set(SUITES)
            if unknown:
                raise ValueError(f"unknown check suites {sorted(unknown)}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="vemstokes", description="Divergence-free VEM for non-Newtonian Stokes flow.")
    p.add_argument("command", choices=("solve", "study", "check"))
    p.add_argument("--config", help="JSON file with option values; flags override it")
    p.add_argument("--case", choices=CASES)
    p.add_argument("--r", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mesh", choices=("quad", "tri", "file"))
    p.add_argument("--mesh-file", dest="mesh_file")
    p.add_argument("--n", type=int, help="cells per side for a single solve")
    p.add_argument("--levels", type=int, nargs="+", help="1/h values of a study")
    p.add_argument("--mesh-scale", dest="mesh_scale", type=int,
                   help="generator cells per side per unit of 1/h")
    p.add_argument("--beta", type=float, help="quad distortion")
    p.add_argument("--k", type=int)
    p.add_argument("--stab", choices=("s1", "s2"))
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rho", type=float, help="regularity threshold for the check command")
    p.add_argument("--suites", nargs="+", help=f"subset of {sorted(SUITES)}")
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def make_config(argv=None):
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        try:
            values.update(json.loads(pathlib.Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {args.config}: {exc}") from exc
    names = {f.name for f in fields(RunConfig)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    values["command"] = args.command
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg, args.verbose


# cases --------------------------------------------------------------------------

def _lid_case(cfg):
    """Lid-driven cavity on the unit square, no load; no exact solution."""
    law = CarreauYasuda(r=cfg.r, delta=1.0 if cfg.delta is None else cfg.delta,
                        alpha=2.0 if cfg.alpha is None else cfg.alpha)

    def zero2(x):
        return np.zeros((len(np.atleast_2d(x)), 2))

    def lid(x):
        x = np.atleast_2d(x)
        out = np.zeros((len(x), 2))
        out[:, 0] = np.where(x[:, 1] > 1 - 1e-12, 1.0, 0.0)
        return out

    def zero_t(x):
        return np.zeros((len(np.atleast_2d(x)), 2, 2))

    case = ManufacturedCase("custom_lid", law, lid, zero_t, zero_t,
                            lambda x: np.zeros((len(np.atleast_2d(x)), 2, 2, 2)),
                            lambda x: np.zeros(len(np.atleast_2d(x))), zero2, load=zero2)
    case.exact = False
    return case


def make_case(cfg):
    if cfg.case == "test1":
        return make_test1(cfg.r, 1.0 if cfg.delta is None else cfg.delta)
    if cfg.case == "test2":
        return make_test2(cfg.r)
    return _lid_case(cfg)


def _default_mesh(cfg):
    return cfg.mesh or ("tri" if cfg.case == "test2" else "quad")


def _scale(cfg):
    if cfg.mesh_scale is not None:
        return cfg.mesh_scale
    # Test 2 levels are 1/h of a unit-leg grid on the side-2 square
    return 2 if cfg.case == "test2" else 1


def _solver_config(cfg):
    return FixedPointConfig(tol_increment=cfg.tol, max_iter=cfg.max_iter, stab=cfg.stab)


# commands -----------------------------------------------------------------------

def _sample_points(disc, c):
    """Centroid plus points halfway to each vertex."""
    loc = disc.spaces[c]
    return np.vstack([loc.centroid[None], 0.5 * (loc.points + loc.centroid)])


def cmd_solve(cfg, out):
    case = make_case(cfg)
    kind = _default_mesh(cfg)
    if kind == "file":
        mesh = meshmod.load_mesh(cfg.mesh_file)
    else:
        mesh = mesh_family(kind, cfg.n * _scale(cfg), domain=case.domain, seed=cfg.seed,
                           boundary=case.boundary, beta=cfg.beta)
    fp = _solver_config(cfg)
    disc, problem, sol = solve_case(case, mesh, cfg.k, fp)
    with open(out / "solution.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "x", "y", "u1", "u2", "p"])
        for c in range(mesh.n_cells):
            loc = disc.spaces[c]
            x = _sample_points(disc, c)
            u = loc.eval_vector(loc.pi_zero @ disc.local_dofs(sol.u, c), x)
            p = loc.basis(cfg.k - 1).eval(x) @ disc.local_pressure(sol.p, c)
            for xi, ui, pi in zip(x, u, p):
                w.writerow([c, f"{xi[0]:.12g}", f"{xi[1]:.12g}", f"{ui[0]:.12g}",
                            f"{ui[1]:.12g}", f"{pi:.12g}"])
    summary = {"iterations": str(sol.log), "n_cells": mesh.n_cells,
               "stages": [{"r_eff": s.r_eff, "iterations": s.iterations,
                           "increments": s.increments, "residual": s.residual,
                           "converged": s.converged} for s in sol.log.stages]}
    if getattr(case, "exact", True):
        rep = evaluate(disc, problem, sol, case, cfg.n, fp)
        summary.update({"err_u": rep.err_u, "err_p": rep.err_p, "err_sigma": rep.err_sigma,
                        "div_ratio": rep.div_ratio})
        print(f"N1|N2 = {sol.log}   err_u = {rep.err_u:.4e}   err_p = {rep.err_p:.4e}   "
              f"err_sigma = {rep.err_sigma:.4e}   div = {rep.div_ratio:.2e}")
    else:
        from .verify import divergence_ratio
        summary["div_ratio"] = divergence_ratio(disc, sol.u)
        print(f"N1|N2 = {sol.log}   div = {summary['div_ratio']:.2e}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_study(cfg, out):
    case = make_case(cfg)
    if not getattr(case, "exact", True):
        raise ValueError("a study needs a case with an exact solution")
    kind = _default_mesh(cfg)
    fp = _solver_config(cfg)
    reports = []
    print(f"{'1/h':>5} {'err_u':>11} {'err_p':>11} {'err_sigma':>11} {'N1|N2':>7}")
    for L in cfg.levels:
        mesh = mesh_family(kind, L * _scale(cfg), domain=case.domain, seed=cfg.seed,
                           boundary=case.boundary, beta=cfg.beta)
        disc, problem, sol = solve_case(case, mesh, cfg.k, fp)
        rep = evaluate(disc, problem, sol, case, L, fp)
        reports.append(rep)
        print(f"{L:>5} {rep.err_u:11.4e} {rep.err_p:11.4e} {rep.err_sigma:11.4e} "
              f"{rep.iterations:>7}", flush=True)
        acr = {}
        if len(reports) > 1:
            hs = [1.0 / r.one_over_h for r in reports]
            acr = {q: averaged_rate([getattr(r, q) for r in reports], hs)
                   for q in ("err_u", "err_p", "err_sigma")}
        StudyResult(case.name, reports, acr).write(out)  # flush after every level
    print("a.c.r.  " + "  ".join(f"{q} {v:.4f}" for q, v in acr.items()))
    return EXIT_OK


def cmd_check(cfg, out):
    results = run_checks(seed=cfg.seed, suites=cfg.suites, rho=cfg.rho)
    lines = [r.line() for r in results]
    for r in results:
        if r.name == "mesh regularity" and not r.passed:
            for fam, rep in r.details.items():
                for v in rep.violations:
                    lines.append(f"  warning: {fam} {v}")
    print("\n".join(lines))
    (out / "check.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


COMMANDS = {"solve": cmd_solve, "study": cmd_study, "check": cmd_check}


def main(argv=None):
    try:
        cfg, verbose = make_config(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code
    except (ValueError, TypeError) as exc:
        print(f"vemstokes: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = pathlib.Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(asdict(cfg), indent=2))
    try:
        return COMMANDS[cfg.command](cfg, out)
    except (FileNotFoundError, meshmod.MeshError, ValueError) as exc:
        print(f"vemstokes: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, SpaceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        (out / "failure.txt").write_text(traceback.format_exc())
        print(f"vemstokes: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
