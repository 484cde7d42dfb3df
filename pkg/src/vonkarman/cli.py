"""Command-line front end: ``solve``, ``converge`` and ``compare``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import report
from .analysis import (benchmark_solution, convergence_study, manufactured_forcing, reentrant_compare,
                       solve_on)
from .assembly import ProblemSpec
from .domains import DOMAINS, get_domain
from .mesh import Triangulation, load_mesh, refine_uniform
from .solver import SolveOptions


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    mesh: str
    degree: int = 3
    split: str = "ps"
    formulation: str = "c1"
    levels: int = 1
    start_level: int = 0
    forcing: str = "benchmark"
    tol_rel: float = 1e-10
    tol_abs: float = 1e-12
    max_iter: int = 25
    quadrature: int | None = None
    out: str = "."
    svg: bool = False
    threads: int = 1
    sample_order: int = 3
    tol_change: float = 0.01
    max_levels: int = 6

    def validate(self):
        if self.degree not in (2, 3):
            raise ConfigError("degree must be 2 or 3")
        if self.split not in ("ps", "ct"):
            raise ConfigError("split must be ps or ct")
        if self.formulation not in ("c1", "mixed"):
            raise ConfigError("formulation must be c1 or mixed")
        if self.degree == 2 and self.split != "ps" and self.formulation == "c1":
            raise ConfigError("degree 2 requires the ps split")
        if self.levels < 1 or self.max_levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.start_level < 0:
            raise ConfigError("start level must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.forcing not in ("benchmark", "unit", "zero"):
            raise ConfigError("forcing must be benchmark, unit or zero")
        if self.mesh not in DOMAINS and not Path(self.mesh).is_file():
            raise ConfigError(f"mesh {self.mesh!r} is neither a file nor a built-in domain "
                              f"({', '.join(DOMAINS)})")
        if self.quadrature is not None and self.quadrature < 1:
            raise ConfigError("quadrature exactness must be positive")
        return self

    def options(self) -> SolveOptions:
        return SolveOptions(tol_rel=self.tol_rel, tol_abs=self.tol_abs, max_iter=self.max_iter)


def load_domain(spec: str) -> Triangulation:
    if spec in DOMAINS and not Path(spec).is_file():
        return get_domain(spec)
    return load_mesh(Path(spec).read_text(encoding="utf-8"))


def _problem(forcing: str) -> ProblemSpec:
    if forcing == "benchmark":
        f, g = manufactured_forcing(benchmark_solution())
        return ProblemSpec(f=f, g=g)
    if forcing == "unit":
        return ProblemSpec(f=lambda x, y: np.ones_like(x))
    return ProblemSpec()


def run(cfg: RunConfig) -> dict:
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t = load_domain(cfg.mesh)
    written = []
    if cfg.subcommand == "solve":
        for _ in range(cfg.start_level):
            t = refine_uniform(t)
        sol = solve_on(t, cfg.degree, cfg.split, cfg.formulation, _problem(cfg.forcing), cfg.options(),
                       cfg.threads, cfg.quadrature)
        written.append(report.write_solution_csv(out / "solution.csv", sol, cfg.sample_order))
        summary = {"n_free": sol.space.n_free, "iterations": sol.state.iterations,
                   "residual": sol.state.residual_norms[-1]}
    elif cfg.subcommand == "converge":
        rep = convergence_study(t, cfg.degree, cfg.split, cfg.formulation, cfg.levels, cfg.start_level,
                                options=cfg.options(), threads=cfg.threads, exactness=cfg.quadrature)
        written.append(report.write_errors_csv(out / "errors.csv", rep))
        written.append(report.write_rates_csv(out / "rates.csv", rep))
        if cfg.svg:
            p = out / "convergence.svg"
            p.write_text(report.convergence_svg(rep))
            written.append(p)
        summary = {nm: rep.slope(nm, min(3, len(rep.levels))) for nm in ("L2", "H1", "H2")} \
            if len(rep.levels) >= 2 else {}
    elif cfg.subcommand == "compare":
        res = reentrant_compare(t, cfg.degree, cfg.split, tol=cfg.tol_change, max_levels=cfg.max_levels,
                                start_level=cfg.start_level, options=cfg.options(), threads=cfg.threads)
        written.append(report.write_compare_csv(out / "compare.csv", res))
        written.append(report.write_solution_csv(out / "solution.csv", res.c1, cfg.sample_order))
        summary = {"max_u_mixed": res.max_u_mixed, "max_u_c1": res.max_u_c1, "ratio": res.ratio}
    else:
        raise ConfigError(f"unknown subcommand {cfg.subcommand!r}")
    return {"files": [str(p) for p in written], **summary}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vonkarman", description="von Karman plates with C1 triangular splines")
    sub = p.add_subparsers(dest="subcommand", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mesh", required=True, help="mesh file or built-in domain: " + ", ".join(DOMAINS))
    common.add_argument("--degree", type=int, default=3)
    common.add_argument("--split", default="ps", choices=["ps", "ct"])
    common.add_argument("--start-level", type=int, default=None,
                        help="uniform refinements before the first solve (default 0, compare 1)")
    common.add_argument("--tol-rel", type=float, default=1e-10)
    common.add_argument("--tol-abs", type=float, default=1e-12)
    common.add_argument("--max-iter", type=int, default=25)
    common.add_argument("--quadrature", type=int, default=None, help="quadrature exactness override")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--sample-order", type=int, default=3, help="per-element lattice order for solution.csv")
    common.add_argument("--out", default=".")

    s = sub.add_parser("solve", parents=[common], help="solve once")
    s.add_argument("--formulation", default="c1", choices=["c1", "mixed"])
    s.add_argument("--forcing", default="benchmark", choices=["benchmark", "unit", "zero"])

    c = sub.add_parser("converge", parents=[common], help="manufactured-solution convergence study")
    c.add_argument("--formulation", default="c1", choices=["c1", "mixed"])
    c.add_argument("--levels", type=int, default=4)
    c.add_argument("--svg", action="store_true", help="also write convergence.svg")

    m = sub.add_parser("compare", parents=[common], help="mixed vs C1 maximum deflection, f = 1")
    m.add_argument("--tol-change", type=float, default=0.01, help="mesh-independence threshold")
    m.add_argument("--max-levels", type=int, default=6)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.start_level is None:
        # parent parsers share argument objects, so the default is resolved here
        args.start_level = 1 if args.subcommand == "compare" else 0
    cfg = RunConfig(**vars(args))
    try:
        summary = run(cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(summary, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
