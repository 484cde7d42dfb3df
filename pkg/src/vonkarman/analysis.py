"""Manufactured solutions, error norms, convergence studies and comparisons."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import GlobalSystem, ProblemSpec, assemble
from .bezier import evaluate_batch
from .mesh import SplitKind, Triangulation, refine_uniform, split
from .quadrature import quadrature_rule
from .solver import NewtonState, SolveOptions, newton_solve, solve_mixed
from .spline import SplineField, SplineSpace, build_space

# -- exact fields --------------------------------------------------------------

Factor = Callable[[np.ndarray, int], np.ndarray]


def polynomial_factor(coeffs) -> Factor:
    """1D polynomial (ascending coefficients) with exact derivatives."""
    p = np.polynomial.Polynomial(coeffs)

    def f(x, k):
        return p.deriv(k)(x) if k else p(x)
    return f


def sine_factor(omega: float) -> Factor:
    """``sin(omega x)``; the k-th derivative is ``omega^k sin(omega x + k pi/2)``."""
    def f(x, k):
        return omega**k * np.sin(omega * np.asarray(x, dtype=float) + k * np.pi / 2)
    return f


@dataclass(frozen=True)
class ExactField:
    """Sum of separable terms ``coef * fx(x) * fy(y)`` with analytic derivatives."""

    terms: tuple  # of (coef, fx, fy)

    def d(self, a: int, b: int, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for c, fx, fy in self.terms:
            out = out + c * fx(x, a) * fy(y, b)
        return out

    def __call__(self, x, y):
        return self.d(0, 0, x, y)

    def grad(self, x, y) -> np.ndarray:
        return np.stack([self.d(1, 0, x, y), self.d(0, 1, x, y)], axis=-1)

    def hess(self, x, y) -> np.ndarray:
        """Stacked ``(xx, yy, xy)``."""
        return np.stack([self.d(2, 0, x, y), self.d(0, 2, x, y), self.d(1, 1, x, y)], axis=-1)

    def bilaplacian(self, x, y) -> np.ndarray:
        return self.d(4, 0, x, y) + 2 * self.d(2, 2, x, y) + self.d(0, 4, x, y)

    def scaled(self, s: float) -> "ExactField":
        return ExactField(tuple((s * c, fx, fy) for c, fx, fy in self.terms))


ZERO = ExactField(())


def _fd_check(fld: ExactField, name: str, rng: np.random.Generator, h: float = 1e-5):
    pts = rng.uniform(0.1, 0.9, size=(4, 2))
    for a in range(4):
        for b in range(4 - a):
            for da, db in ((1, 0), (0, 1)):
                x, y = pts[:, 0], pts[:, 1]
                fd = (fld.d(a, b, x + da * h, y + db * h) - fld.d(a, b, x - da * h, y - db * h)) / (2 * h)
                exact = fld.d(a + da, b + db, x, y)
                scale = 1.0 + np.max(np.abs(exact))
                if np.max(np.abs(fd - exact)) > 1e-4 * scale:
                    raise ValueError(f"derivative ({a + da}, {b + db}) of {name} is inconsistent with its values")


@dataclass(frozen=True)
class ExactSolution:
    u: ExactField
    v: ExactField

    def __post_init__(self):
        rng = np.random.default_rng(12345)
        _fd_check(self.u, "u", rng)
        _fd_check(self.v, "v", rng)


def benchmark_solution() -> ExactSolution:
    """u = x^3 (1-x)^3 y^3 (1-y)^3, v = sin(pi x) sin(pi y) on the unit square."""
    # t^3 (1 - t)^3 = t^3 - 3 t^4 + 3 t^5 - t^6
    p = polynomial_factor([0, 0, 0, 1, -3, 3, -1])
    s = sine_factor(np.pi)
    return ExactSolution(u=ExactField(((1.0, p, p),)), v=ExactField(((1.0, s, s),)))


def bracket(a: ExactField, b: ExactField, x, y) -> np.ndarray:
    """``[a, b] = a_xx b_yy + a_yy b_xx - 2 a_xy b_xy``."""
    ha, hb = a.hess(x, y), b.hess(x, y)
    return ha[..., 0] * hb[..., 1] + ha[..., 1] * hb[..., 0] - 2 * ha[..., 2] * hb[..., 2]


def manufactured_forcing(exact: ExactSolution):
    """``f = bilap(u) - [u, v]`` and ``g = bilap(v) + [u, u] / 2``."""
    u, v = exact.u, exact.v

    def f(x, y):
        return u.bilaplacian(x, y) - bracket(u, v, x, y)

    def g(x, y):
        return v.bilaplacian(x, y) + 0.5 * bracket(u, u, x, y)
    return f, g


# -- norms ---------------------------------------------------------------------

@dataclass(frozen=True)
class Norms:
    L2: float
    H1: float
    H2: float

    def __iter__(self):
        return iter((self.L2, self.H1, self.H2))


def _derivs(obj, space: SplineSpace, batch, x):
    """Value, gradient and Hessian of a field or exact function at quadrature points."""
    if obj is None:
        z = np.zeros(x.shape[:-1])
        return z, np.zeros(x.shape), np.zeros(x.shape[:-1] + (3,))
    if isinstance(obj, SplineField):
        b = obj.ordinates()[space.table.ids]
        return (np.einsum("eqn,en->eq", batch.values, b),
                np.einsum("eqnc,en->eqc", batch.grad, b),
                np.einsum("eqnc,en->eqc", batch.hess, b))
    X, Y = x[..., 0], x[..., 1]
    return obj(X, Y), obj.grad(X, Y), obj.hess(X, Y)


def error_norms(approx, exact=None, space: SplineSpace | None = None,
                exactness: int | None = None) -> Norms:
    """L2 norm and H1/H2 seminorms of ``approx - exact`` (element-wise quadrature).

    Either argument may be a ``SplineField``, an ``ExactField`` or ``None``
    (zero).  The H2 seminorm is the full Hessian one (xx^2 + yy^2 + 2 xy^2),
    taken element-wise.  ``space`` supplies the integration mesh when neither
    argument is a spline field.
    """
    if space is None:
        for obj in (approx, exact):
            if isinstance(obj, SplineField):
                space = obj.space
                break
        else:
            raise ValueError("an integration space is required")
    if exactness is None:
        # the exact part is not polynomial, so integrate well past 2 * degree
        exactness = max(2 * space.degree + 8, 20) + (2 if space.is_rational else 0)
    rule = quadrature_rule(exactness)
    batch = evaluate_batch(space.degree, space.element_nodes, space.element_weights, rule.points)
    dx = batch.jac_det * rule.weights[None, :]
    a = _derivs(approx, space, batch, batch.x)
    b = _derivs(exact, space, batch, batch.x)
    e0, e1, e2 = (p - q for p, q in zip(a, b))
    L2 = math.sqrt(max(float(np.sum(dx * e0**2)), 0.0))
    H1 = math.sqrt(max(float(np.sum(dx[..., None] * e1**2)), 0.0))
    H2 = math.sqrt(max(float(np.sum(dx[..., None] * e2**2 * np.array([1.0, 1.0, 2.0]))), 0.0))
    return Norms(L2, H1, H2)


# -- solving on a mesh ---------------------------------------------------------

FORMULATIONS = ("c1", "mixed")


@dataclass
class Solution:
    space: SplineSpace
    system: GlobalSystem
    state: NewtonState
    formulation: str

    def field(self, name: str = "u") -> SplineField:
        return SplineField(self.space, self.system.T @ self.state.fields[name])

    @property
    def n_fields(self) -> int:
        return len(self.state.fields)

    @property
    def n_dofs(self) -> int:
        """Free coefficients over all unknown fields (before boundary elimination)."""
        return self.n_fields * self.space.n_free


def make_space(t: Triangulation, degree: int, split_kind, formulation: str) -> SplineSpace:
    if formulation == "c1":
        return build_space(split(t, split_kind), degree, 1)
    if formulation == "mixed":
        return build_space(split(t, SplitKind.NONE), degree, 0)
    raise ValueError(f"unknown formulation {formulation!r}")


def solve_on(t: Triangulation, degree: int, split_kind, formulation: str, problem: ProblemSpec,
             options: SolveOptions | None = None, threads: int = 1,
             exactness: int | None = None) -> Solution:
    space = make_space(t, degree, split_kind, formulation)
    mixed = formulation == "mixed"
    system = assemble(space, problem, exactness=exactness, threads=threads, mixed=mixed)
    state = solve_mixed(system, options) if mixed else newton_solve(system, options)
    return Solution(space, system, state, formulation)


# -- convergence ----------------------------------------------------------------

NORMS = ("L2", "H1", "H2")


@dataclass
class LevelResult:
    level: int
    h: float
    n_free: int
    n_dofs: int
    L2: float
    H1: float
    H2: float
    iterations: int


def pairwise_rates(h, e) -> list[float]:
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    return [float(np.log(e[i] / e[i + 1]) / np.log(h[i] / h[i + 1])) for i in range(len(e) - 1)]


def ls_slope(h, e, last: int = 3) -> float:
    """Least-squares slope of log e against log h over the last ``last`` points."""
    h = np.asarray(h, dtype=float)[-last:]
    e = np.asarray(e, dtype=float)[-last:]
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


@dataclass
class ErrorReport:
    degree: int
    split: str
    formulation: str
    levels: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.levels], dtype=float)

    def rates(self, norm: str) -> list[float]:
        return pairwise_rates(self.column("h"), self.column(norm))

    def slope(self, norm: str, last: int = 3) -> float:
        return ls_slope(self.column("h"), self.column(norm), last)


def convergence_study(domain: Triangulation, degree: int, split_kind="ps", formulation: str = "c1",
                      levels: int = 4, start_level: int = 0, exact: ExactSolution | None = None,
                      options: SolveOptions | None = None, threads: int = 1,
                      exactness: int | None = None) -> ErrorReport:
    """Solve the manufactured problem on ``levels`` refinements and record u errors."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    exact = exact or benchmark_solution()
    f, g = manufactured_forcing(exact)
    problem = ProblemSpec(f=f, g=g)
    report = ErrorReport(degree, SplitKind(split_kind).value if formulation == "c1" else "none", formulation)
    t = domain
    for _ in range(start_level):
        t = refine_uniform(t)
    for lev in range(start_level, start_level + levels):
        sol = solve_on(t, degree, split_kind, formulation, problem, options, threads, exactness)
        n = error_norms(sol.field("u"), exact.u)
        report.levels.append(LevelResult(lev, t.max_edge_length(), sol.space.n_free, sol.n_dofs,
                                         n.L2, n.H1, n.H2, sol.state.iterations))
        t = refine_uniform(t)
    return report


def dofs_at_error(report: ErrorReport, target: float, norm: str = "H1") -> float:
    """Unknown count reaching ``target`` error, by log-log interpolation between levels."""
    n = report.column("n_dofs")
    e = report.column(norm)
    le, ln = np.log(e), np.log(n)
    order = np.argsort(le)
    if not (le.min() <= np.log(target) <= le.max()):
        raise ValueError(f"target error {target:g} outside the computed range "
                         f"[{e.min():.3g}, {e.max():.3g}]")
    return float(np.exp(np.interp(np.log(target), le[order], ln[order])))


# -- sampling and comparisons -------------------------------------------------

def lattice(m: int) -> np.ndarray:
    """Reference points (s, t) of the order-``m`` barycentric lattice."""
    pts = [(j / m, k / m) for i in range(m, -1, -1) for j in range(m - i, -1, -1) for k in [m - i - j]]
    return np.array(pts, dtype=float)


def sample_field(field: SplineField, m: int = 4, extra: SplineField | None = None):
    """Physical points and values on a per-element barycentric lattice."""
    space = field.space
    st = lattice(m)
    batch = evaluate_batch(space.degree, space.element_nodes, space.element_weights, st, check=False)
    ids = space.table.ids
    vals = [np.einsum("eqn,en->eq", batch.values, field.ordinates()[ids]).ravel()]
    if extra is not None:
        vals.append(np.einsum("eqn,en->eq", batch.values, extra.ordinates()[ids]).ravel())
    return batch.x.reshape(-1, 2), vals


def max_value(field: SplineField, m: int = 4) -> float:
    _, (vals,) = sample_field(field, m)
    return float(np.max(vals))


@dataclass
class CompareResult:
    max_u_mixed: float
    max_u_c1: float
    levels_mixed: int
    levels_c1: int
    history_mixed: list
    history_c1: list
    mixed: Solution
    c1: Solution

    @property
    def ratio(self) -> float:
        return self.max_u_mixed / self.max_u_c1


def mesh_independent_max(t: Triangulation, degree: int, split_kind, formulation: str,
                         problem: ProblemSpec, tol: float = 0.01, max_levels: int = 6,
                         start_level: int = 0, options=None, threads: int = 1):
    """Refine until the sampled maximum of u changes by less than ``tol`` (relative)."""
    for _ in range(start_level):
        t = refine_uniform(t)
    history = []
    sol = None
    for lev in range(start_level, start_level + max_levels):
        sol = solve_on(t, degree, split_kind, formulation, problem, options, threads)
        history.append(max_value(sol.field("u")))
        if len(history) > 1 and abs(history[-1] - history[-2]) < tol * abs(history[-1]):
            return history[-1], lev, history, sol
        t = refine_uniform(t)
    raise RuntimeError(f"maximum of u did not settle to {tol:.0%} within {max_levels} levels: {history}")


def reentrant_compare(domain: Triangulation, degree: int = 2, split_kind="ps",
                      mixed_degree: int | None = None, tol: float = 0.01, max_levels: int = 6,
                      start_level: int = 1, options=None, threads: int = 1) -> CompareResult:
    """Maximum of u for the mixed and the direct formulation with f = 1, g = 0."""
    problem = ProblemSpec(f=lambda x, y: np.ones_like(x))
    mm, lm, hm, sm = mesh_independent_max(domain, mixed_degree or degree, split_kind, "mixed",
                                          problem, tol, max_levels, start_level, options, threads)
    mc, lc, hc, sc = mesh_independent_max(domain, degree, split_kind, "c1",
                                          problem, tol, max_levels, start_level, options, threads)
    return CompareResult(mm, mc, lm, lc, hm, hc, sm, sc)
