"""Newton solvers for the direct (C1) and mixed (C0) von Karman systems.

Direct unknowns ``Z = (u, v)``; residual

    R1 = K u + B(u, v) + B(v, u) - F
    R2 = K v - B(u, u) - G

with ``B(a, b)_m = a^T B^m b``.  Mixed unknowns ``Z = (u, ubar, v, vbar)``
with ``A`` the Laplace stiffness and ``M`` the mass matrix:

    R1 = A u + M ubar
    R2 = A ubar - B(u, v) - B(v, u) + F
    R3 = A v + M vbar
    R4 = A vbar + B(u, u) + G
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import GlobalSystem


class SolverError(RuntimeError):
    pass


class SingularJacobianError(SolverError):
    pass


class DivergenceError(SolverError):
    pass


class MaxIterationsError(SolverError):
    pass


@dataclass
class SolveOptions:
    tol_rel: float = 1e-10
    tol_abs: float = 1e-12
    max_iter: int = 25
    linear_solver: str = "direct"       # "direct" or "iterative"
    continuation_steps: int = 2

    def __post_init__(self):
        if not (self.tol_rel > 0 and self.tol_abs > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.linear_solver not in ("direct", "iterative"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


@dataclass
class NewtonState:
    fields: dict                         # name -> reduced coefficient vector
    residual_norms: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    load_factor: float = 1.0

    @property
    def u(self) -> np.ndarray:
        return self.fields["u"]

    @property
    def v(self) -> np.ndarray:
        return self.fields["v"]

    @property
    def Z(self) -> np.ndarray:
        return np.concatenate(list(self.fields.values()))


# -- direct formulation -------------------------------------------------------

def _split(system: GlobalSystem, Z: np.ndarray, k: int) -> list[np.ndarray]:
    n = system.n
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (k * n,):
        raise ValueError(f"state has shape {Z.shape}, expected ({k * n},)")
    return [Z[i * n:(i + 1) * n] for i in range(k)]


def residual(system: GlobalSystem, Z: np.ndarray, load: float = 1.0) -> np.ndarray:
    u, v = _split(system, Z, 2)
    K = system.K
    r1 = K @ u + system.contract(u, v) + system.contract(v, u) - load * system.F
    r2 = K @ v - system.contract(u, u) - load * system.G
    return np.concatenate([r1, r2])


def jacobian(system: GlobalSystem, Z: np.ndarray) -> sp.csr_matrix:
    u, v = _split(system, Z, 2)
    K = system.K
    Bu = system.tangent(u)
    Bv = system.tangent(v)
    return sp.bmat([[K + Bv, Bu], [-Bu, K]], format="csr")


def mixed_residual(system: GlobalSystem, Z: np.ndarray, load: float = 1.0) -> np.ndarray:
    u, ub, v, vb = _split(system, Z, 4)
    A, M = system.K, system.M
    c = system.contract
    return np.concatenate([
        A @ u + M @ ub,
        A @ ub - c(u, v) - c(v, u) + load * system.F,
        A @ v + M @ vb,
        A @ vb + c(u, u) + load * system.G,
    ])


def mixed_jacobian(system: GlobalSystem, Z: np.ndarray) -> sp.csr_matrix:
    u, ub, v, vb = _split(system, Z, 4)
    A, M = system.K, system.M
    Bu = system.tangent(u)
    Bv = system.tangent(v)
    return sp.bmat([[A, M, None, None],
                    [-Bv, A, -Bu, None],
                    [None, None, A, M],
                    [Bu, None, None, A]], format="csr")


# -- Newton driver -------------------------------------------------------------

def _linear_solve(J: sp.csr_matrix, rhs: np.ndarray, method: str) -> np.ndarray:
    if method == "iterative":
        x, info = spla.gmres(J, rhs, rtol=1e-13, atol=0.0, restart=200, maxiter=50)
        if info != 0:
            raise SolverError(f"GMRES did not converge (info={info})")
        return x
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            lu = spla.splu(J.tocsc())
        x = lu.solve(rhs)
    except (RuntimeError, spla.MatrixRankWarning) as exc:
        raise SingularJacobianError(f"singular Jacobian: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularJacobianError("singular Jacobian: non-finite Newton step")
    return x


def roundoff_floor(J: sp.csr_matrix, Z: np.ndarray, load_vec: np.ndarray) -> float:
    """Residual level below which floating point evaluation of R cannot certify progress."""
    return float(np.finfo(float).eps * np.linalg.norm(abs(J) @ np.abs(Z) + np.abs(load_vec)))


def _newton(res, jac, Z0, target, options: SolveOptions, load: float, load_vec: np.ndarray):
    Z = Z0.copy()
    norms = []
    rises = 0
    for it in range(options.max_iter + 1):
        R = res(Z, load)
        rn = float(np.linalg.norm(R))
        norms.append(rn)
        if not np.isfinite(rn):
            raise DivergenceError("residual became non-finite")
        if rn <= target:
            return Z, norms, it, True
        J = jac(Z)
        if rn <= roundoff_floor(J, Z, load * load_vec):
            return Z, norms, it, True
        if len(norms) > 1 and rn > norms[-2]:
            rises += 1
            if rises >= 3:
                raise DivergenceError(f"residual increased 3 consecutive times (now {rn:.3e})")
        else:
            rises = 0
        if it == options.max_iter:
            break
        Z = Z + _linear_solve(J, -R, options.linear_solver)
    raise MaxIterationsError(f"Newton did not converge in {options.max_iter} iterations "
                             f"(residual {norms[-1]:.3e}, target {target:.3e})")


def _load_vector(system: GlobalSystem, k: int) -> np.ndarray:
    z = np.zeros(system.n)
    if k == 2:
        return np.concatenate([system.F, system.G])
    return np.concatenate([z, system.F, z, system.G])


def _drive(system, res, jac, k, options, names):
    options = options or SolveOptions()
    n = system.n
    load_vec = _load_vector(system, k)
    load_norm = float(np.linalg.norm(load_vec))
    target = max(options.tol_abs, options.tol_rel * load_norm)
    Z0 = np.zeros(k * n)
    try:
        Z, norms, its, ok = _newton(res, jac, Z0, target, options, 1.0, load_vec)
        history, total = norms, its
    except (DivergenceError, MaxIterationsError):
        if options.continuation_steps < 2:
            raise
        Z, history, total = Z0, [], 0
        for s in np.linspace(0, 1, options.continuation_steps + 1)[1:]:
            Z, norms, its, ok = _newton(res, jac, Z, target, options, float(s), load_vec)
            history += norms
            total += its
    fields = {name: Z[i * n:(i + 1) * n].copy() for i, name in enumerate(names)}
    return NewtonState(fields=fields, residual_norms=history, iterations=total, converged=True)


def newton_solve(system: GlobalSystem, options: SolveOptions | None = None) -> NewtonState:
    """Solve the direct C1 system from a zero start (load continuation on failure)."""
    return _drive(system, lambda Z, s: residual(system, Z, s), lambda Z: jacobian(system, Z),
                  2, options, ("u", "v"))


def solve_mixed(system: GlobalSystem, options: SolveOptions | None = None) -> NewtonState:
    """Solve the four-field mixed system assembled with ``assemble(..., mixed=True)``."""
    if system.M is None:
        raise ValueError("system was not assembled for the mixed formulation")
    return _drive(system, lambda Z, s: mixed_residual(system, Z, s), lambda Z: mixed_jacobian(system, Z),
                  4, options, ("u", "ubar", "v", "vbar"))


def solve_linear_biharmonic(system: GlobalSystem) -> np.ndarray:
    """``K u = F`` (the small-load limit of the direct system)."""
    return _linear_solve(system.K.tocsr(), system.F, "direct")
