"""Element operators, global assembly and boundary elimination.

Element tensors are computed in vectorised batches (optionally split over a
thread pool in fixed-order chunks).  Global matrices are formed on the full
ordinate vector and reduced with ``P = C T``: ``C`` maps free spline
coefficients to ordinates and ``T`` eliminates the boundary constraints.

The trilinear form is kept as one dense ``n x n x n`` tensor per element,
``tri[e, i, j, m] = b(phi_i, phi_j, phi_m)`` with

    b(beta, gamma, phi) = 1/2 int cof(D^2 beta) grad(gamma) . grad(phi),

and is contracted on demand; no global cubic-size object is formed.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .bezier import BezierElement, evaluate_batch
from .quadrature import QuadratureRule, quadrature_rule
from .spline import SplineSpace

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]

DENSE_TRILINEAR_CAP = 250


def _zero(x, y):
    return np.zeros_like(x)


@dataclass
class ProblemSpec:
    """Forcing terms and boundary condition of a von Karman problem."""

    f: ScalarField = _zero
    g: ScalarField = _zero
    boundary: str = "value"          # "value" (u = 0), "clamped" (u = du/dn = 0) or "none"

    def __post_init__(self):
        if self.boundary not in ("value", "clamped", "none"):
            raise ValueError(f"unknown boundary condition {self.boundary!r}")


def default_exactness(space: SplineSpace) -> int:
    return 3 * space.degree + (2 if space.is_rational else 0)


# -- element kernels ----------------------------------------------------------

@dataclass
class ElementData:
    """Basis data at quadrature points for a batch of elements."""

    values: np.ndarray   # (E, Q, n)
    grad: np.ndarray     # (E, Q, n, 2)
    hess: np.ndarray     # (E, Q, n, 3)
    dx: np.ndarray       # (E, Q) quadrature weight times |J|
    x: np.ndarray        # (E, Q, 2)


def element_data(degree: int, nodes, weights, rule: QuadratureRule) -> ElementData:
    b = evaluate_batch(degree, nodes, weights, rule.points)
    return ElementData(b.values, b.grad, b.hess, b.jac_det * rule.weights[None, :], b.x)


_FROBENIUS = np.array([1.0, 1.0, 2.0])
_REDUCED = np.array([1.0, 1.0, 0.0])


def stiffness_kernel(data: ElementData, frobenius: bool = True) -> np.ndarray:
    c = _FROBENIUS if frobenius else _REDUCED
    return np.einsum("eq,eqic,eqjc,c->eij", data.dx, data.hess, data.hess, c, optimize=True)


def load_kernel(data: ElementData, f: ScalarField) -> np.ndarray:
    fx = np.asarray(f(data.x[..., 0], data.x[..., 1]), dtype=float)
    fx = np.broadcast_to(fx, data.dx.shape)
    return np.einsum("eq,eq,eqi->ei", data.dx, fx, data.values, optimize=True)


def mass_kernel(data: ElementData) -> np.ndarray:
    return np.einsum("eq,eqi,eqj->eij", data.dx, data.values, data.values, optimize=True)


def laplace_kernel(data: ElementData) -> np.ndarray:
    return np.einsum("eq,eqic,eqjc->eij", data.dx, data.grad, data.grad, optimize=True)


def trilinear_kernel(data: ElementData) -> np.ndarray:
    """``t[e, i, j, m] = b(phi_i, phi_j, phi_m)``."""
    H = data.hess
    G = data.grad
    hxx = H[..., 0] * data.dx[..., None]
    hyy = H[..., 1] * data.dx[..., None]
    hxy = H[..., 2] * data.dx[..., None]
    gx, gy = G[..., 0], G[..., 1]
    t = np.einsum("eqi,eqj,eqm->eijm", hyy, gx, gx, optimize=True)
    t += np.einsum("eqi,eqj,eqm->eijm", hxx, gy, gy, optimize=True)
    cross = np.einsum("eqi,eqj,eqm->eijm", hxy, gx, gy, optimize=True)
    t -= cross
    t -= cross.transpose(0, 1, 3, 2)
    # symmetric in (j, m) bit for bit
    return 0.25 * (t + t.transpose(0, 1, 3, 2))


def _single(el: BezierElement, rule: QuadratureRule | None) -> ElementData:
    if rule is None:
        rule = quadrature_rule(3 * el.degree + (0 if el.unit_weights else 2))
    return element_data(el.degree, el.nodes[None], el.weights[None], rule)


def element_stiffness(el: BezierElement, rule: QuadratureRule | None = None,
                      frobenius: bool = True) -> np.ndarray:
    """``K_e[i, j] = int D^2 phi_i : D^2 phi_j`` (or only xx/yy products when not ``frobenius``)."""
    return stiffness_kernel(_single(el, rule), frobenius)[0]


def element_load(el: BezierElement, f: ScalarField, rule: QuadratureRule | None = None) -> np.ndarray:
    return load_kernel(_single(el, rule), f)[0]


def element_trilinear(el: BezierElement, rule: QuadratureRule | None = None) -> np.ndarray:
    """Element tensor indexed ``[i, j, m]`` = b(phi_i, phi_j, phi_m)."""
    return trilinear_kernel(_single(el, rule))[0]


# -- global assembly ----------------------------------------------------------

def _scatter_matrix(ids: np.ndarray, Ke: np.ndarray, n: int) -> sp.csr_matrix:
    E, k = ids.shape
    rows = np.broadcast_to(ids[:, :, None], (E, k, k)).ravel()
    cols = np.broadcast_to(ids[:, None, :], (E, k, k)).ravel()
    return sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))


def _scatter_vector(ids: np.ndarray, Fe: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(ids.ravel(), weights=Fe.ravel(), minlength=n)


@dataclass
class TrilinearStore:
    ids: np.ndarray      # (E, n) ordinate ids
    tensors: np.ndarray  # (E, n, n, n) indexed [e, i, j, m]
    n_points: int

    def contract_full(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Ordinate-space vector ``r_m = sum_ij t_ijm U_i V_j``."""
        r = np.einsum("eijm,ei,ej->em", self.tensors, U[self.ids], V[self.ids], optimize=True)
        return _scatter_vector(self.ids, r, self.n_points)

    def tangent_full(self, W: np.ndarray) -> sp.csr_matrix:
        """Ordinate-space matrix ``M[m, i] = sum_j (t_ijm + t_jim) W_j``."""
        We = W[self.ids]
        Me = np.einsum("eijm,ej->emi", self.tensors, We, optimize=True)
        Me += np.einsum("ejim,ej->emi", self.tensors, We, optimize=True)
        return _scatter_matrix(self.ids, Me, self.n_points)


@dataclass
class GlobalSystem:
    """Reduced operators of one formulation on one spline space."""

    space: SplineSpace
    K: sp.csr_matrix                  # plate stiffness (C1) or Laplace stiffness (mixed)
    F: np.ndarray
    G: np.ndarray
    tri_store: TrilinearStore
    P: sp.csr_matrix                  # ordinates <- reduced unknowns
    T: sp.csr_matrix                  # free coefficients <- reduced unknowns
    bc_mask: np.ndarray               # free coefficients fixed to zero by the boundary condition
    M: sp.csr_matrix | None = None    # mass matrix (mixed formulation)
    extra_constraints: int = 0
    PT: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        self.PT = self.P.T.tocsr()

    @property
    def n(self) -> int:
        return self.P.shape[1]

    def free_coefficients(self, z: np.ndarray) -> np.ndarray:
        return self.T @ z

    def contract(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Reduced ``(u^T B^m v)_m``."""
        return self.PT @ self.tri_store.contract_full(self.P @ u, self.P @ v)

    def tangent(self, w: np.ndarray) -> sp.csr_matrix:
        """Reduced ``Bw[m, i] = sum_j (B^m_ij + B^m_ji) w_j``."""
        return (self.PT @ self.tri_store.tangent_full(self.P @ w) @ self.P).tocsr()

    def dense_trilinear(self, cap: int = DENSE_TRILINEAR_CAP) -> np.ndarray:
        """Dense reduced tensor ``B[m, i, j]`` (test oracle; refused above ``cap`` unknowns)."""
        n = self.n
        if n > cap:
            raise MemoryError(f"dense trilinear tensor of size {n}^3 exceeds the cap ({cap}^3)")
        P = self.P.toarray()
        Pe = P[self.tri_store.ids]                       # (E, k, n)
        return np.einsum("eijm,eia,ejb,emc->cab", self.tri_store.tensors, Pe, Pe, Pe, optimize=True)


CHUNK_ELEMENTS = 2048


def _chunks(E: int, threads: int) -> list[slice]:
    """Fixed-order element ranges: at least one per thread, none above ``CHUNK_ELEMENTS``."""
    n = max(threads if E >= 2 * threads else 1, -(-E // CHUNK_ELEMENTS), 1)
    bounds = np.linspace(0, E, n + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def element_tensors(space: SplineSpace, problem: ProblemSpec, exactness: int | None = None,
                    threads: int = 1, mixed: bool = False, frobenius: bool = True) -> dict:
    """All element operators, computed in ordered chunks (optionally threaded)."""
    rule = quadrature_rule(exactness if exactness is not None else default_exactness(space))
    nodes = space.element_nodes
    weights = space.element_weights
    d = space.degree

    def work(sl):
        data = element_data(d, nodes[sl], weights[sl], rule)
        out = {"F": load_kernel(data, problem.f), "G": load_kernel(data, problem.g),
               "tri": trilinear_kernel(data)}
        if mixed:
            out["A"] = laplace_kernel(data)
            out["M"] = mass_kernel(data)
        else:
            out["K"] = stiffness_kernel(data, frobenius)
        return out

    parts = _chunks(space.n_elements, threads)
    if threads <= 1:
        results = [work(p) for p in parts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, parts))
    return {k: np.concatenate([r[k] for r in results]) for k in results[0]}


def boundary_points(space: SplineSpace, boundary: str = "value") -> np.ndarray:
    """Ordinate ids that must vanish for the boundary condition."""
    mask = space.table.on_boundary.copy()
    if boundary == "clamped":
        from .bezier import multi_indices
        I = multi_indices(space.degree)
        for e, l in space.micro.boundary_edges.tolist():
            mask[space.table.ids[e, I[:, l] == 1]] = True
    return np.flatnonzero(mask)


def apply_bc(space: SplineSpace, boundary: str = "value") -> tuple[sp.csr_matrix, np.ndarray, int]:
    """Transform ``T`` (free -> reduced) enforcing zero ordinates on the boundary.

    Free boundary coefficients are dropped.  Dependent boundary ordinates give
    extra homogeneous equations on the remaining coefficients, eliminated by a
    pivoted QR on the (small) set of coefficients they involve.
    Returns ``(T, bc_mask, n_extra)``.
    """
    nf = space.n_free
    if boundary == "none":
        return sp.identity(nf, format="csr"), np.zeros(nf, dtype=bool), 0
    pts = boundary_points(space, boundary)
    free_of_point = -np.ones(space.table.n_points, dtype=np.int64)
    free_of_point[space.mds] = np.arange(nf)
    bc_mask = np.zeros(nf, dtype=bool)
    direct = free_of_point[pts]
    bc_mask[direct[direct >= 0]] = True
    dep = pts[direct < 0]
    keep = np.flatnonzero(~bc_mask)
    if len(dep) == 0:
        T = sp.csr_matrix((np.ones(len(keep)), (keep, np.arange(len(keep)))), shape=(nf, len(keep)))
        return T, bc_mask, 0
    Gc = space.C[dep][:, keep].tocsc()
    scale = abs(space.C).max()
    Gc.data[np.abs(Gc.data) < 1e-14 * scale] = 0.0
    Gc.eliminate_zeros()
    involved = np.flatnonzero(np.diff(Gc.indptr) > 0)
    if len(involved) == 0:
        T = sp.csr_matrix((np.ones(len(keep)), (keep, np.arange(len(keep)))), shape=(nf, len(keep)))
        return T, bc_mask, 0
    Gd = Gc[:, involved].toarray()
    Gd = Gd[np.any(Gd != 0, axis=1)]
    _, R, piv = sla.qr(Gd, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * diag[0])) if len(diag) else 0
    pivots = piv[:rank]
    rest = piv[rank:]
    # solve G[:, pivots] z_p = -G[:, rest] z_r in the least-squares sense (consistent)
    S, *_ = np.linalg.lstsq(Gd[:, pivots], -Gd[:, rest], rcond=None)
    uninvolved = np.setdiff1d(np.arange(len(keep)), involved)
    rest_cols = involved[rest]
    reduced_cols = np.sort(np.concatenate([uninvolved, rest_cols]))
    col_of = {int(c): i for i, c in enumerate(reduced_cols.tolist())}
    rows, cols, vals = [], [], []
    for c in reduced_cols.tolist():
        rows.append(keep[c])
        cols.append(col_of[c])
        vals.append(1.0)
    for a, p in enumerate(involved[pivots].tolist()):
        for b, r in enumerate(rest_cols.tolist()):
            if S[a, b] != 0.0:
                rows.append(keep[p])
                cols.append(col_of[r])
                vals.append(S[a, b])
        bc_mask[keep[p]] = True
    T = sp.csr_matrix((vals, (rows, cols)), shape=(nf, len(reduced_cols)))
    return T, bc_mask, rank


def assemble(space: SplineSpace, problem: ProblemSpec, exactness: int | None = None,
             threads: int = 1, mixed: bool = False, frobenius: bool = True) -> GlobalSystem:
    """Reduced operators with the boundary condition applied.

    For the C1 formulation ``K`` is the plate stiffness; for the mixed one it
    is the Laplace stiffness and ``M`` the mass matrix.
    """
    if problem.boundary == "clamped" and mixed:
        raise ValueError("the mixed formulation does not support the clamped boundary condition")
    et = element_tensors(space, problem, exactness, threads, mixed, frobenius)
    ids = space.table.ids
    Np = space.table.n_points
    T, bc_mask, extra = apply_bc(space, problem.boundary)
    P = (space.C @ T).tocsr()
    PT = P.T.tocsr()

    def reduce(Ke):
        return (PT @ _scatter_matrix(ids, Ke, Np) @ P).tocsr()

    F = PT @ _scatter_vector(ids, et["F"], Np)
    G = PT @ _scatter_vector(ids, et["G"], Np)
    store = TrilinearStore(ids, et["tri"], Np)
    if mixed:
        return GlobalSystem(space, reduce(et["A"]), F, G, store, P, T, bc_mask,
                            M=reduce(et["M"]), extra_constraints=extra)
    return GlobalSystem(space, reduce(et["K"]), F, G, store, P, T, bc_mask, extra_constraints=extra)
