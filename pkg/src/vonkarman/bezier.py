"""Bernstein and rational Bezier bases on triangles.

Parametric derivatives are taken in reference coordinates ``s = zeta2`` and
``t = zeta3`` (so ``zeta1 = 1 - s - t``).  Physical derivatives are pushed
forward through the rational geometry map with the exact second-order
chain rule, so curved elements get correct Hessians.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np


class ElementInvertedError(ValueError):
    """Geometry map with (near-)singular or negative Jacobian."""


@lru_cache(maxsize=None)
def multi_indices(d: int) -> np.ndarray:
    """All (i, j, k) with i+j+k = d, ordered by descending i then j."""
    out = [(i, j, d - i - j) for i in range(d, -1, -1) for j in range(d - i, -1, -1)]
    arr = np.array(out, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def index_lookup(d: int) -> dict:
    return {tuple(int(v) for v in I): n for n, I in enumerate(multi_indices(d))}


def n_basis(d: int) -> int:
    return (d + 1) * (d + 2) // 2


def bernstein_eval(d: int, I, zeta) -> float:
    """Single Bernstein polynomial ``d!/(i!j!k!) z1^i z2^j z3^k``."""
    i, j, k = (int(v) for v in I)
    if min(i, j, k) < 0 or i + j + k != d:
        raise ValueError(f"multi-index {tuple(I)} does not match degree {d}")
    z1, z2, z3 = zeta
    coef = factorial(d) / (factorial(i) * factorial(j) * factorial(k))
    return coef * z1**i * z2**j * z3**k


def _pw(z, e):
    """``z**e`` with 0**0 = 1 and a zero result for negative exponents."""
    if e < 0:
        return np.zeros_like(z)
    return z**e


def bernstein_all(d: int, zeta) -> np.ndarray:
    """Values of every degree-``d`` Bernstein polynomial, shape (..., n)."""
    zeta = np.asarray(zeta, dtype=float)
    z1, z2, z3 = zeta[..., 0], zeta[..., 1], zeta[..., 2]
    cols = []
    for i, j, k in multi_indices(d):
        coef = factorial(d) / (factorial(i) * factorial(j) * factorial(k))
        cols.append(coef * _pw(z1, i) * _pw(z2, j) * _pw(z3, k))
    return np.stack(cols, axis=-1)


def bernstein_derivatives(d: int, st) -> tuple[np.ndarray, ...]:
    """Bernstein values and reference derivatives at points ``st`` (..., 2).

    Returns ``(B, Bs, Bt, Bss, Bst, Btt)`` each of shape (..., n).
    """
    st = np.asarray(st, dtype=float)
    s, t = st[..., 0], st[..., 1]
    z = (1.0 - s - t, s, t)
    # d/ds = d2 - d1 and d/dt = d3 - d1 in barycentric partials
    first = {"s": {1: 1.0, 0: -1.0}, "t": {2: 1.0, 0: -1.0}}
    out = {key: [] for key in ("B", "s", "t", "ss", "st", "tt")}
    for I in multi_indices(d):
        I = tuple(int(v) for v in I)
        coef = factorial(d) / (factorial(I[0]) * factorial(I[1]) * factorial(I[2]))

        def mono(e):
            return coef * _pw(z[0], e[0]) * _pw(z[1], e[1]) * _pw(z[2], e[2])

        def partial(e, axis):
            f = e[axis]
            e2 = list(e)
            e2[axis] -= 1
            return f, tuple(e2)

        def dir1(e, spec):
            acc = 0.0
            for axis, sgn in spec.items():
                f, e2 = partial(e, axis)
                if f:
                    acc = acc + sgn * f * mono(e2)
            return acc

        def dir2(e, spec_a, spec_b):
            acc = 0.0
            for ax1, s1 in spec_a.items():
                f1, e1 = partial(e, ax1)
                if not f1:
                    continue
                for ax2, s2 in spec_b.items():
                    f2, e2 = partial(e1, ax2)
                    if f2:
                        acc = acc + s1 * s2 * f1 * f2 * mono(e2)
            return acc

        zero = np.zeros_like(s)
        out["B"].append(mono(I))
        out["s"].append(dir1(I, first["s"]) + zero)
        out["t"].append(dir1(I, first["t"]) + zero)
        out["ss"].append(dir2(I, first["s"], first["s"]) + zero)
        out["st"].append(dir2(I, first["s"], first["t"]) + zero)
        out["tt"].append(dir2(I, first["t"], first["t"]) + zero)
    return tuple(np.stack(out[k], axis=-1) for k in ("B", "s", "t", "ss", "st", "tt"))


@dataclass
class BezierElement:
    """Rational Bezier triangle: control points and positive weights per ordinate."""

    degree: int
    nodes: np.ndarray        # (n, 2) control points p_I
    weights: np.ndarray      # (n,) weights w_I
    vertex_ids: tuple = (0, 1, 2)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        n = n_basis(self.degree)
        if self.nodes.shape[0] != n or self.weights.shape[0] != n:
            raise ValueError(f"degree {self.degree} element needs {n} nodes and weights")
        if np.any(self.weights <= 0):
            raise ValueError("element weights must be strictly positive")

    @classmethod
    def from_triangle(cls, tri, degree: int) -> "BezierElement":
        """Straight-sided, unit-weight element on the given vertices."""
        tri = np.asarray(tri, dtype=float)
        I = multi_indices(degree)
        return cls(degree, I @ tri / degree, np.ones(len(I)))

    @property
    def unit_weights(self) -> bool:
        return bool(np.all(self.weights == 1.0))


@dataclass
class BasisEval:
    """Basis values and physical derivatives at one parametric point."""

    values: np.ndarray       # (n,)
    grad: np.ndarray         # (n, 2)  d/dx, d/dy
    hess: np.ndarray         # (n, 3)  d2/dx2, d2/dy2, d2/dxdy
    jac_det: float
    phys_point: np.ndarray   # (2,)


@dataclass
class ElementBatch:
    """Vectorised evaluation over ``E`` elements and ``Q`` points per element."""

    values: np.ndarray       # (E, Q, n)
    grad: np.ndarray         # (E, Q, n, 2)
    hess: np.ndarray         # (E, Q, n, 3)
    jac_det: np.ndarray      # (E, Q)
    x: np.ndarray            # (E, Q, 2)


def _rational(weights, ref):
    """Rational basis and its reference derivatives from Bernstein data."""
    B, Bs, Bt, Bss, Bst, Btt = ref
    w = weights[:, None, :]
    W = np.sum(w * B, -1, keepdims=True)
    Ws = np.sum(w * Bs, -1, keepdims=True)
    Wt = np.sum(w * Bt, -1, keepdims=True)
    Wss = np.sum(w * Bss, -1, keepdims=True)
    Wst = np.sum(w * Bst, -1, keepdims=True)
    Wtt = np.sum(w * Btt, -1, keepdims=True)
    R = w * B / W
    Rs = (w * Bs - R * Ws) / W
    Rt = (w * Bt - R * Wt) / W
    Rss = (w * Bss - 2 * Rs * Ws - R * Wss) / W
    Rst = (w * Bst - Rs * Wt - Rt * Ws - R * Wst) / W
    Rtt = (w * Btt - 2 * Rt * Wt - R * Wtt) / W
    return R, Rs, Rt, Rss, Rst, Rtt


def evaluate_batch(degree: int, nodes, weights, st, check: bool = True) -> ElementBatch:
    """Basis values and physical first/second derivatives.

    ``nodes`` (E, n, 2), ``weights`` (E, n); ``st`` is either (Q, 2), shared
    by all elements, or (E, Q, 2).
    """
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    st = np.asarray(st, dtype=float)
    E = nodes.shape[0]
    ref = bernstein_derivatives(degree, st)
    if st.ndim == 2:
        ref = tuple(np.broadcast_to(a[None], (E,) + a.shape) for a in ref)
    unit = np.all(weights == 1.0, axis=1)
    if np.all(unit):
        R, Rs, Rt, Rss, Rst, Rtt = ref
    else:
        rat = _rational(weights, ref)
        if np.any(unit):
            rat = tuple(np.where(unit[:, None, None], a, b) for a, b in zip(ref, rat))
        R, Rs, Rt, Rss, Rst, Rtt = rat

    x = np.einsum("eqn,enc->eqc", R, nodes)
    xs = np.einsum("eqn,enc->eqc", Rs, nodes)
    xt = np.einsum("eqn,enc->eqc", Rt, nodes)
    xss = np.einsum("eqn,enc->eqc", Rss, nodes)
    xst = np.einsum("eqn,enc->eqc", Rst, nodes)
    xtt = np.einsum("eqn,enc->eqc", Rtt, nodes)

    # J[c, a] = dx_c / dxi_a
    det = xs[..., 0] * xt[..., 1] - xt[..., 0] * xs[..., 1]
    if check:
        diam2 = np.max(np.sum((nodes[:, :, None, :] - nodes[:, None, :, :]) ** 2, axis=-1), axis=(1, 2))
        bad = det <= 1e-12 * diam2[:, None]
        if np.any(bad):
            e = int(np.argmax(np.any(bad, axis=1)))
            raise ElementInvertedError(f"singular or inverted geometry map on element {e}")
    # inverse Jacobian entries: Ji[a, c] = dxi_a / dx_c
    i00 = xt[..., 1] / det
    i01 = -xt[..., 0] / det
    i10 = -xs[..., 1] / det
    i11 = xs[..., 0] / det

    gx = Rs * i00[..., None] + Rt * i10[..., None]
    gy = Rs * i01[..., None] + Rt * i11[..., None]

    # remove the map-curvature part, then transform the parametric Hessian
    hss = Rss - (xss[..., 0:1] * gx + xss[..., 1:2] * gy)
    hst = Rst - (xst[..., 0:1] * gx + xst[..., 1:2] * gy)
    htt = Rtt - (xtt[..., 0:1] * gx + xtt[..., 1:2] * gy)

    def hx(c, d):
        ac, bc = (i00, i10) if c == 0 else (i01, i11)
        ad, bd = (i00, i10) if d == 0 else (i01, i11)
        return (hss * (ac * ad)[..., None] + hst * (ac * bd + bc * ad)[..., None]
                + htt * (bc * bd)[..., None])

    hess = np.stack([hx(0, 0), hx(1, 1), hx(0, 1)], axis=-1)
    grad = np.stack([gx, gy], axis=-1)
    return ElementBatch(values=np.ascontiguousarray(R), grad=grad, hess=hess, jac_det=det, x=x)


def _st(zeta) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=float)
    return zeta[..., 1:3]


def rational_eval(el: BezierElement, zeta) -> np.ndarray:
    """Rational basis values at one barycentric point (unit weights: plain Bernstein)."""
    B = bernstein_all(el.degree, zeta)
    if el.unit_weights:
        return B
    wB = el.weights * B
    return wB / np.sum(wB, axis=-1, keepdims=True)


def geometry_map(el: BezierElement, zeta):
    """Physical point, Jacobian ``J[c, a] = dx_c/dxi_a`` and second derivatives ``H[c, a, b]``."""
    st = _st(zeta)[None, None, :]
    ref = bernstein_derivatives(el.degree, st)
    if el.unit_weights:
        R = ref
    else:
        R = _rational(el.weights[None], ref)
    R = [a[0, 0] for a in R]
    P = el.nodes
    x = R[0] @ P
    J = np.column_stack([R[1] @ P, R[2] @ P])
    xss, xst, xtt = R[3] @ P, R[4] @ P, R[5] @ P
    H = np.empty((2, 2, 2))
    H[:, 0, 0], H[:, 0, 1], H[:, 1, 0], H[:, 1, 1] = xss, xst, xst, xtt
    diam2 = np.max(np.sum((P[:, None] - P[None]) ** 2, axis=-1))
    if np.linalg.det(J) <= 1e-12 * diam2:
        raise ElementInvertedError("singular or inverted geometry map")
    return x, J, H


def basis_derivatives(el: BezierElement, zeta) -> BasisEval:
    """Values, physical gradients and Hessians of all basis functions at ``zeta``."""
    b = evaluate_batch(el.degree, el.nodes[None], el.weights[None], _st(zeta)[None, None, :])
    return BasisEval(values=b.values[0, 0], grad=b.grad[0, 0], hess=b.hess[0, 0],
                     jac_det=float(b.jac_det[0, 0]), phys_point=b.x[0, 0])


def elevate_ordinates(ordinates: np.ndarray) -> np.ndarray:
    """Degree-elevate a univariate Bezier control polygon by one."""
    b = np.asarray(ordinates, dtype=float)
    n = len(b) - 1
    out = np.empty((n + 2,) + b.shape[1:])
    out[0], out[-1] = b[0], b[-1]
    for i in range(1, n + 1):
        a = i / (n + 1)
        out[i] = a * b[i - 1] + (1 - a) * b[i]
    return out
