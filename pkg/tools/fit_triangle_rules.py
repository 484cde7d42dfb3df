"""Fit fully symmetric positive-interior triangle quadrature rules.

Solves the S3-invariant moment equations for a chosen orbit structure with
``scipy.optimize.least_squares`` from random starts and prints the rules as
Python literals for ``vonkarman/quadrature.py``.  Weights sum to 1/2.
"""
import itertools
import sys

import numpy as np
from scipy.optimize import least_squares
from scipy.special import roots_jacobi, roots_legendre


def conical_rule(n):
    """Collapsed Gauss-Jacobi rule on the reference triangle (exact to 2n-1)."""
    x, wx = roots_jacobi(n, 1.0, 0.0)
    y, wy = roots_legendre(n)
    s = (1 + x) / 2
    t = (1 + y) / 2
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(wx, wy) / 8
    xi = (1 - S) * T
    eta = S
    return np.column_stack([xi.ravel(), eta.ravel()]), W.ravel()


def invariant_basis(p):
    return [(i, j) for i in range(p // 2 + 1) for j in range(p // 3 + 1) if 2 * i + 3 * j <= p]


def basis_vals(bary, basis):
    a, b, c = bary.T
    e2 = a * b + b * c + c * a
    e3 = a * b * c
    return np.array([e2**i * e3**j for i, j in basis])


def targets(p):
    pts, w = conical_rule(p + 4)
    bary = np.column_stack([1 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    return basis_vals(bary, invariant_basis(p)) @ w


def expand(params, struct):
    n0, n1, n2 = struct
    pts, ws = [], []
    k = 0
    if n0:
        pts.append([1 / 3, 1 / 3, 1 / 3]); ws.append(params[k]); k += 1
    for _ in range(n1):
        a, w = params[k:k + 2]; k += 2
        for q in set(itertools.permutations((a, a, 1 - 2 * a))):
            pts.append(q); ws.append(w)
    for _ in range(n2):
        a, b, w = params[k:k + 3]; k += 3
        for q in itertools.permutations((a, b, 1 - a - b)):
            pts.append(q); ws.append(w)
    return np.array(pts), np.array(ws)


def residual(params, struct, basis, tgt):
    n0, n1, n2 = struct
    a = basis_vals(np.array([[1/3, 1/3, 1/3]]), basis)[:, 0] if n0 else None
    r = -tgt.copy()
    k = 0
    if n0:
        r += params[k] * a; k += 1
    for _ in range(n1):
        x, w = params[k:k + 2]; k += 2
        r += 3 * w * basis_vals(np.array([[x, x, 1 - 2 * x]]), basis)[:, 0]
    for _ in range(n2):
        x, y, w = params[k:k + 3]; k += 3
        r += 6 * w * basis_vals(np.array([[x, y, 1 - x - y]]), basis)[:, 0]
    return r


def try_fit(p, struct, rng, tries):
    basis = invariant_basis(p)
    tgt = targets(p)
    n0, n1, n2 = struct
    lo, hi = [], []
    if n0:
        lo.append(0.0); hi.append(0.5)
    for _ in range(n1):
        lo += [0.0, 0.0]; hi += [0.5, 0.5]
    for _ in range(n2):
        lo += [0.0, 0.0, 0.0]; hi += [1.0, 1.0, 0.5]
    best = None
    for _ in range(tries):
        x0 = []
        if n0:
            x0.append(rng.uniform(0, 0.1))
        for _ in range(n1):
            x0 += [rng.uniform(0.01, 0.49), rng.uniform(0, 0.05)]
        for _ in range(n2):
            a = rng.uniform(0.01, 0.5); b = rng.uniform(0.01, 1 - a - 0.01)
            x0 += [a, b, rng.uniform(0, 0.03)]
        sol = least_squares(residual, x0, bounds=(lo, hi), args=(struct, basis, tgt),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
        pts, ws = expand(sol.x, struct)
        if np.max(np.abs(sol.fun)) < 1e-15 and ws.min() > 1e-8 and pts.min() > 1e-8:
            # reject degenerate S111 that collapse onto S21 orbits
            if len({tuple(np.round(q, 10)) for q in pts}) == len(pts):
                return sol.x
    return best


def structures(p, max_pts):
    neq = len(invariant_basis(p))
    out = []
    for n0 in (0, 1):
        for n1 in range(0, 12):
            for n2 in range(0, 12):
                npts = n0 + 3 * n1 + 6 * n2
                if npts > max_pts or n0 + 2 * n1 + 3 * n2 < neq:
                    continue
                out.append((npts, (n0, n1, n2)))
    return [s for _, s in sorted(out)]


if __name__ == "__main__":
    rng = np.random.default_rng(7)
    maxdeg = int(sys.argv[1]) if len(sys.argv) > 1 else 14
    for p in range(2, maxdeg + 1):
        for struct in structures(p, 80):
            x = try_fit(p, struct, rng, 60)
            if x is not None:
                pts, ws = expand(x, struct)
                print(f"# degree {p}: {len(ws)} points, structure {struct}")
                print(f"{p}: ({struct}, {[float(v) for v in x]}),")
                sys.stdout.flush()
                break
