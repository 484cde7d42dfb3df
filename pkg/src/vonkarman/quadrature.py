"""Quadrature on the reference triangle {s, t >= 0, s + t <= 1}.

Low orders use fully symmetric rules with interior points and positive
weights (fitted once by ``tools/fit_triangle_rules.py`` and frozen here).
Higher orders fall back to the collapsed Gauss-Jacobi product rule, which
is exact to degree ``2n - 1`` with ``n**2`` points.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

# degree: ((centroid, S21 orbits, S111 orbits), flat parameters)
# S21 orbit params are (a, w) for barycentrics (a, a, 1-2a); S111 are (a, b, w).
_SYMMETRIC = {
    1: ((1, 0, 0), [0.5]),
    2: ((0, 1, 0), [1 / 6, 1 / 6]),
    3: ((0, 0, 1), [0.6590276223740921, 0.23193336855303165, 0.08333333333333331]),
    4: ((0, 2, 0), [0.09157621350977062, 0.054975871827660894, 0.4459484909159649,
                    0.11169079483900578]),
    5: ((1, 2, 0), [0.1125000000000003, 0.47014206410511505, 0.06619707639425296,
                    0.10128650732345673, 0.06296959027241357]),
    6: ((0, 2, 1), [0.24928674517090552, 0.058393137863193605, 0.06308901449150185,
                    0.02542245318510329, 0.31035245103378634, 0.6365024991213996,
                    0.04142553780918488]),
    7: ((0, 1, 2), [0.2432591398356089, 0.06269680372465049, 0.050714384307207476,
                    0.6306414258452578, 0.038153169170271756, 0.08663663134174326,
                    0.045720829846324036, 0.013831762300736367]),
    8: ((1, 3, 1), [0.07215780383818649, 0.050547228317208384, 0.016229248811759432,
                    0.17056930775114335, 0.05160868526715979, 0.45929258829174924,
                    0.047545817133826614, 0.008394777409472516, 0.7284923929524003,
                    0.013615157087262674]),
}

MAX_SYMMETRIC = max(_SYMMETRIC)
MAX_EXACTNESS = 41


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray    # (Q, 2) reference (s, t)
    weights: np.ndarray   # (Q,), sum 1/2
    exactness: int

    def __len__(self) -> int:
        return len(self.weights)


def _expand(struct, params) -> tuple[np.ndarray, np.ndarray]:
    n0, n1, n2 = struct
    bary, w = [], []
    k = 0
    if n0:
        bary.append((1 / 3, 1 / 3, 1 / 3))
        w.append(params[k])
        k += 1
    for _ in range(n1):
        a, wt = params[k:k + 2]
        k += 2
        c = 1 - 2 * a
        bary += [(a, a, c), (a, c, a), (c, a, a)]
        w += [wt] * 3
    for _ in range(n2):
        a, b, wt = params[k:k + 3]
        k += 3
        c = 1 - a - b
        bary += [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
        w += [wt] * 6
    bary = np.array(bary)
    return bary[:, 1:].copy(), np.array(w)


def conical_rule(n: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi product rule with ``n**2`` points (exact to 2n-1)."""
    x, wx = roots_jacobi(n, 1.0, 0.0)
    y, wy = roots_legendre(n)
    s = (1 + x) / 2
    t = (1 + y) / 2
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(wx, wy) / 8
    pts = np.column_stack([((1 - S) * T).ravel(), S.ravel()])
    return QuadratureRule(pts, W.ravel(), 2 * n - 1)


@lru_cache(maxsize=None)
def quadrature_rule(exactness: int) -> QuadratureRule:
    """Cheapest available rule integrating polynomials of the given degree exactly."""
    if not 0 <= exactness <= MAX_EXACTNESS:
        raise ValueError(f"unsupported quadrature exactness {exactness} (0..{MAX_EXACTNESS})")
    p = max(exactness, 1)
    if p <= MAX_SYMMETRIC:
        pts, w = _expand(*_SYMMETRIC[p])
        return QuadratureRule(pts, w, p)
    return conical_rule((p + 2) // 2)


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of s**a t**b over the reference triangle."""
    from math import factorial
    return factorial(a) * factorial(b) / factorial(a + b + 2)
