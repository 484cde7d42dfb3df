"""Built-in coarse meshes for the benchmark and re-entrant studies."""
from __future__ import annotations

import math

from .mesh import CurvedEdge, Triangulation


def square() -> Triangulation:
    """Unit square, two triangles."""
    return Triangulation([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])


def lshape() -> Triangulation:
    """[0, 2]^2 without [1, 2]^2: three unit squares, two triangles each."""
    V = [[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1], [0, 2], [1, 2]]
    T = [[0, 1, 4], [0, 4, 3], [1, 2, 5], [1, 5, 4], [3, 4, 7], [3, 7, 6]]
    return Triangulation(V, T)


def circular_lshape() -> Triangulation:
    """Quarter disk of radius 2 without [1, 2]^2; the outer boundary is two exact 30 degree arcs."""
    r3 = math.sqrt(3.0)
    V = [[0, 0], [1, 0], [2, 0], [r3, 1], [1, 1], [1, r3], [0, 2], [0, 1]]
    T = [[0, 1, 4], [0, 4, 7], [1, 2, 3], [1, 3, 4], [7, 4, 5], [7, 5, 6]]
    w = math.cos(math.radians(15))
    c = 2.0 / w                         # arc control point at the bisecting angle
    arcs = [CurvedEdge(2, 3, (c * math.cos(math.radians(15)), c * math.sin(math.radians(15))), w),
            CurvedEdge(5, 6, (c * math.cos(math.radians(75)), c * math.sin(math.radians(75))), w)]
    return Triangulation(V, T, arcs)


def mshape() -> Triangulation:
    """[0, 2] x [0, 1] without the triangle (0.75, 1), (1.25, 1), (1, 0.5)."""
    V = [[0, 0], [1, 0], [2, 0], [1, 0.5], [0.75, 1], [0, 1], [1.25, 1], [2, 1]]
    T = [[0, 1, 3], [0, 3, 4], [0, 4, 5], [1, 2, 3], [2, 6, 3], [2, 7, 6]]
    return Triangulation(V, T)


DOMAINS = {"square": square, "lshape": lshape, "circular-lshape": circular_lshape, "mshape": mshape}


def get_domain(name: str) -> Triangulation:
    try:
        return DOMAINS[name]()
    except KeyError:
        raise ValueError(f"unknown domain {name!r}; choose from {', '.join(DOMAINS)}") from None
