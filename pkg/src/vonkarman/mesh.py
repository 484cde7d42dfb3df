"""Planar triangulations with optional rational quadratic boundary edges.

Covers parsing of the line-oriented mesh format, validation, the
Clough-Tocher and Powell-Sabin macro-element splits and uniform
quadrisection refinement.  Curved edges are subdivided exactly by rational
de Casteljau so the boundary curve never moves under refinement.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class MeshError(ValueError):
    """Invalid mesh input.  ``line`` is the 1-based source line when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SplitKind(str, Enum):
    NONE = "none"
    CT = "ct"
    PS = "ps"


@dataclass(frozen=True)
class CurvedEdge:
    """Rational quadratic arc from vertex ``a`` to vertex ``b``.

    End weights are 1; ``control`` and ``weight`` describe the middle
    control point.
    """

    a: int
    b: int
    control: tuple[float, float]
    weight: float

    def homogeneous(self, pa, pb) -> np.ndarray:
        """Homogeneous control net, rows ``(w x, w y, w)``."""
        w = self.weight
        c = np.asarray(self.control, dtype=float)
        return np.array([[pa[0], pa[1], 1.0],
                         [w * c[0], w * c[1], w],
                         [pb[0], pb[1], 1.0]])

    def evaluate(self, pa, pb, t) -> np.ndarray:
        """Points on the arc for parameters ``t`` in [0, 1], shape (..., 2)."""
        t = np.asarray(t, dtype=float)[..., None]
        H = self.homogeneous(pa, pb)
        h = (1 - t) ** 2 * H[0] + 2 * t * (1 - t) * H[1] + t**2 * H[2]
        return h[..., :2] / h[..., 2:]

    def reversed(self) -> "CurvedEdge":
        return CurvedEdge(self.b, self.a, self.control, self.weight)


def subdivide_arc(H: np.ndarray, t: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Split a homogeneous quadratic control net at ``t`` (de Casteljau)."""
    H01 = (1 - t) * H[0] + t * H[1]
    H12 = (1 - t) * H[1] + t * H[2]
    Hm = (1 - t) * H01 + t * H12
    return np.array([H[0], H01, Hm]), np.array([Hm, H12, H[2]])


def _standard_form(H: np.ndarray) -> tuple[np.ndarray, np.ndarray, tuple[float, float], float]:
    """Rescale a homogeneous net to unit end weights."""
    w0, w1, w2 = H[:, 2]
    ctrl = H[1, :2] / w1
    return H[0, :2] / w0, H[2, :2] / w2, (float(ctrl[0]), float(ctrl[1])), float(w1 / np.sqrt(w0 * w2))


def _signed_area(p0, p1, p2) -> np.ndarray:
    return 0.5 * ((p1[..., 0] - p0[..., 0]) * (p2[..., 1] - p0[..., 1])
                  - (p2[..., 0] - p0[..., 0]) * (p1[..., 1] - p0[..., 1]))


@dataclass
class Triangulation:
    """Macro triangulation.  Triangles are stored counter-clockwise.

    Set ``strict=True`` to reject clockwise triangles instead of flipping them.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    curved_edges: list[CurvedEdge] = field(default_factory=list)
    strict: bool = False

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3).copy()
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinates")
        nv = len(self.vertices)
        if len(self.triangles) == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= nv:
            raise MeshError("triangle references a missing vertex")
        if np.any(np.diff(np.sort(self.triangles, axis=1), axis=1) == 0):
            raise MeshError("triangle repeats a vertex")
        P = self.vertices[self.triangles]
        area = _signed_area(P[:, 0], P[:, 1], P[:, 2])
        diam2 = np.max(np.sum((P - np.roll(P, 1, axis=1)) ** 2, axis=2), axis=1)
        degenerate = np.abs(area) <= 1e-12 * diam2
        if np.any(degenerate):
            raise MeshError(f"degenerate (zero-area) triangle {int(np.argmax(degenerate))}")
        cw = area < 0
        if np.any(cw):
            if self.strict:
                raise MeshError(f"clockwise triangle {int(np.argmax(cw))} (orientation error)")
            self.triangles[cw] = self.triangles[cw][:, [0, 2, 1]]
        self._build_edges()
        self._check_conforming()
        self._attach_curved_edges()

    # -- topology -------------------------------------------------------
    def _build_edges(self):
        T = self.triangles
        # local edge i is opposite local vertex i
        pairs = np.stack([T[:, [1, 2]], T[:, [2, 0]], T[:, [0, 1]]], axis=1)
        key = np.sort(pairs, axis=2).reshape(-1, 2)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: an edge is shared by more than two triangles")
        self.edges = edges
        self.tri_edges = inverse.reshape(-1, 3)
        self.edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
        for flat, e in enumerate(inverse.ravel()):
            slot = 0 if self.edge_tris[e, 0] < 0 else 1
            self.edge_tris[e, slot] = flat // 3
        self.boundary_edge = self.edge_tris[:, 1] < 0
        if np.any(counts == 2):
            # interior edges must be traversed in opposite directions
            directed = pairs.reshape(-1, 2)
            _, dcounts = np.unique(directed, axis=0, return_counts=True)
            if np.any(dcounts > 1):
                raise MeshError("non-conforming mesh: inconsistent triangle orientation")
        self._edge_index = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}

    def _check_conforming(self):
        V = self.vertices
        used = np.zeros(len(V), dtype=bool)
        used[self.triangles.ravel()] = True
        for e in np.flatnonzero(self.boundary_edge):
            a, b = self.edges[e]
            pa, pb = V[a], V[b]
            d = pb - pa
            L2 = d @ d
            rel = V[used] - pa
            t = rel @ d / L2
            dist2 = np.sum((rel - np.outer(t, d)) ** 2, axis=1)
            hanging = (t > 1e-9) & (t < 1 - 1e-9) & (dist2 < 1e-18 * L2)
            if np.any(hanging):
                raise MeshError("non-conforming mesh: hanging vertex on edge "
                                f"({a}, {b})")

    def _attach_curved_edges(self):
        self.edge_curve: dict[int, CurvedEdge] = {}
        for ce in self.curved_edges:
            if not ce.weight > 0 or not np.isfinite(ce.weight):
                raise MeshError(f"curved edge ({ce.a}, {ce.b}) needs a positive weight")
            key = (min(ce.a, ce.b), max(ce.a, ce.b))
            e = self._edge_index.get(key)
            if e is None or not self.boundary_edge[e]:
                raise MeshError(f"curved edge ({ce.a}, {ce.b}) is not a boundary edge")
            if e in self.edge_curve:
                raise MeshError(f"boundary edge ({ce.a}, {ce.b}) is curved twice")
            self.edge_curve[e] = ce if ce.a == key[0] else ce.reversed()

    def edge_id(self, a: int, b: int) -> int:
        return self._edge_index[(min(a, b), max(a, b))]

    # -- geometry -------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        P = self.vertices[self.triangles]
        return _signed_area(P[:, 0], P[:, 1], P[:, 2])

    def max_edge_length(self) -> float:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.sqrt(np.max(np.sum(d * d, axis=1))))

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edge].ravel())

    @property
    def is_curved(self) -> bool:
        return bool(self.curved_edges)


def barycentric(tri, p) -> np.ndarray:
    """Barycentric coordinates of ``p`` (shape (..., 2)) in triangle ``tri``."""
    tri = np.asarray(tri, dtype=float)
    p = np.asarray(p, dtype=float)
    v1, v2, v3 = tri
    area = _signed_area(v1, v2, v3)
    diam2 = max(np.sum((v1 - v2) ** 2), np.sum((v2 - v3) ** 2), np.sum((v3 - v1) ** 2))
    if abs(area) <= 1e-14 * diam2:
        raise MeshError("degenerate triangle in barycentric()")
    z1 = _signed_area(p, v2, v3) / area
    z2 = _signed_area(v1, p, v3) / area
    z3 = 1.0 - z1 - z2
    return np.stack([z1, z2, z3], axis=-1)


def load_mesh(text: str, strict: bool = False) -> Triangulation:
    """Parse the text mesh format (``vertices``/``triangles``/``curved_edges`` blocks)."""
    lines = []
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            lines.append((no, body.split()))
    blocks: dict[str, list[tuple[int, list[str]]]] = {}
    widths = {"vertices": 2, "triangles": 3, "curved_edges": 5}
    i = 0
    while i < len(lines):
        no, tok = lines[i]
        name = tok[0].lower()
        if name not in widths:
            raise MeshError(f"unexpected token {tok[0]!r}", no)
        if name in blocks:
            raise MeshError(f"duplicate {name} block", no)
        if len(tok) != 2:
            raise MeshError(f"expected '{name} <count>'", no)
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshError(f"bad count {tok[1]!r}", no) from None
        if count < 0:
            raise MeshError("negative count", no)
        rows = lines[i + 1:i + 1 + count]
        if len(rows) < count:
            raise MeshError(f"{name} block ends early: expected {count} rows", no)
        for rno, rtok in rows:
            if len(rtok) != widths[name]:
                raise MeshError(f"{name} row needs {widths[name]} values, got {len(rtok)}", rno)
        blocks[name] = rows
        i += 1 + count
    if "vertices" not in blocks or "triangles" not in blocks:
        raise MeshError("mesh needs both a vertices and a triangles block")

    def parse(rows, conv):
        out = []
        for rno, rtok in rows:
            try:
                out.append([conv(t) for t in rtok])
            except ValueError:
                raise MeshError(f"cannot parse {' '.join(rtok)!r}", rno) from None
        return out

    verts = parse(blocks["vertices"], float)
    tris = parse(blocks["triangles"], int)
    curved = []
    for (rno, _), row in zip(blocks.get("curved_edges", []), parse(blocks.get("curved_edges", []), float)):
        a, b = int(row[0]), int(row[1])
        if a != row[0] or b != row[1]:
            raise MeshError("curved edge endpoints must be integers", rno)
        curved.append(CurvedEdge(a, b, (row[2], row[3]), row[4]))
    nv = len(verts)
    for (rno, _), t in zip(blocks["triangles"], tris):
        if min(t) < 0 or max(t) >= nv:
            raise MeshError("triangle references a missing vertex", rno)
    try:
        return Triangulation(np.array(verts).reshape(-1, 2), np.array(tris).reshape(-1, 3),
                             curved, strict=strict)
    except MeshError as exc:
        if exc.line is None and "curved edge" in str(exc):
            for (rno, _), ce in zip(blocks.get("curved_edges", []), curved):
                if f"({ce.a}, {ce.b})" in str(exc):
                    raise MeshError(str(exc), rno) from None
        raise


def dump_mesh(t: Triangulation) -> str:
    """Serialise to the text mesh format (round-trips through :func:`load_mesh`)."""
    out = [f"vertices {t.n_vertices}"]
    out += [f"{x!r} {y!r}" for x, y in t.vertices.tolist()]
    out.append(f"triangles {t.n_triangles}")
    out += [f"{i} {j} {k}" for i, j, k in t.triangles.tolist()]
    if t.curved_edges:
        out.append(f"curved_edges {len(t.curved_edges)}")
        out += [f"{c.a} {c.b} {c.control[0]!r} {c.control[1]!r} {c.weight!r}" for c in t.curved_edges]
    return "\n".join(out) + "\n"


def refine_uniform(t: Triangulation) -> Triangulation:
    """Quadrisect every triangle through its edge midpoints.

    New vertices on curved edges are placed on the arc (parameter 1/2) and
    each arc is replaced by its two exact rational halves.
    """
    nv = t.n_vertices
    ne = len(t.edges)
    new_pts = np.empty((ne, 2))
    curved = []
    for e, (a, b) in enumerate(t.edges):
        pa, pb = t.vertices[a], t.vertices[b]
        ce = t.edge_curve.get(e)
        if ce is None:
            new_pts[e] = 0.5 * (pa + pb)
            continue
        left, right = subdivide_arc(ce.homogeneous(pa, pb))
        _, pm, ctrl_l, w_l = _standard_form(left)
        _, _, ctrl_r, w_r = _standard_form(right)
        new_pts[e] = pm
        curved.append(CurvedEdge(int(a), nv + e, ctrl_l, w_l))
        curved.append(CurvedEdge(nv + e, int(b), ctrl_r, w_r))
    V = np.vstack([t.vertices, new_pts])
    T = t.triangles
    m0, m1, m2 = (nv + t.tri_edges[:, k] for k in range(3))  # m_k opposite vertex k
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    children = np.stack([
        np.stack([a, m2, m1], axis=1),
        np.stack([m2, b, m0], axis=1),
        np.stack([m1, m0, c], axis=1),
        np.stack([m2, m0, m1], axis=1),
    ], axis=1).reshape(-1, 3)
    return Triangulation(V, children, curved, strict=True)


@dataclass
class MicroMesh:
    """Micro-triangles of a split macro triangulation.

    ``points`` holds the parametric micro-vertices: the macro vertices first,
    then edge split points (PS) and interior split points.  ``elements`` are
    CCW micro-vertex triples; local edge ``l`` is opposite local vertex ``l``.
    """

    macro: Triangulation
    kind: SplitKind
    points: np.ndarray
    elements: np.ndarray
    macro_of: np.ndarray
    point_kind: np.ndarray          # 0 macro vertex, 1 edge split point, 2 interior split point
    interior_edges: np.ndarray      # rows (e1, l1, e2, l2)
    boundary_edges: np.ndarray      # rows (e, l)
    edge_macro_edge: dict = field(default_factory=dict)   # sorted micro edge -> macro edge id
    edge_param: dict = field(default_factory=dict)        # micro vertex on macro edge -> parameter

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_vertices(self, e: int) -> np.ndarray:
        return self.points[self.elements[e]]


def _ps_edge_points(t: Triangulation, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Edge split points: midpoint where possible, else the centroid-line crossing."""
    pts = np.empty((len(t.edges), 2))
    params = np.empty(len(t.edges))
    for e, (a, b) in enumerate(t.edges):
        pa, pb = t.vertices[a], t.vertices[b]
        if t.boundary_edge[e]:
            pts[e], params[e] = 0.5 * (pa + pb), 0.5
            continue
        g1, g2 = centroids[t.edge_tris[e]]
        # solve pa + s (pb - pa) = g1 + r (g2 - g1)
        M = np.column_stack([pb - pa, g1 - g2])
        s, _ = np.linalg.solve(M, g1 - pa)
        if not 0.05 < s < 0.95:
            raise MeshError(f"Powell-Sabin split invalid: centroid line misses edge ({a}, {b}) interior")
        if abs(s - 0.5) < 1e-12:
            s = 0.5
        pts[e], params[e] = (1 - s) * pa + s * pb, s
    return pts, params


def split(t: Triangulation, kind: SplitKind | str) -> MicroMesh:
    """Clough-Tocher (3 micro per macro), Powell-Sabin (6) or no split."""
    kind = SplitKind(kind)
    nv, nt = t.n_vertices, t.n_triangles
    T = t.triangles
    centroids = t.vertices[T].mean(axis=1)
    edge_param: dict[int, tuple[int, float]] = {}
    if kind is SplitKind.NONE:
        points = t.vertices.copy()
        point_kind = np.zeros(nv, dtype=np.int8)
        elements = T.copy()
        macro_of = np.arange(nt)
    elif kind is SplitKind.CT:
        points = np.vstack([t.vertices, centroids])
        point_kind = np.r_[np.zeros(nv), 2 * np.ones(nt)].astype(np.int8)
        g = nv + np.arange(nt)
        a, b, c = T[:, 0], T[:, 1], T[:, 2]
        elements = np.stack([np.stack([a, b, g], 1), np.stack([b, c, g], 1),
                             np.stack([c, a, g], 1)], axis=1).reshape(-1, 3)
        macro_of = np.repeat(np.arange(nt), 3)
    else:
        ne = len(t.edges)
        epts, eparams = _ps_edge_points(t, centroids)
        points = np.vstack([t.vertices, epts, centroids])
        point_kind = np.r_[np.zeros(nv), np.ones(ne), 2 * np.ones(nt)].astype(np.int8)
        for e in range(ne):
            edge_param[nv + e] = (e, float(eparams[e]))
        g = nv + ne + np.arange(nt)
        a, b, c = T[:, 0], T[:, 1], T[:, 2]
        m_ab = nv + t.tri_edges[:, 2]
        m_bc = nv + t.tri_edges[:, 0]
        m_ca = nv + t.tri_edges[:, 1]
        elements = np.stack([
            np.stack([a, m_ab, g], 1), np.stack([m_ab, b, g], 1),
            np.stack([b, m_bc, g], 1), np.stack([m_bc, c, g], 1),
            np.stack([c, m_ca, g], 1), np.stack([m_ca, a, g], 1),
        ], axis=1).reshape(-1, 3)
        macro_of = np.repeat(np.arange(nt), 6)

    # micro edge adjacency
    E = elements
    pairs = np.stack([E[:, [1, 2]], E[:, [2, 0]], E[:, [0, 1]]], axis=1)
    key = np.sort(pairs, axis=2).reshape(-1, 2)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    owners: dict[int, list[tuple[int, int]]] = {}
    for flat, u in enumerate(inverse.ravel()):
        owners.setdefault(int(u), []).append((flat // 3, flat % 3))
    interior, boundary = [], []
    for u, own in owners.items():
        if len(own) == 2:
            (e1, l1), (e2, l2) = own
            interior.append((e1, l1, e2, l2))
        else:
            boundary.append(own[0])
    interior.sort()
    boundary.sort()

    # which micro edges lie on which macro edge
    edge_macro_edge = {}
    for e, (a, b) in enumerate(t.edges):
        if kind is SplitKind.PS:
            m = nv + e
            edge_macro_edge[(min(a, m), max(a, m))] = e
            edge_macro_edge[(min(b, m), max(b, m))] = e
        else:
            edge_macro_edge[(int(a), int(b))] = e

    return MicroMesh(
        macro=t, kind=kind, points=points, elements=E, macro_of=macro_of,
        point_kind=point_kind,
        interior_edges=np.array(interior, dtype=np.int64).reshape(-1, 4),
        boundary_edges=np.array(boundary, dtype=np.int64).reshape(-1, 2),
        edge_macro_edge=edge_macro_edge, edge_param=edge_param,
    )
