"""C^r spline spaces on split triangulations.

The space is described by a minimal determining set (MDS) of free domain
points and a sparse transform ``C`` with ``b = C @ c``: free coefficients
``c`` to the Bezier ordinates ``b`` of every distinct domain point.

Construction is direct and local.  For r = 1 the three ordinates of one
micro-triangle at each macro vertex fix the tangent plane, which determines
the whole vertex disk.  Each macro triangle is then resolved in turn: its
still-unknown ordinates are split greedily into dependent points (pivots of
the local smoothness equations, interior points first) and free points
(boundary points last), and the dependents are eliminated with a small
dense solve.  A global residual check guards the result.

Smoothness is imposed on the homogeneous ordinates ``w_I b_I`` so fields on
rational (curved) elements are C^1 as well; the geometry itself is built as
a C^1 spline in the same space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
import scipy.sparse as sp

from .bezier import BezierElement, elevate_ordinates, evaluate_batch, index_lookup, multi_indices
from .mesh import MeshError, MicroMesh, SplitKind, Triangulation, barycentric, refine_uniform, split
from .mesh import subdivide_arc


class UnsupportedSpaceError(ValueError):
    """The (degree, smoothness, split) combination has no C^r macro-element."""


class ConstructionError(RuntimeError):
    """The direct construction produced a transform violating the constraints."""


SUPPORTED_C1 = {(2, SplitKind.PS), (3, SplitKind.CT), (3, SplitKind.PS)}


@dataclass
class DomainPointTable:
    degree: int
    ids: np.ndarray          # (E, n) global point id per element ordinate
    coords: np.ndarray       # (Np, 2) parametric location q_ijk
    on_boundary: np.ndarray  # (Np,) point lies on a boundary micro edge

    @property
    def n_points(self) -> int:
        return len(self.coords)


def domain_points(micro: MicroMesh, d: int) -> DomainPointTable:
    """Identify coincident domain points topologically (one id per location)."""
    I = multi_indices(d)
    E = micro.elements
    keys: dict[tuple, int] = {}
    ids = np.empty((len(E), len(I)), dtype=np.int64)
    for e, (a, b, c) in enumerate(E.tolist()):
        verts = (a, b, c)
        for n, (i, j, k) in enumerate(I.tolist()):
            cnt = (i, j, k)
            nz = [p for p in range(3) if cnt[p]]
            if len(nz) == 1:
                key = ("v", verts[nz[0]])
            elif len(nz) == 2:
                p, q = nz
                va, vb = verts[p], verts[q]
                ca = cnt[p]
                if va > vb:
                    va, vb, ca = vb, va, cnt[q]
                key = ("e", va, vb, ca)
            else:
                key = ("i", e, i, j)
            ids[e, n] = keys.setdefault(key, len(keys))
    coords = np.empty((len(keys), 2))
    Pel = micro.points[E]
    coords[ids] = np.einsum("nk,ekc->enc", I / d, Pel)
    on_boundary = np.zeros(len(keys), dtype=bool)
    for e, l in micro.boundary_edges.tolist():
        mask = I[:, l] == 0
        on_boundary[ids[e, mask]] = True
    return DomainPointTable(degree=d, ids=ids, coords=coords, on_boundary=on_boundary)


def _local_index(micro: MicroMesh, d: int, e: int, counts: dict) -> int:
    verts = micro.elements[e].tolist()
    return index_lookup(d)[tuple(counts.get(v, 0) for v in verts)]


def smoothness_constraints(micro: MicroMesh, table: DomainPointTable, e1: int, l1: int,
                           e2: int, l2: int, r: int = 1) -> list[tuple[np.ndarray, np.ndarray]]:
    """Linear equations joining elements ``e1`` and ``e2`` C^r across their shared edge.

    Each equation is ``(point_ids, coefficients)`` with sum coef * b = 0.  The
    rho = 0 equations are identities after topological identification and are
    returned only when ``r == 0`` is requested explicitly.
    """
    d = table.degree
    V1 = micro.elements[e1].tolist()
    V2 = micro.elements[e2].tolist()
    v1 = V1[l1]
    v2, v3 = V1[(l1 + 1) % 3], V1[(l1 + 2) % 3]
    v4 = V2[l2]
    if set(V2) - {v4} != {v2, v3}:
        raise MeshError(f"elements {e1} and {e2} are not edge-adjacent")
    z1, z2, z3 = barycentric(micro.points[[v1, v2, v3]], micro.points[v4])
    ids1, ids2 = table.ids[e1], table.ids[e2]
    out = []
    for rho in range(0, r + 1):
        for j in range(d - rho, -1, -1):
            k = d - rho - j
            lhs = ids2[_local_index(micro, d, e2, {v4: rho, v2: j, v3: k})]
            pts, cf = [lhs], [1.0]
            for mu in range(rho + 1):
                for nu in range(rho - mu + 1):
                    ka = rho - mu - nu
                    m = factorial(rho) / (factorial(mu) * factorial(nu) * factorial(ka))
                    idx = _local_index(micro, d, e1, {v1: mu, v2: j + nu, v3: k + ka})
                    pts.append(ids1[idx])
                    cf.append(-m * z1**mu * z2**nu * z3**ka)
            if rho == 0 and r > 0:
                continue
            out.append((np.array(pts, dtype=np.int64), np.array(cf)))
    return out


def constraint_matrix(micro: MicroMesh, table: DomainPointTable, r: int):
    """All C^r equations (rho >= 1) as a sparse matrix plus the element pair per row."""
    rows, cols, vals, pairs = [], [], [], []
    n = 0
    if r >= 1:
        for e1, l1, e2, l2 in micro.interior_edges.tolist():
            for pts, cf in smoothness_constraints(micro, table, e1, l1, e2, l2, r):
                # merge duplicate ids (cannot occur for proper pairs, kept for safety)
                rows.extend([n] * len(pts))
                cols.extend(pts.tolist())
                vals.extend(cf.tolist())
                pairs.append((e1, e2))
                n += 1
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, table.n_points))
    A.sum_duplicates()
    return A, np.array(pairs, dtype=np.int64).reshape(-1, 2)


@dataclass
class SplineSpace:
    """C^r spline space on a micro mesh with its free->ordinate transform."""

    degree: int
    smoothness: int
    micro: MicroMesh
    table: DomainPointTable
    mds: np.ndarray                  # free domain-point ids, in DOF order
    C: sp.csr_matrix                 # (Np, n_free) for ordinates b
    C_hom: sp.csr_matrix             # same for homogeneous ordinates w*b
    weights: np.ndarray              # (Np,) geometry weights
    control: np.ndarray              # (Np, 2) geometry control points
    constraints: sp.csr_matrix       # smoothness equations on homogeneous ordinates
    boundary_free: np.ndarray = field(default=None)  # DOF indices whose point lies on the boundary

    def __post_init__(self):
        if self.boundary_free is None:
            self.boundary_free = np.flatnonzero(self.table.on_boundary[self.mds])

    @property
    def n_free(self) -> int:
        return len(self.mds)

    @property
    def n_elements(self) -> int:
        return self.micro.n_elements

    @property
    def element_nodes(self) -> np.ndarray:
        return self.control[self.table.ids]

    @property
    def element_weights(self) -> np.ndarray:
        return self.weights[self.table.ids]

    @property
    def is_rational(self) -> bool:
        return not np.all(self.weights == 1.0)

    def element(self, e: int) -> BezierElement:
        return BezierElement(self.degree, self.control[self.table.ids[e]],
                             self.weights[self.table.ids[e]],
                             tuple(self.micro.elements[e].tolist()))

    def elements(self) -> list[BezierElement]:
        return [self.element(e) for e in range(self.n_elements)]

    def h(self) -> float:
        return self.micro.macro.max_edge_length()


@dataclass
class SplineField:
    space: SplineSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_free,):
            raise ValueError(f"expected {self.space.n_free} coefficients, got {self.coeffs.shape}")

    def ordinates(self) -> np.ndarray:
        return expand(self)

    def element_ordinates(self) -> np.ndarray:
        return expand(self)[self.space.table.ids]


def expand(field: SplineField) -> np.ndarray:
    """All Bezier ordinates ``b = C c`` (one per distinct domain point)."""
    return field.space.C @ field.coeffs


# -- direct construction ----------------------------------------------------

class _Rows:
    """Sparse rows of the transform, keyed by domain point id."""

    def __init__(self, n_points: int):
        self.cols: list = [None] * n_points
        self.vals: list = [None] * n_points
        self.n_free = 0
        self.free_ids: list[int] = []
        self.disks: dict[int, tuple[int, int, int]] = {}   # macro vertex -> free tangent-plane triple

    def known(self, p: int) -> bool:
        return self.cols[p] is not None

    def make_free(self, p: int):
        self.cols[p] = np.array([self.n_free], dtype=np.int64)
        self.vals[p] = np.array([1.0])
        self.free_ids.append(p)
        self.n_free += 1

    def combine(self, targets, M, sources):
        """rows[targets] = M @ rows[sources]."""
        cols = np.unique(np.concatenate([self.cols[s] for s in sources]))
        pos = {c: i for i, c in enumerate(cols.tolist())}
        S = np.zeros((len(sources), len(cols)))
        for r, s in enumerate(sources):
            S[r, [pos[c] for c in self.cols[s].tolist()]] = self.vals[s]
        R = M @ S
        for t, row in zip(targets, R):
            keep = np.abs(row) > 1e-15
            self.cols[t] = cols[keep]
            self.vals[t] = row[keep]

    def matrix(self) -> sp.csr_matrix:
        n = len(self.cols)
        lengths = np.array([len(c) for c in self.cols])
        indptr = np.r_[0, np.cumsum(lengths)]
        return sp.csr_matrix((np.concatenate(self.vals), np.concatenate(self.cols), indptr),
                             shape=(n, self.n_free))


def _vertex_disks(micro: MicroMesh, table: DomainPointTable, rows: _Rows):
    """Free tangent-plane triple at each macro vertex; fill the rest of each disk."""
    d = table.degree
    nv = micro.macro.n_vertices
    E = micro.elements
    incident: dict[int, list[int]] = {v: [] for v in range(nv)}
    for e, verts in enumerate(E.tolist()):
        for v in verts:
            if v < nv:
                incident[v].append(e)
    bedge_at: dict[int, set] = {}
    for e, l in micro.boundary_edges.tolist():
        for p in range(3):
            if p != l:
                bedge_at.setdefault(int(E[e, p]), set()).add(e)
    q = table.coords
    for v in range(nv):
        els = incident[v]
        if not els:
            continue
        on_bdry = [e for e in els if e in bedge_at.get(v, ())]
        disk_el = min(on_bdry) if on_bdry else min(els)
        others = [w for w in E[disk_el].tolist() if w != v]
        pv = table.ids[disk_el, _local_index(micro, d, disk_el, {v: d})]
        p1 = table.ids[disk_el, _local_index(micro, d, disk_el, {v: d - 1, others[0]: 1})]
        p2 = table.ids[disk_el, _local_index(micro, d, disk_el, {v: d - 1, others[1]: 1})]
        # free order: vertex, then the boundary neighbour first when there is one
        for p in (pv, p1, p2):
            if not rows.known(p):
                rows.make_free(p)
        rows.disks[v] = (int(pv), int(p1), int(p2))
        basis = np.column_stack([q[p1] - q[pv], q[p2] - q[pv]])
        for e in els:
            for w in E[e].tolist():
                if w == v:
                    continue
                p = table.ids[e, _local_index(micro, d, e, {v: d - 1, w: 1})]
                if rows.known(p):
                    continue
                a1, a2 = np.linalg.solve(basis, q[p] - q[pv])
                rows.combine([p], np.array([[1 - a1 - a2, a1, a2]]), [pv, p1, p2])


def _macro_resolve(micro: MicroMesh, table: DomainPointTable, A: sp.csr_matrix,
                   pairs: np.ndarray, rows: _Rows):
    """Resolve each macro triangle's remaining ordinates by local elimination."""
    nt = micro.macro.n_triangles
    macro_of = micro.macro_of
    eq_macro = np.maximum(macro_of[pairs[:, 0]], macro_of[pairs[:, 1]]) if len(pairs) else np.zeros(0, int)
    eq_by_macro: dict[int, list[int]] = {}
    for i, m in enumerate(eq_macro.tolist()):
        eq_by_macro.setdefault(m, []).append(i)
    el_by_macro: dict[int, list[int]] = {}
    for e, m in enumerate(macro_of.tolist()):
        el_by_macro.setdefault(m, []).append(e)
    tri_pts = micro.macro.vertices[micro.macro.triangles]
    A = A.tocsr()
    for m in range(nt):
        pts = np.unique(table.ids[el_by_macro[m]].ravel())
        unknown = [p for p in pts.tolist() if not rows.known(p)]
        eqs = eq_by_macro.get(m, [])
        if not unknown:
            continue
        if not eqs:
            for p in unknown:
                rows.make_free(p)
            continue
        sub = A[eqs]
        local_cols = np.unique(sub.indices)
        unknown_set = set(unknown)
        known = [p for p in local_cols.tolist() if rows.known(p)]
        missing = [p for p in local_cols.tolist() if p not in unknown_set and not rows.known(p)]
        if missing:
            raise ConstructionError(f"macro {m}: equation touches unresolved points {missing[:5]}")
        # dependent preference: interior points first, boundary points last
        zeta = barycentric(tri_pts[m], table.coords[unknown])
        inner = np.min(zeta, axis=1)
        order = sorted(range(len(unknown)),
                       key=lambda i: (table.on_boundary[unknown[i]], -round(inner[i], 12), unknown[i]))
        unknown = [unknown[i] for i in order]
        dense = sub[:, local_cols].toarray()
        pos = {p: i for i, p in enumerate(local_cols.tolist())}
        Au = np.zeros((len(eqs), len(unknown)))
        for i, p in enumerate(unknown):
            if p in pos:
                Au[:, i] = dense[:, pos[p]]
        Ak = dense[:, [pos[p] for p in known]]
        scale = np.max(np.abs(dense)) if dense.size else 1.0
        Q = np.zeros((Au.shape[0], 0))
        dep, free = [], []
        for i in range(len(unknown)):
            col = Au[:, i]
            res = col - Q @ (Q.T @ col)
            if np.linalg.norm(res) > 1e-9 * max(scale, np.linalg.norm(col)):
                Q = np.column_stack([Q, res / np.linalg.norm(res)])
                dep.append(i)
            else:
                free.append(i)
        for i in free:
            rows.make_free(unknown[i])
        if not dep:
            continue
        AD = Au[:, dep]
        rhs = np.column_stack([Au[:, free], Ak])
        M, *_ = np.linalg.lstsq(AD, -rhs, rcond=None)
        sources = [unknown[i] for i in free] + known
        rows.combine([unknown[i] for i in dep], M, sources)


def _build_transform(micro: MicroMesh, table: DomainPointTable, r: int):
    A, pairs = constraint_matrix(micro, table, r)
    rows = _Rows(table.n_points)
    if r == 0:
        for p in range(table.n_points):
            rows.make_free(p)
        return A, np.array(rows.free_ids), rows.matrix(), {}
    _vertex_disks(micro, table, rows)
    _macro_resolve(micro, table, A, pairs, rows)
    if not all(rows.known(p) for p in range(table.n_points)):
        raise ConstructionError("some domain points were left undetermined")
    C = rows.matrix()
    resid = abs(A @ C)
    if resid.nnz and resid.max() > 1e-10:
        raise ConstructionError(f"transform violates smoothness equations (max residual {resid.max():.2e})")
    return A, np.array(rows.free_ids, dtype=np.int64), C, rows.disks


def _curve_targets(micro: MicroMesh, table: DomainPointTable) -> dict[int, np.ndarray]:
    """Homogeneous ordinates (w x, w y, w) of points on curved boundary edges."""
    t = micro.macro
    d = table.degree
    out: dict[int, np.ndarray] = {}
    E = micro.elements
    for e, l in micro.boundary_edges.tolist():
        a, b = int(E[e, (l + 1) % 3]), int(E[e, (l + 2) % 3])
        key = (min(a, b), max(a, b))
        me = micro.edge_macro_edge.get(key)
        if me is None or me not in t.edge_curve:
            continue
        ce = t.edge_curve[me]           # oriented from edges[me][0] to edges[me][1]
        va, vb = t.edges[me]
        H = ce.homogeneous(t.vertices[va], t.vertices[vb])

        def param(p):
            if p == va:
                return 0.0
            if p == vb:
                return 1.0
            return micro.edge_param[p][1]

        ta, tb = param(a), param(b)
        lo, hi = min(ta, tb), max(ta, tb)
        seg = H
        if hi < 1.0:
            seg, _ = subdivide_arc(seg, hi)
        if lo > 0.0:
            _, seg = subdivide_arc(seg, lo / hi)
        if ta > tb:
            seg = seg[::-1]
        for _ in range(d - 2):
            seg = elevate_ordinates(seg)
        for k in range(d + 1):
            idx = _local_index(micro, d, e, {a: d - k, b: k} if k not in (0, d) else ({a: d} if k == 0 else {b: d}))
            out[int(table.ids[e, idx])] = seg[k]
    return out


def _build_geometry(micro: MicroMesh, table: DomainPointTable, mds: np.ndarray, C_hom: sp.csr_matrix,
                    disks: dict):
    """Control points and weights of a C^r geometry map matching the boundary arcs."""
    q = table.coords
    if not micro.macro.is_curved:
        return q.copy(), np.ones(len(q))
    d = table.degree
    targets = np.column_stack([q, np.ones(len(q))])
    curve = _curve_targets(micro, table)
    for p, h in curve.items():
        targets[p] = h
    free_vals = targets[mds].copy()
    if disks:
        # each vertex tangent plane must contain both boundary curves' first ordinates
        E = micro.elements
        nv = micro.macro.n_vertices
        bnb: dict[int, list[int]] = {}
        for e, l in micro.boundary_edges.tolist():
            for p in range(3):
                if p == l:
                    continue
                v = int(E[e, p])
                w = int(E[e, 3 - l - p])
                if v < nv:
                    bnb.setdefault(v, []).append(int(table.ids[e, _local_index(micro, d, e, {v: d - 1, w: 1})]))
        pos = {int(p): i for i, p in enumerate(mds.tolist())}
        for v, nbs in bnb.items():
            pv = disks[v][0]
            if len(nbs) != 2 or not any(p in curve for p in nbs):
                continue
            basis = np.column_stack([q[nbs[0]] - q[pv], q[nbs[1]] - q[pv]])
            if abs(np.linalg.det(basis)) < 1e-10 * np.sum(basis**2):
                raise MeshError(f"boundary chords at vertex {v} are collinear next to a curved edge")
            grad = np.linalg.solve(basis.T, np.stack([targets[nbs[0]] - targets[pv],
                                                      targets[nbs[1]] - targets[pv]]))
            for p in disks[v]:
                free_vals[pos[p]] = targets[pv] + (q[p] - q[pv]) @ grad
    hom = C_hom @ free_vals
    for p, h in curve.items():
        if np.max(np.abs(hom[p] - h)) > 1e-11 * max(1.0, np.max(np.abs(h))):
            raise ConstructionError("geometry spline does not reproduce a curved boundary edge")
    w = hom[:, 2]
    if np.any(w <= 0):
        raise ConstructionError("non-positive geometry weight")
    return hom[:, :2] / w[:, None], w


def build_space(micro: MicroMesh, degree: int, smoothness: int) -> SplineSpace:
    """Construct S_d^r on a micro mesh (r = 1 needs PS with d in {2,3} or CT with d = 3)."""
    if smoothness not in (0, 1):
        raise UnsupportedSpaceError("only r = 0 and r = 1 are supported")
    if degree < 1:
        raise UnsupportedSpaceError("degree must be positive")
    if smoothness == 1 and (degree, micro.kind) not in SUPPORTED_C1:
        raise UnsupportedSpaceError(
            f"no C1 macro-element for degree {degree} with split {micro.kind.value!r}; "
            "use ps with degree 2 or 3, or ct with degree 3")
    table = domain_points(micro, degree)
    A, mds, C_hom, disks = _build_transform(micro, table, smoothness)
    control, weights = _build_geometry(micro, table, mds, C_hom, disks)
    if np.all(weights == 1.0):
        C = C_hom
    else:
        C = (sp.diags(1.0 / weights) @ C_hom @ sp.diags(weights[mds])).tocsr()
    return SplineSpace(degree=degree, smoothness=smoothness, micro=micro, table=table, mds=mds,
                       C=C, C_hom=C_hom, weights=weights, control=control, constraints=A)


def build_space_on(t: Triangulation, degree: int, smoothness: int, kind) -> SplineSpace:
    return build_space(split(t, kind), degree, smoothness)


def smooth_refine_smooth(t: Triangulation, degree: int, smoothness: int, kind, levels: int) -> list[SplineSpace]:
    """Spaces on ``levels`` successively quadrisected macro meshes."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    spaces = []
    for _ in range(levels):
        spaces.append(build_space_on(t, degree, smoothness, kind))
        t = refine_uniform(t)
    return spaces


# -- evaluation helpers -----------------------------------------------------

def evaluate_field(field: SplineField, elements, st, derivatives: bool = True):
    """Values (and physical gradient/Hessian) of a field at per-element points.

    ``elements`` (M,), ``st`` (M, P, 2) reference coordinates.
    Returns ``(x, value, grad, hess)`` with shapes (M,P,2), (M,P), (M,P,2), (M,P,3).
    """
    sp_ = field.space
    elements = np.asarray(elements, dtype=np.int64)
    b = expand(field)[sp_.table.ids[elements]]
    batch = evaluate_batch(sp_.degree, sp_.control[sp_.table.ids[elements]],
                           sp_.weights[sp_.table.ids[elements]], st)
    val = np.einsum("mpn,mn->mp", batch.values, b)
    if not derivatives:
        return batch.x, val, None, None
    grad = np.einsum("mpnc,mn->mpc", batch.grad, b)
    hess = np.einsum("mpnc,mn->mpc", batch.hess, b)
    return batch.x, val, grad, hess


@dataclass
class SmoothnessReport:
    max_value_jump: float
    max_grad_jump: float
    max_grad: float
    max_value: float

    @property
    def relative_grad_jump(self) -> float:
        return self.max_grad_jump / self.max_grad if self.max_grad > 0 else self.max_grad_jump


def verify_smoothness(field: SplineField, samples_per_edge: int = 5) -> SmoothnessReport:
    """Largest value and gradient jumps across interior micro edges."""
    sp_ = field.space
    micro = sp_.micro
    IE = micro.interior_edges
    if len(IE) == 0:
        return SmoothnessReport(0.0, 0.0, 0.0, 0.0)
    t = np.arange(1, samples_per_edge + 1) / (samples_per_edge + 1)
    E = micro.elements
    P = micro.points
    e1, l1, e2 = IE[:, 0], IE[:, 1], IE[:, 2]
    a = E[e1, (l1 + 1) % 3]
    b = E[e1, (l1 + 2) % 3]
    X = P[a][:, None, :] * (1 - t)[None, :, None] + P[b][:, None, :] * t[None, :, None]

    def st_in(el):
        tri = P[E[el]]                       # (M, 3, 2)
        v0 = tri[:, 0][:, None, :]
        M = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=-1)  # (M, 2, 2)
        return np.einsum("mij,mpj->mpi", np.linalg.inv(M), X - v0)

    _, f1, g1, _ = evaluate_field(field, e1, st_in(e1))
    _, f2, g2, _ = evaluate_field(field, e2, st_in(e2))
    return SmoothnessReport(
        max_value_jump=float(np.max(np.abs(f1 - f2))),
        max_grad_jump=float(np.max(np.linalg.norm(g1 - g2, axis=-1))),
        max_grad=float(max(np.max(np.linalg.norm(g1, axis=-1)), np.max(np.linalg.norm(g2, axis=-1)))),
        max_value=float(max(np.max(np.abs(f1)), np.max(np.abs(f2)))),
    )


def interpolate_ordinates(space: SplineSpace, func) -> np.ndarray:
    """Free coefficients whose ordinates sample ``func`` at the free domain points.

    Exact (reproduces the function) only for polynomials the space contains
    on straight meshes when ``func`` is itself given in Bezier form; used by
    tests for linear data.
    """
    q = space.table.coords[space.mds]
    return func(q[:, 0], q[:, 1])
