import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cross2, grid_mesh
from vonkarman.mesh import (CurvedEdge, MeshError, SplitKind, Triangulation, barycentric, dump_mesh,
                            load_mesh, refine_uniform, split)

SQUARE = """# unit square
vertices 4
0 0
1 0
1 1
0 1
triangles 2
0 1 2
0 2 3
"""

QUARTER = """vertices 3
0 0
1 0
0 1
triangles 1
0 1 2
curved_edges 1
1 2 1 1 0.7071067811865476
"""


def test_single_triangle():
    t = load_mesh("vertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\n")
    assert t.n_triangles == 1
    assert t.areas()[0] == pytest.approx(0.5)


def test_square_has_one_interior_edge():
    t = load_mesh(SQUARE)
    assert len(t.edges) == 5
    assert np.sum(~t.boundary_edge) == 1


def test_clockwise_triangle():
    text = "vertices 3\n0 0\n0 1\n1 0\ntriangles 1\n0 1 2\n"
    with pytest.raises(MeshError, match="orientation"):
        load_mesh(text, strict=True)
    t = load_mesh(text)
    assert t.areas()[0] > 0


def test_parse_error_reports_line():
    with pytest.raises(MeshError) as exc:
        load_mesh("vertices 3\n0 0\n1 zero\n0 1\ntriangles 1\n0 1 2\n")
    assert exc.value.line == 3


def test_block_ends_early():
    with pytest.raises(MeshError, match="ends early"):
        load_mesh("vertices 3\n0 0\n1 0\n")


def test_degenerate_triangle():
    with pytest.raises(MeshError, match="degenerate"):
        load_mesh("vertices 3\n0 0\n1 0\n2 0\ntriangles 1\n0 1 2\n")


def test_hanging_vertex_rejected():
    V = [[0, 0], [2, 0], [0, 2], [1, 0], [2, 2]]
    T = [[0, 1, 2], [3, 1, 4]]
    with pytest.raises(MeshError, match="non-conforming"):
        Triangulation(V, T)


def test_curved_edge_must_be_on_boundary():
    text = SQUARE + "curved_edges 1\n0 2 0.6 0.4 0.9\n"
    with pytest.raises(MeshError, match="not a boundary edge"):
        load_mesh(text)


def test_curved_edge_needs_positive_weight():
    with pytest.raises(MeshError, match="positive weight"):
        load_mesh(QUARTER.replace("0.7071067811865476", "-1"))


def test_dump_round_trip():
    t = load_mesh(QUARTER)
    t2 = load_mesh(dump_mesh(t))
    assert np.array_equal(t.vertices, t2.vertices)
    assert np.array_equal(t.triangles, t2.triangles)
    assert t2.curved_edges == t.curved_edges


def test_barycentric_examples():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(barycentric(tri, [0.25, 0.25]), [0.5, 0.25, 0.25], atol=1e-15)
    assert np.allclose(barycentric(tri, tri[0]), [1, 0, 0], atol=1e-15)
    other = np.array([[0.3, -1.0], [2.0, 0.5], [-0.4, 1.7]])
    assert np.allclose(barycentric(other, other.mean(0)), [1 / 3] * 3, atol=1e-14)


def test_barycentric_degenerate():
    with pytest.raises(MeshError):
        barycentric([[0, 0], [1, 1], [2, 2]], [0.5, 0.5])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3),
       st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_barycentric_round_trip(z, coords):
    tri = np.array(coords).reshape(3, 2)
    area = 0.5 * cross2(tri[1] - tri[0], tri[2] - tri[0])
    if abs(area) < 1e-2:
        return
    zeta = np.array(z) / sum(z)
    p = zeta @ tri
    assert np.allclose(barycentric(tri, p), zeta, atol=1e-13 / abs(area))


def test_split_counts():
    t = load_mesh("vertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\n")
    ct = split(t, "ct")
    assert ct.n_elements == 3
    assert np.all(ct.elements[:, 2] == ct.elements[0, 2])
    assert np.allclose(ct.points[ct.elements[0, 2]], [1 / 3, 1 / 3])
    assert split(t, "ps").n_elements == 6


def test_ps_432_elements():
    V, T = grid_mesh(6)
    t = Triangulation(V, T)
    assert t.n_triangles == 72
    assert split(t, SplitKind.PS).n_elements == 432


def test_ps_boundary_edges_bisected():
    V, T = grid_mesh(3)
    t = Triangulation(V, T)
    m = split(t, "ps")
    mids = 0.5 * (t.vertices[t.edges[:, 0]] + t.vertices[t.edges[:, 1]])
    edge_pts = m.points[m.point_kind == 1]
    assert np.allclose(edge_pts[t.boundary_edge], mids[t.boundary_edge])
    assert np.all(m.macro_of == np.repeat(np.arange(t.n_triangles), 6))


def test_ps_interior_edges_shared():
    t = Triangulation(*grid_mesh(2))
    m = split(t, "ps")
    assert 3 * m.n_elements == 2 * len(m.interior_edges) + len(m.boundary_edges)
    for e1, l1, e2, l2 in m.interior_edges:
        a = set(m.elements[e1].tolist()) - {m.elements[e1][l1]}
        b = set(m.elements[e2].tolist()) - {m.elements[e2][l2]}
        assert a == b


def test_refine_square():
    t = refine_uniform(load_mesh(SQUARE))
    assert t.n_triangles == 8
    assert t.n_vertices == 9


def test_refine_keeps_straight_boundary():
    t = load_mesh(SQUARE)
    r = refine_uniform(t)
    bv = r.vertices[r.boundary_vertices()]
    on_square = np.isclose(bv[:, 0], 0) | np.isclose(bv[:, 0], 1) | np.isclose(bv[:, 1], 0) | np.isclose(bv[:, 1], 1)
    assert np.all(on_square)
    assert set(map(tuple, t.vertices.tolist())) <= set(map(tuple, r.vertices.tolist()))


def test_quarter_circle_subdivision():
    t = load_mesh(QUARTER)
    for _ in range(3):
        t = refine_uniform(t)
        for ce in t.curved_edges:
            pa, pb = t.vertices[ce.a], t.vertices[ce.b]
            pts = ce.evaluate(pa, pb, np.linspace(0, 1, 7))
            assert np.allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0, atol=1e-14, rtol=0)
    assert len(t.curved_edges) == 8


def test_curved_edge_weight_must_be_finite():
    with pytest.raises(MeshError):
        Triangulation([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [CurvedEdge(1, 2, (1, 1), math.inf)])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.floats(-0.15, 0.15), st.floats(-0.15, 0.15))
def test_refinement_preserves_area(n, dx, dy):
    V, T = grid_mesh(n)
    V = V.copy()
    interior = np.all((V > 0) & (V < 1), axis=1)
    V[interior] += np.array([dx, dy]) / n
    t = Triangulation(V, T)
    r = refine_uniform(t)
    assert r.areas().sum() == pytest.approx(t.areas().sum(), rel=1e-12)
    assert r.areas().sum() == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("kind,per", [("ct", 3), ("ps", 6)])
def test_split_refine_commutes_in_count(kind, per):
    t = Triangulation(*grid_mesh(2))
    assert split(refine_uniform(t), kind).n_elements == 4 * split(t, kind).n_elements
    assert split(t, kind).n_elements == per * t.n_triangles
