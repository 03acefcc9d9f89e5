import math

import numpy as np
import pytest

from fluidmesh import io, shapes
from fluidmesh.domain import (
    Dimension,
    augment_boundary,
    boundary_sites,
    build_domain,
    edge_insert_count,
    load_obj,
    parse_obj,
)
from fluidmesh.errors import ObjParseError, TopologyError, UnsupportedFaceError

SQUARE_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
f 1 2 3
f 1 3 4
"""


def regular_tet_surface(side=1.0):
    v = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
    ) * side / (2.0 * math.sqrt(2.0))
    t = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return v, t


def test_unit_square_measures(tmp_path):
    path = tmp_path / "sq.obj"
    path.write_text(SQUARE_OBJ)
    d = load_obj(path)
    assert d.dimension is Dimension.PLANAR_2D
    assert d.area == pytest.approx(1.0)
    assert d.boundary_length == pytest.approx(4.0)


def test_rectangle_measures():
    d = build_domain(*shapes.rectangle(100, 50))
    assert d.area == pytest.approx(5000.0)
    assert d.boundary_length == pytest.approx(300.0)


def test_quad_face_rejected():
    text = SQUARE_OBJ + "f 1 2 3 4\n"
    with pytest.raises(UnsupportedFaceError) as info:
        parse_obj(text)
    assert info.value.line == 7


def test_malformed_vertex_reports_line():
    with pytest.raises(ObjParseError) as info:
        parse_obj("v 0 0 0\nv 1 x 0\n")
    assert info.value.line == 2


def test_missing_vertex_reference():
    with pytest.raises(ObjParseError):
        parse_obj("v 0 0 0\nf 1 2 3\n")


def test_open_surface_lists_edges():
    v, t = regular_tet_surface()
    with pytest.raises(TopologyError) as info:
        build_domain(v, t[:3])
    assert len(info.value.edges) == 3


def test_unit_square_edge_normal():
    v, f = parse_obj(SQUARE_OBJ)
    d = build_domain(v, f)
    for k, (i, j) in enumerate(d.boundary_edges):
        a, b = d.points[i], d.points[j]
        if a[1] == 0 and b[1] == 0:
            np.testing.assert_allclose(d.edge_normals[k], [0, -1, 0], atol=1e-15)
            break
    else:
        pytest.fail("bottom edge not found")


def test_cube_corner_vertex_normal():
    d = build_domain(*shapes.cuboid((2, 2, 2), spacing=2))
    for v, p in enumerate(d.points):
        expected = np.sign(p - 1.0) / math.sqrt(3.0)
        np.testing.assert_allclose(d.vertex_normals[v], expected, atol=1e-12)


def test_coplanar_edge_normal_equals_face_normal():
    d = build_domain(*shapes.cuboid((2, 2, 2), spacing=1))
    for e, (f0, f1) in enumerate(d.edge_faces):
        if np.allclose(d.face_normals[f0], d.face_normals[f1]):
            np.testing.assert_allclose(d.edge_normals[e], d.face_normals[f0], atol=1e-12)


def test_inverted_surface_is_reoriented():
    v, t = shapes.cuboid((1, 2, 3), spacing=1)
    d = build_domain(v, t[:, [0, 2, 1]])
    assert d.volume == pytest.approx(6.0)
    c = d.points.mean(axis=0)
    centers = d.points[d.triangles].mean(axis=1)
    assert (np.einsum("ij,ij->i", d.face_normals, centers - c) > 0).all()


def test_volume_matches_centroid_fan():
    d = build_domain(*shapes.cylinder(segments=24))
    c = d.points.mean(axis=0)
    p = d.points[d.triangles] - c
    fan = np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0
    assert d.volume == pytest.approx(fan, rel=1e-9)


def test_tilted_planar_domain_round_trips():
    v, t = shapes.rectangle(10, 5, spacing=5)
    rot = np.array([[1, 0, 0], [0, math.cos(0.3), -math.sin(0.3)], [0, math.sin(0.3), math.cos(0.3)]])
    d = build_domain(v @ rot.T + [1.0, 2.0, 3.0], t)
    assert d.is_planar
    np.testing.assert_allclose(d.points[:, 2], 0.0, atol=1e-12)
    np.testing.assert_allclose(d.to_world(d.points), d.vertices, atol=1e-12)
    assert d.area == pytest.approx(50.0)


def test_obj_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    v, t = shapes.cuboid((1.0, 2.0, 3.0), spacing=1.0)
    v = v + rng.normal(scale=1e-3, size=v.shape)
    io.write_obj(tmp_path / "c.obj", v, t)
    v2, t2 = parse_obj((tmp_path / "c.obj").read_text())
    assert np.array_equal(v, v2)
    assert np.array_equal(t, t2)


def test_edge_insert_counts():
    assert edge_insert_count(9.0, 1.0) == 2
    assert edge_insert_count(3.0, 1.0) == 0


def test_nine_h_edge_gets_thirds():
    # a single long bottom edge of length 9
    v = np.array([[0, 0, 0], [9, 0, 0], [4.5, 1, 0]], dtype=float)
    d = augment_boundary(build_domain(v, [[0, 1, 2]]), 1.0)
    xs = sorted(p[0] for p in d.augmented.points if abs(p[1]) < 1e-12)
    np.testing.assert_allclose(xs, [3.0, 6.0])


def test_equilateral_face_coverage():
    h = 1.0
    v, t = regular_tet_surface(side=12.0)
    d = augment_boundary(build_domain(v, t), h)
    sites, _ = boundary_sites(d)
    a, b, c = d.points[d.triangles[0]]
    on_face = [p for p, k, o in zip(d.augmented.points, d.augmented.kind, d.augmented.owner) if k == 2 and o == 0]
    for p in on_face:
        # barycentric check: inside or on the triangle
        m = np.column_stack([b - a, c - a])
        uv, *_ = np.linalg.lstsq(m, p - a, rcond=None)
        assert uv.min() >= -1e-9 and uv.sum() <= 1 + 1e-9
    n = 40
    samples = [a + (b - a) * i / n + (c - a) * j / n for i in range(n + 1) for j in range(n + 1 - i)]
    dist = np.min(np.linalg.norm(np.array(samples)[:, None] - sites[None], axis=2), axis=1)
    assert dist.max() <= 2.0 * math.sqrt(2.0) * h


def test_planar_boundary_spacing_bound():
    h = 1.0
    d = augment_boundary(build_domain(*shapes.l_shape()), h)
    sites, _ = boundary_sites(d)
    for i, j in d.boundary_edges:
        a, b = d.points[i], d.points[j]
        on = [s for s in sites if np.linalg.norm(np.cross(b - a, s - a)) < 1e-9 and
              -1e-9 <= np.dot(s - a, b - a) <= np.dot(b - a, b - a) + 1e-9]
        ts = sorted(np.dot(s - a, b - a) / np.linalg.norm(b - a) for s in on)
        assert max(np.diff(ts)) <= 4.0 * h + 1e-9
