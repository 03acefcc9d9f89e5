import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from fluidmesh import geometry, shapes
from fluidmesh.containment import build_boundary_grid
from fluidmesh.domain import augment_boundary, build_domain
from fluidmesh.errors import DegenerateInputError, EmptyMeshError, FilterError
from fluidmesh.sizefield import Uniform
from fluidmesh.triangulate import (
    SimplexMesh,
    delaunay,
    edge_length_error,
    filter_to_domain,
    quality_report,
)


def _hull_area(p):
    # Andrew's monotone chain, then the shoelace formula
    pts = sorted(map(tuple, p[:, :2]))

    def half(seq):
        out = []
        for q in seq:
            while len(out) >= 2 and (
                (out[-1][0] - out[-2][0]) * (q[1] - out[-2][1]) - (out[-1][1] - out[-2][1]) * (q[0] - out[-2][0])
            ) <= 0:
                out.pop()
            out.append(q)
        return out

    hull = half(pts)[:-1] + half(pts[::-1])[:-1]
    return 0.5 * abs(sum(a[0] * b[1] - b[0] * a[1] for a, b in zip(hull, hull[1:] + hull[:1])))


def test_unit_square_two_triangles():
    m = delaunay(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float), 2)
    assert m.n_elements == 2
    assert m.measures().sum() == pytest.approx(1.0)


@pytest.mark.parametrize("pts,dim", [
    (np.column_stack([np.arange(5.0), np.arange(5.0), np.zeros(5)]), 2),
    (np.random.default_rng(0).uniform(size=(10, 3)) * [1, 1, 0], 3),
    (np.zeros((2, 3)), 2),
])
def test_degenerate_inputs(pts, dim):
    with pytest.raises(DegenerateInputError):
        delaunay(pts, dim)


@pytest.mark.parametrize("dim", [2, 3])
def test_empty_circumsphere_small(dim):
    rng = np.random.default_rng(dim)
    n = 20 if dim == 2 else 15
    pts = rng.uniform(size=(n, 3))
    if dim == 2:
        pts[:, 2] = 0
    m = delaunay(pts, dim)
    assert (m.measures() > 0).all()
    assert oracles.empty_circumsphere_violations(m.nodes[:, :dim], m.elements) == 0


@given(st.integers(0, 2**32 - 1))
def test_planar_triangulation_covers_hull(seed):
    pts = np.random.default_rng(seed).uniform(size=(40, 3)) * [1, 1, 0]
    m = delaunay(pts, 2)
    assert m.measures().sum() == pytest.approx(_hull_area(pts), rel=1e-9)


def test_shuffled_input_gives_same_edges():
    pts = np.random.default_rng(5).uniform(size=(60, 3))
    perm = np.random.default_rng(6).permutation(60)
    a = delaunay(pts, 3)
    b = delaunay(pts[perm], 3)
    ea = {tuple(e) for e in a.edges}
    eb = {tuple(sorted((perm[i], perm[j]))) for i, j in b.edges}
    assert ea == eb


def test_filter_keeps_convex_domain():
    d = augment_boundary(build_domain(*shapes.rectangle()), 10.0)
    g = build_boundary_grid(d)
    pts = np.random.default_rng(1).uniform([0, 0, 0], [100, 50, 0], (80, 3))
    m = delaunay(np.vstack([d.points, pts]), 2)
    assert filter_to_domain(m, d, g).n_elements == m.n_elements


def test_filter_trims_l_shape():
    d = augment_boundary(build_domain(*shapes.l_shape()), 5.0)
    g = build_boundary_grid(d)
    pts = np.random.default_rng(2).uniform(-20, 30, (300, 3)) * [1, 1, 0]
    pts = pts[oracles.polygon_contains(pts, shapes.L_POLYGON)]
    m = delaunay(np.vstack([d.points, pts]), 2)
    f = filter_to_domain(m, d, g)
    assert f.n_elements < m.n_elements
    cent = f.nodes[f.elements].mean(axis=1)
    assert oracles.polygon_contains(cent, shapes.L_POLYGON).all()
    # compaction keeps coordinates and drops unused nodes
    used = np.unique(f.elements)
    assert len(used) == f.n_nodes
    assert {tuple(p) for p in f.nodes} <= {tuple(p) for p in m.nodes}
    again = filter_to_domain(f, d, g)
    assert np.array_equal(again.elements, f.elements)


def test_filter_rejects_fully_outside():
    d = augment_boundary(build_domain(*shapes.rectangle()), 10.0)
    g = build_boundary_grid(d)
    far = delaunay(np.array([[500, 500, 0], [510, 500, 0], [500, 510, 0]], float), 2)
    with pytest.raises(FilterError):
        filter_to_domain(far, d, g)


class _EdgeMesh(SimplexMesh):
    def __init__(self, nodes, edges):
        super().__init__(nodes, np.zeros((0, 3), np.int64), 2)
        self._edges = np.asarray(edges)

    @property
    def edges(self):
        return self._edges


def test_edge_length_error_examples():
    nodes = np.array([[0, 0, 0], [11, 0, 0], [9, 0, 0]], float)
    assert edge_length_error(_EdgeMesh(nodes, [[0, 1], [0, 2]]), Uniform(10.0)) == pytest.approx(0.0, abs=1e-15)
    nodes = np.array([[0, 0, 0], [12, 0, 0]], float)
    assert edge_length_error(_EdgeMesh(nodes, [[0, 1]]), Uniform(10.0)) == pytest.approx(0.2)
    with pytest.raises(EmptyMeshError):
        edge_length_error(_EdgeMesh(nodes, np.zeros((0, 2), int)), Uniform(10.0))


def test_equilateral_angles():
    nodes = np.array([[0, 0, 0], [1, 0, 0], [0.5, math.sqrt(3) / 2, 0]])
    r = quality_report(SimplexMesh(nodes, np.array([[0, 1, 2]]), 2), Uniform(1.0))
    np.testing.assert_allclose(r.angles, 60.0)
    assert r.e_avg == pytest.approx(0.0, abs=1e-15)
    assert sum(c for *_, c in r.histogram) == 3


def test_regular_tet_dihedral():
    nodes = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    r = quality_report(SimplexMesh(nodes, np.array([[0, 1, 2, 3]]), 3), Uniform(2 * math.sqrt(2)))
    np.testing.assert_allclose(r.angles, math.degrees(math.acos(1 / 3)))
    assert r.min_quality == pytest.approx(1.0)
    assert r.fraction_within(70, 71) == 1.0


@given(st.integers(0, 2**32 - 1))
def test_dihedrals_match_normal_oracle(seed):
    p = np.random.default_rng(seed).normal(size=(4, 3))
    if abs(geometry.signed_volumes(p, np.array([[0, 1, 2, 3]]))[0]) < 1e-3:
        return
    got = geometry.dihedral_angles(p, np.array([[0, 1, 2, 3]]))[0]
    ref = [oracles.dihedral_by_normals(p.tolist(), i, j) for i, j in geometry.TET_EDGES]
    np.testing.assert_allclose(got, ref, atol=1e-7)


def test_empty_report():
    with pytest.raises(EmptyMeshError):
        quality_report(SimplexMesh(np.zeros((3, 3)), np.zeros((0, 3), np.int64), 2), Uniform(1.0))
