import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from fluidmesh import shapes
from fluidmesh.containment import (
    ElementKind,
    Location,
    build_boundary_grid,
    classify,
    classify_points,
    enforce,
    enforce_all,
    project,
    reflect_at_feature,
    reflect_velocity,
)
from fluidmesh.domain import augment_boundary, build_domain

SQUARE = (np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float), np.array([[0, 1, 2], [0, 2, 3]]))


def prepared(v, t, h_min):
    d = augment_boundary(build_domain(v, t), h_min)
    return d, build_boundary_grid(d)


@pytest.fixture(scope="module")
def square():
    return prepared(*SQUARE, 0.1)


@pytest.fixture(scope="module")
def lshape():
    return prepared(*shapes.l_shape(), 5.0)


@pytest.fixture(scope="module")
def cube():
    return prepared(*shapes.cuboid((1, 1, 1), spacing=0.5), 0.1)


def test_project_bottom_edge(square):
    d, g = square
    p = project([0.5, -0.1, 0.0], g, d)
    np.testing.assert_allclose(p.point, [0.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(p.normal, [0, -1, 0], atol=1e-15)
    assert classify([0.5, -0.1, 0.0], p) is Location.OUTSIDE
    assert p.distance == pytest.approx(0.1)


def test_project_beyond_corner(square):
    d, g = square
    x = [1.05, 1.05, 0.0]
    p = project(x, g, d)
    np.testing.assert_allclose(p.point, [1, 1, 0], atol=1e-12)
    assert p.element[0] is ElementKind.VERTEX
    np.testing.assert_allclose(p.normal, [math.sqrt(0.5), math.sqrt(0.5), 0], atol=1e-12)
    assert classify(x, p) is Location.OUTSIDE


def test_point_on_boundary(square):
    d, g = square
    x = [0.3, 0.0, 0.0]
    assert classify(x, project(x, g, d)) is Location.ON_BOUNDARY


def _agreement(got, expected):
    return np.mean(got == expected)


def test_ray_cast_agreement_unit_square(square):
    d, g = square
    pts = np.random.default_rng(0).uniform(-0.5, 1.5, (10_000, 3))
    pts[:, 2] = 0.0
    inside = classify_points(pts, g, d) != Location.OUTSIDE.value
    ref = oracles.polygon_contains(pts, SQUARE[0][:, :2])
    assert _agreement(inside, ref) >= 0.9999


def test_ray_cast_agreement_l_shape(lshape):
    d, g = lshape
    pts = np.random.default_rng(1).uniform(-30, 40, (10_000, 3))
    pts[:, 2] = 0.0
    inside = classify_points(pts, g, d) != Location.OUTSIDE.value
    ref = oracles.polygon_contains(pts, shapes.L_POLYGON)
    assert _agreement(inside, ref) >= 0.9999


def test_ray_cast_agreement_cube(cube):
    d, g = cube
    pts = np.random.default_rng(2).uniform(-0.5, 1.5, (10_000, 3))
    inside = classify_points(pts, g, d) != Location.OUTSIDE.value
    ref = oracles.surface_contains(pts, d.points, d.triangles)
    assert _agreement(inside, ref) >= 0.9999


def _box_closest(x):
    # independent closest point on the unit cube surface
    c = np.clip(x, 0.0, 1.0)
    if (c == x).all():
        gaps = np.concatenate([x, 1.0 - x])
        k = int(np.argmin(gaps))
        c = x.copy()
        c[k % 3] = 0.0 if k < 3 else 1.0
    return c


def test_projection_matches_box_closest_point(cube):
    d, g = cube
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.15, 1.15, (400, 3))
    for x in pts:
        ref = _box_closest(x)
        # the local search is exact within 1.5 h_min of the boundary
        if np.linalg.norm(x - ref) > 0.15:
            continue
        p = project(x, g, d)
        assert p.distance == pytest.approx(np.linalg.norm(x - ref), abs=1e-12)


def test_projection_matches_brute_force_l(lshape):
    d, g = lshape
    pts = np.random.default_rng(4).uniform(-25, 35, (300, 3))
    pts[:, 2] = 0
    loop = shapes.L_POLYGON
    segs = [((*loop[k], 0.0), (*loop[(k + 1) % len(loop)], 0.0)) for k in range(len(loop))]
    ref = oracles.distance_to_segments(pts, segs)
    for x, r in zip(pts, ref):
        if r > 7.5:
            continue
        assert project(x, g, d).distance == pytest.approx(r, abs=1e-9)


def test_reflect_example():
    np.testing.assert_allclose(reflect_velocity([1, -1, 0], [0, 1, 0]), [1, 1, 0])


unit = st.tuples(*[st.floats(-1, 1)] * 3).map(np.array).filter(lambda n: np.linalg.norm(n) > 1e-3)
vec = st.tuples(*[st.floats(-1e3, 1e3)] * 3).map(np.array)


@given(vec, unit)
def test_reflect_preserves_norm_and_is_involution(v, n):
    n = n / np.linalg.norm(n)
    r = reflect_velocity(v, n)
    scale = max(1.0, np.linalg.norm(v))
    assert np.linalg.norm(r) == pytest.approx(np.linalg.norm(v), abs=1e-12 * scale)
    np.testing.assert_allclose(reflect_velocity(r, n), v, atol=1e-12 * scale)


def test_enforce_projects_and_reflects(square):
    d, g = square
    x, v = enforce([0.5, -0.01, 0.0], [0.3, -1.0, 0.0], g, d)
    np.testing.assert_allclose(x, [0.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(v, [0.3, 1.0, 0.0])
    x2, v2 = enforce(x, v, g, d)
    assert np.array_equal(x, x2) and np.array_equal(v, v2)


def test_enforce_leaves_interior_alone(square):
    d, g = square
    x, v = enforce([0.5, 0.05, 0.0], [0.0, -1.0, 0.0], g, d)
    assert np.array_equal(x, [0.5, 0.05, 0.0]) and np.array_equal(v, [0.0, -1.0, 0.0])


def test_corner_sends_particle_back(square):
    d, g = square
    corner = [i for i, p in enumerate(d.points) if np.allclose(p, [1, 1, 0])][0]
    v = np.array([[1.0, 0.5, 0.0]])
    out = reflect_at_feature(v, np.array([[0.7071, 0.7071, 0]]), [ElementKind.VERTEX], [corner], d)
    np.testing.assert_allclose(out, [[-1.0, -0.5, 0.0]])


def test_random_steps_never_escape_l(lshape):
    d, g = lshape
    rng = np.random.default_rng(5)
    inside = np.array([[0.0, 0.0, 0.0]])
    pts = inside + rng.uniform(-20, 20, (4000, 3)) * [1, 1, 0]
    pts = pts[oracles.polygon_contains(pts, shapes.L_POLYGON)]
    x = pts + rng.normal(scale=2.0, size=pts.shape) * [1, 1, 0]
    v = rng.normal(size=x.shape) * [1, 1, 0]
    enforce_all(x, v, np.ones(len(x), bool), g, d)
    assert (classify_points(x, g, d) != Location.OUTSIDE.value).all()
