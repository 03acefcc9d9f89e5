"""Vectorized simplex geometry: areas, volumes, angles, closest points."""

import numpy as np

# Local edge k of a triangle joins corners (k, k+1 mod 3).
TRI_EDGES = np.array([[0, 1], [1, 2], [2, 0]])
# The six edges of a tetrahedron and, for each, the two corners not on it.
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
TET_OPPOSITE = np.array([[2, 3], [1, 3], [1, 2], [0, 3], [0, 2], [0, 1]])
# Edge k and edge 5 - k are disjoint.
TET_EDGE_PAIRS = np.array([[0, 5], [1, 4], [2, 3]])


def unit(v, axis=-1):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return v / n


def triangle_areas(points, tris):
    """Unsigned areas of triangles ``tris`` (m, 3) over ``points`` (n, 3)."""
    p = points[tris]
    return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)


def signed_areas_2d(points, tris):
    p = points[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def signed_volumes(points, tets):
    p = points[tets]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    c = p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0


def triangle_angles(points, tris):
    """Interior angles in degrees, shape (m, 3); column k is the angle at corner k."""
    p = points[tris]
    out = np.empty((len(tris), 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cos = np.einsum("ij,ij->i", u, v) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        out[:, k] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return out


def dihedral_angles(points, tets):
    """Dihedral angles in degrees, shape (m, 6), ordered like ``TET_EDGES``."""
    p = points[tets]
    out = np.empty((len(tets), 6))
    for k, ((i, j), (a, b)) in enumerate(zip(TET_EDGES, TET_OPPOSITE)):
        u = unit(p[:, j] - p[:, i])
        va = p[:, a] - p[:, i]
        vb = p[:, b] - p[:, i]
        va = va - np.einsum("ij,ij->i", va, u)[:, None] * u
        vb = vb - np.einsum("ij,ij->i", vb, u)[:, None] * u
        cos = np.einsum("ij,ij->i", va, vb) / (
            np.linalg.norm(va, axis=1) * np.linalg.norm(vb, axis=1)
        )
        out[:, k] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return out


def closest_points_on_segments(x, a, b):
    """Closest points on segments ``ab`` to points ``x`` (all (n, 3)).

    Returns ``(point, t)`` with ``t`` the clamped segment parameter in [0, 1].
    """
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.einsum("ij,ij->i", x - a, d) / dd
    t = np.where(dd > 0, np.clip(t, 0.0, 1.0), 0.0)
    return a + t[:, None] * d, t


# Feature codes returned by closest_points_on_triangles.
FACE = 0
EDGE_AB, EDGE_BC, EDGE_CA = 1, 2, 3
VERT_A, VERT_B, VERT_C = 4, 5, 6


def closest_points_on_triangles(p, a, b, c):
    """Closest point on triangles (a, b, c) to points p, with the feature hit.

    Region tests follow the standard Voronoi-region walk (vertex, edge, face).
    All inputs have shape (n, 3). Returns ``(point, feature)``; feature uses
    the FACE / EDGE_* / VERT_* codes of this module.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    in_a = (d1 <= 0) & (d2 <= 0)
    in_b = (d3 >= 0) & (d4 <= d3)
    in_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    in_c = (d6 >= 0) & (d5 <= d6)
    in_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    in_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)

    with np.errstate(invalid="ignore", divide="ignore"):
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom

    feature = np.select(
        [in_a, in_b, in_ab, in_c, in_ac, in_bc],
        [VERT_A, VERT_B, EDGE_AB, VERT_C, EDGE_CA, EDGE_BC],
        default=FACE,
    )
    q = a + ab * v[:, None] + ac * w[:, None]
    q = np.where((feature == EDGE_BC)[:, None], b + (c - b) * t_bc[:, None], q)
    q = np.where((feature == EDGE_CA)[:, None], a + ac * t_ac[:, None], q)
    q = np.where((feature == EDGE_AB)[:, None], a + ab * t_ab[:, None], q)
    q = np.where((feature == VERT_C)[:, None], c, q)
    q = np.where((feature == VERT_B)[:, None], b, q)
    q = np.where((feature == VERT_A)[:, None], a, q)
    return q, feature


def segment_segment_closest(p1, q1, p2, q2):
    """Closest points between segments p1q1 and p2q2 (arrays of shape (n, 3)).

    Returns ``(c1, c2)``; degenerate segments collapse to points.
    """
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b
    eps = 1e-300
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 1e-14 * a * e, np.clip((b * f - c * e) / denom, 0, 1), 0.0)
        t = np.where(e > eps, (b * s + f) / e, 0.0)
        s_lo = np.where(a > eps, np.clip(-c / a, 0, 1), 0.0)
        s_hi = np.where(a > eps, np.clip((b - c) / a, 0, 1), 0.0)
    s = np.where(t < 0, s_lo, np.where(t > 1, s_hi, s))
    s = np.where(e > eps, s, s_lo)
    t = np.clip(t, 0, 1)
    return p1 + d1 * s[:, None], p2 + d2 * t[:, None]


def unique_edges(elements):
    """Sorted unique undirected edges of triangles or tetrahedra."""
    elements = np.asarray(elements)
    if elements.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    k = elements.shape[1]
    local = TRI_EDGES if k == 3 else TET_EDGES
    e = elements[:, local].reshape(-1, 2)
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)
