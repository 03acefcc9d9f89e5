"""Inside/outside tests by boundary projection, and boundary enforcement.

A query point is projected onto the closest boundary element among those
adjacent to boundary vertices in its neighbor cells. The sign of the offset
from the projection point against that point's normal decides the side.
"""

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .domain import boundary_sites
from .errors import SearchRadiusError
from .spatial import UniformGrid, cell_keys

ON_BOUNDARY_TOL = 1e-12
VERTEX_SNAP = 1e-6
# Cell rings searched for candidate elements around a query cell.
CANDIDATE_RINGS = 2
CREASE_COS = math.cos(math.radians(30.0))  # walls closer than this act as one


class Location(enum.Enum):
    INSIDE = -1
    ON_BOUNDARY = 0
    OUTSIDE = 1


class ElementKind(enum.IntEnum):
    TRIANGLE = 0
    EDGE = 1
    VERTEX = 2


@dataclass
class Projection:
    point: np.ndarray
    normal: np.ndarray
    element: tuple  # (ElementKind, index into the domain's element arrays)
    distance: float
    side: float  # signed offset along the normal (vertex hits use the vote)
    tolerance: float


class BoundaryGrid:
    """Static grid over original and augmented boundary vertices.

    Besides the site grid, a per-cell table of candidate boundary elements is
    precomputed for vectorized projection of many points at once.
    """

    def __init__(self, domain, cell_size, rings=CANDIDATE_RINGS):
        self.cell_size = float(cell_size)
        self.h_min = self.cell_size / 2.0
        self.rings = rings
        self.dim = domain.ndim
        sites, elements = boundary_sites(domain)
        self.sites = sites
        self.site_elements = elements
        self.grid = UniformGrid.build(enumerate(sites), self.cell_size, dim=self.dim)
        self._build_table()
        corners = domain.points[_element_vertices(domain, np.arange(domain.n_elements))]
        self.elem_center = corners.mean(axis=1)
        self.elem_radius = np.linalg.norm(corners - self.elem_center[:, None], axis=2).max(axis=1)

    def _build_table(self):
        per_cell = {}
        for key, ids in self.grid.cells.items():
            per_cell[key] = np.unique(np.concatenate([self.site_elements[i] for i in ids]))
        r = range(-self.rings, self.rings + 1)
        zr = r if self.dim == 3 else (0,)
        offsets = list(itertools.product(r, r, zr))
        gathered = {}
        for key, elems in per_cell.items():
            for dx, dy, dz in offsets:
                gathered.setdefault((key[0] + dx, key[1] + dy, key[2] + dz), []).append(elems)
        keys = np.array(sorted(gathered), dtype=np.int64).reshape(-1, 3)
        if len(keys) == 0:
            self._lo = np.zeros(3, np.int64)
            self._span = np.ones(3, np.int64)
            self._codes = np.zeros(0, np.int64)
            self._ptr = np.zeros(1, np.int64)
            self._elems = np.zeros(0, np.int64)
            return
        self._lo = keys.min(axis=0)
        self._span = keys.max(axis=0) - self._lo + 1
        codes = self._encode(keys)
        order = np.argsort(codes)
        self._codes = codes[order]
        lists = [np.unique(np.concatenate(gathered[tuple(k)])) for k in keys[order]]
        self._ptr = np.concatenate([[0], np.cumsum([len(x) for x in lists])]).astype(np.int64)
        self._elems = np.concatenate(lists).astype(np.int64)

    def _encode(self, keys):
        rel = keys - self._lo
        return (rel[:, 0] * self._span[1] + rel[:, 1]) * self._span[2] + rel[:, 2]

    def candidates(self, points):
        """Flat (query index, element) candidate pairs for ``points`` (n, 3)."""
        keys = cell_keys(points, self.cell_size)
        rel = keys - self._lo
        ok = ((rel >= 0) & (rel < self._span)).all(axis=1)
        q = np.flatnonzero(ok)
        if len(q) == 0 or len(self._codes) == 0:
            empty = np.zeros(0, np.int64)
            return empty, empty
        codes = self._encode(keys[q])
        pos = np.searchsorted(self._codes, codes)
        pos = np.minimum(pos, len(self._codes) - 1)
        hit = self._codes[pos] == codes
        q = q[hit]
        pos = pos[hit]
        start = self._ptr[pos]
        counts = self._ptr[pos + 1] - start
        total = int(counts.sum())
        qi = np.repeat(q, counts)
        first = np.repeat(start - (np.cumsum(counts) - counts), counts)
        return qi, self._elems[first + np.arange(total)]

    def sites_near(self, x):
        return self.grid.neighbors(x, rings=self.rings)


def build_boundary_grid(domain, cell_size=None):
    """Boundary-vertex grid with cell size 2*h_min (taken from the augmentation)."""
    if cell_size is None:
        if domain.augmented is None:
            raise ValueError("augment the domain boundary before building its grid")
        cell_size = 2.0 * domain.augmented.h_min
    return BoundaryGrid(domain, cell_size)


def _closest_on_elements(domain, x, elems):
    """Closest points of x[k] on element elems[k]; returns point, kind, index."""
    pts = domain.points
    if domain.is_planar:
        e = domain.boundary_edges[elems]
        a = pts[e[:, 0]]
        b = pts[e[:, 1]]
        q, t = geometry.closest_points_on_segments(x, a, b)
        kind = np.full(len(elems), ElementKind.EDGE, dtype=np.int64)
        index = elems.copy()
        at_a = t <= 0.0
        at_b = t >= 1.0
        kind[at_a | at_b] = ElementKind.VERTEX
        index[at_a] = e[at_a, 0]
        index[at_b] = e[at_b, 1]
        return q, kind, index
    tris = domain.triangles[elems]
    q, feat = geometry.closest_points_on_triangles(
        x, pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    )
    kind = np.full(len(elems), ElementKind.TRIANGLE, dtype=np.int64)
    index = elems.copy()
    for code, local in ((geometry.EDGE_AB, 0), (geometry.EDGE_BC, 1), (geometry.EDGE_CA, 2)):
        m = feat == code
        kind[m] = ElementKind.EDGE
        index[m] = domain.tri_edges[elems[m], local]
    for code, local in ((geometry.VERT_A, 0), (geometry.VERT_B, 1), (geometry.VERT_C, 2)):
        m = feat == code
        kind[m] = ElementKind.VERTEX
        index[m] = tris[m, local]
    return q, kind, index


def _element_vertices(domain, elems):
    if domain.is_planar:
        return domain.boundary_edges[elems]
    return domain.triangles[elems]


def _locate_pairs(domain, x, qi, elems, n_query, h_min):
    """Reduce candidate pairs to the closest element per query point."""
    q, kind, index = _closest_on_elements(domain, x[qi], elems)
    d2 = np.einsum("ij,ij->i", x[qi] - q, x[qi] - q)
    order = np.lexsort((elems, d2, qi))
    qs = qi[order]
    first = np.ones(len(qs), dtype=bool)
    first[1:] = qs[1:] != qs[:-1]
    sel = order[first]
    found = qi[sel]

    point = q[sel]
    kind = kind[sel]
    index = index[sel]
    elem = elems[sel]

    # Snap projections lying within a tiny distance of a corner onto the vertex.
    corners = _element_vertices(domain, elem)
    snap = VERTEX_SNAP * h_min
    for c in range(corners.shape[1]):
        vpos = domain.points[corners[:, c]]
        near = (kind != ElementKind.VERTEX) & (
            np.linalg.norm(point - vpos, axis=1) <= snap
        )
        kind[near] = ElementKind.VERTEX
        index[near] = corners[near, c]

    normal = np.empty((len(sel), 3))
    for k, arr in (
        (ElementKind.TRIANGLE, domain.face_normals),
        (ElementKind.EDGE, domain.edge_normals),
        (ElementKind.VERTEX, domain.vertex_normals),
    ):
        m = kind == k
        normal[m] = arr[index[m]]
    offset = x[found] - point
    side = np.einsum("ij,ij->i", offset, normal)
    for r in np.flatnonzero(kind == ElementKind.VERTEX):
        side[r] = _vertex_vote(domain, int(index[r]), offset[r], side[r])

    out_point = np.full((n_query, 3), np.nan)
    out_normal = np.full((n_query, 3), np.nan)
    out_side = np.full(n_query, np.nan)
    out_kind = np.full(n_query, -1, dtype=np.int64)
    out_index = np.full(n_query, -1, dtype=np.int64)
    out_point[found] = point
    out_normal[found] = normal
    out_side[found] = side
    out_kind[found] = kind
    out_index[found] = index
    has = np.zeros(n_query, dtype=bool)
    has[found] = True
    return has, out_point, out_normal, out_side, out_kind, out_index


def _vertex_vote(domain, v, offset, s_vertex):
    """Majority of the vertex-normal test and the incident-element tests.

    Ties fall back to the vertex normal. The returned value keeps the vertex
    normal's magnitude so the on-boundary tolerance still applies.
    """
    elems = domain.vertex_elements(v)
    normals = domain.edge_normals[elems] if domain.is_planar else domain.face_normals[elems]
    votes = np.sign(normals @ offset)
    total = np.sign(s_vertex) + votes.sum()
    if total == 0 or np.sign(total) == np.sign(s_vertex):
        return s_vertex
    return np.sign(total) * max(abs(s_vertex), np.abs(normals @ offset).max())


def locate(points, bgrid, domain, fallback=False):
    """Project many points at once.

    Returns a dict of arrays: ``has`` (a candidate was found), ``point``,
    ``normal``, ``side``, ``kind``, ``index``. With ``fallback``, points with
    no nearby boundary vertex are projected against every boundary element.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(x)
    qi, elems = bgrid.candidates(x)
    if fallback:
        covered = np.zeros(n, dtype=bool)
        covered[qi] = True
        missing = np.flatnonzero(~covered)
        if len(missing):
            m = domain.n_elements
            qi = np.concatenate([qi, np.repeat(missing, m)])
            elems = np.concatenate([elems, np.tile(np.arange(m), len(missing))])
    if len(qi) == 0:
        nan3 = np.full((n, 3), np.nan)
        return dict(
            has=np.zeros(n, bool), point=nan3, normal=nan3.copy(),
            side=np.full(n, np.nan), kind=np.full(n, -1), index=np.full(n, -1),
        )
    qi, elems = _prune(x, qi, elems, bgrid, n)
    has, p, nrm, side, kind, index = _locate_pairs(domain, x, qi, elems, n, bgrid.h_min)
    return dict(has=has, point=p, normal=nrm, side=side, kind=kind, index=index)


def _prune(x, qi, elems, bgrid, n):
    """Drop pairs whose element cannot hold the closest point.

    The element centroid lies on the element, so its distance bounds the
    closest distance from above; centroid distance minus the element radius
    bounds it from below. Dropped pairs are strictly farther than the best.
    """
    if len(qi) == 0:
        return qi, elems
    if (qi[1:] < qi[:-1]).any():
        order = np.argsort(qi, kind="stable")
        qi, elems = qi[order], elems[order]
    diff = x[qi] - bgrid.elem_center[elems]
    d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    starts = np.flatnonzero(np.concatenate([[True], qi[1:] != qi[:-1]]))
    counts = np.diff(np.append(starts, len(qi)))
    best = np.repeat(np.minimum.reduceat(d, starts), counts)
    keep = d - bgrid.elem_radius[elems] <= best * (1.0 + 1e-12)
    return qi[keep], elems[keep]


def project(x, bgrid, domain):
    """Closest boundary point to ``x`` among elements near its cell."""
    x = np.asarray(x, dtype=float).reshape(1, 3)
    res = locate(x, bgrid, domain)
    if not res["has"][0]:
        raise SearchRadiusError(
            f"no boundary vertex within {bgrid.rings} cell ring(s) of {x[0].tolist()}"
        )
    point = res["point"][0]
    return Projection(
        point=point,
        normal=res["normal"][0],
        element=(ElementKind(int(res["kind"][0])), int(res["index"][0])),
        distance=float(np.linalg.norm(x[0] - point)),
        side=float(res["side"][0]),
        tolerance=ON_BOUNDARY_TOL * bgrid.h_min,
    )


def _location_from_side(side, tol):
    if abs(side) <= tol:
        return Location.ON_BOUNDARY
    return Location.INSIDE if side < 0 else Location.OUTSIDE


def classify(x, proj):
    """Side of ``x`` relative to the boundary, given its projection."""
    side = proj.side
    if not np.isfinite(side):
        side = float(np.dot(np.asarray(x, dtype=float) - proj.point, proj.normal))
    return _location_from_side(side, proj.tolerance)


def classify_points(points, bgrid, domain):
    """Vectorized classification of arbitrary points (falls back to all elements)."""
    res = locate(points, bgrid, domain, fallback=True)
    tol = ON_BOUNDARY_TOL * bgrid.h_min
    side = res["side"]
    out = np.where(side > tol, Location.OUTSIDE.value, Location.INSIDE.value)
    out[np.abs(side) <= tol] = Location.ON_BOUNDARY.value
    return out


def reflect_velocity(v, n):
    """Mirror ``v`` about the plane with unit normal ``n`` (rows broadcast)."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    dot = np.sum(v * n, axis=-1, keepdims=True)
    return v - 2.0 * dot * n


def enforce(x, v, bgrid, domain):
    """Project an escaped particle back onto the boundary and bounce it."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    proj = project(x, bgrid, domain)
    if classify(x, proj) is Location.OUTSIDE:
        return proj.point.copy(), reflect_velocity(v, proj.normal)
    return x.copy(), v.copy()


def enforce_all(positions, velocities, movable, bgrid, domain, clearance=None):
    """In-place boundary enforcement for every movable particle.

    Particles with no boundary vertex nearby are left alone: the speed cap
    keeps them from having crossed the boundary this step.
    Returns the indices of particles that were projected.

    ``clearance``, if given, is a per-particle lower bound on the distance to
    the boundary (already reduced by the distance moved since it was
    measured). Only particles whose bound is used up are tested; the bound
    is then refreshed in place.
    """
    check = np.asarray(movable, dtype=bool)
    if clearance is not None:
        check = check & (clearance <= 0.0)
    idx = np.flatnonzero(check)
    if len(idx) == 0:
        return idx
    res = locate(positions[idx], bgrid, domain)
    tol = ON_BOUNDARY_TOL * bgrid.h_min
    out = res["has"] & (res["side"] > tol)
    hit = idx[out]
    positions[hit] = res["point"][out]
    if velocities is not None:
        velocities[hit] = reflect_at_feature(
            velocities[hit], res["normal"][out], res["kind"][out], res["index"][out], domain
        )
    if clearance is not None:
        # Within ~1.7 h_min of the boundary the closest element is always a
        # candidate, so the capped distance is a safe lower bound.
        dist = np.linalg.norm(positions[idx] - res["point"], axis=1)
        dist[~res["has"]] = np.inf
        dist[out] = 0.0
        clearance[idx] = np.minimum(dist, bgrid.h_min)
    return hit


def _incident_normals(domain, kind, index):
    if kind == ElementKind.VERTEX:
        elems = domain.vertex_elements(index)
    elif not domain.is_planar and kind == ElementKind.EDGE:
        elems = domain.edge_faces[index]
    else:
        return None
    arr = domain.edge_normals if domain.is_planar else domain.face_normals
    return arr[elems]


def _feature_normals(normals, cos_tol=CREASE_COS):
    """Merge incident normals that differ by less than the crease angle.

    Each group is replaced by its normalized mean, so a shallow crease of a
    faceted smooth surface acts like one wall.
    """
    groups = []
    for n in normals:
        for g in groups:
            if float(g[0] @ n) >= cos_tol:
                g.append(n)
                break
        else:
            groups.append([n])
    out = []
    for g in groups:
        m = np.sum(g, axis=0)
        out.append(m / np.linalg.norm(m))
    return out


def reflect_at_feature(v, normal, kind, index, domain):
    """Reflect velocities of particles projected onto boundary features.

    Face hits (and edge hits in 2D) mirror about the feature normal. At
    corners and sharp creases the velocity is mirrored in turn about every
    incident wall it still points out of, so a corner sends a particle
    straight back like a flat wall instead of turning its motion sideways.
    """
    out = reflect_velocity(v, normal)
    for r in range(len(v)):
        normals = _incident_normals(domain, int(kind[r]), int(index[r]))
        if normals is None:
            continue
        w = v[r].copy()
        for n in _feature_normals(normals):
            d = float(w @ n)
            if d > 0:
                w = w - 2.0 * d * n
        out[r] = w
    return out


def boundary_distance(points, bgrid, domain):
    """Unsigned distance to the boundary (inf where no element is nearby)."""
    res = locate(points, bgrid, domain)
    d = np.linalg.norm(np.atleast_2d(points) - res["point"], axis=1)
    d[~res["has"]] = np.inf
    return d
