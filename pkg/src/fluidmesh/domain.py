"""Mesh domains: OBJ ingestion, topology checks, normals and boundary augmentation.

A domain is either a planar triangulated region (simulated in a z=0 frame)
or a closed, consistently oriented triangle surface.
"""

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import geometry
from .errors import (
    DegenerateNormalError,
    ObjParseError,
    TopologyError,
    UnsupportedFaceError,
)

log = logging.getLogger(__name__)

PLANAR_TOL = 1e-9
WELD_TOL = 1e-9


class Dimension(enum.Enum):
    PLANAR_2D = 2
    SOLID_3D = 3


# Owner kinds for augmented boundary vertices.
OWNER_EDGE = 1
OWNER_TRIANGLE = 2


@dataclass
class PlanarFrame:
    """Rigid map between world coordinates and the z=0 simulation plane.

    ``rotation`` rows are the local x, y, z axes expressed in world
    coordinates. For domains already lying in a z = const plane the rotation
    is the identity, so in-plane coordinates map back bit-exactly.
    """

    origin: np.ndarray
    rotation: np.ndarray

    def to_local(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if np.array_equal(self.rotation, np.eye(3)):
            local = pts.copy()
            local[:, 2] = 0.0
            return local
        local = (pts - self.origin) @ self.rotation.T
        local[:, 2] = 0.0
        return local

    def to_world(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if np.array_equal(self.rotation, np.eye(3)):
            world = pts.copy()
            world[:, 2] = self.origin[2]
            return world
        return pts @ self.rotation + self.origin


@dataclass
class Augmentation:
    points: np.ndarray  # (p, 3) in the simulation frame
    kind: np.ndarray  # OWNER_EDGE or OWNER_TRIANGLE
    owner: np.ndarray  # boundary edge id or triangle id
    normals: np.ndarray
    h_min: float


@dataclass
class MeshDomain:
    vertices: np.ndarray  # world coordinates after welding
    points: np.ndarray  # simulation frame (z = 0 for planar domains)
    triangles: np.ndarray
    dimension: Dimension
    frame: PlanarFrame | None = None
    boundary_edges: np.ndarray | None = None
    tri_edges: np.ndarray | None = None
    edge_faces: np.ndarray | None = None
    face_normals: np.ndarray | None = None
    edge_normals: np.ndarray | None = None
    vertex_normals: np.ndarray | None = None
    boundary_vertices: np.ndarray | None = None
    area: float = 0.0
    boundary_length: float = 0.0
    volume: float = 0.0
    surface_area: float = 0.0
    augmented: Augmentation | None = None
    _vertex_elements: list | None = field(default=None, repr=False)

    @property
    def is_planar(self):
        return self.dimension is Dimension.PLANAR_2D

    @property
    def ndim(self):
        return self.dimension.value

    @property
    def bbox(self):
        return self.points.min(axis=0), self.points.max(axis=0)

    @property
    def diagonal(self):
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    @property
    def n_elements(self):
        """Number of boundary elements used for projection."""
        if self.is_planar:
            return len(self.boundary_edges)
        return len(self.triangles)

    def vertex_elements(self, v):
        """Boundary elements (edges in 2D, triangles in 3D) incident to vertex v."""
        if self._vertex_elements is None:
            n = len(self.points)
            buckets = [[] for _ in range(n)]
            elems = self.boundary_edges if self.is_planar else self.triangles
            for e, row in enumerate(elems):
                for vid in row:
                    buckets[vid].append(e)
            self._vertex_elements = [np.array(b, dtype=np.int64) for b in buckets]
        return self._vertex_elements[v]

    def to_world(self, points):
        if self.frame is None:
            return np.array(points, dtype=float)
        return self.frame.to_world(points)

    def to_local(self, points):
        if self.frame is None:
            return np.atleast_2d(np.array(points, dtype=float))
        return self.frame.to_local(points)


def parse_obj(text):
    """Parse the ``v`` / ``f`` subset of Wavefront OBJ.

    Returns ``(vertices, faces)`` with 0-based triangle indices. Other record
    types are skipped with one warning per type.
    """
    vertices = []
    faces = []
    skipped = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *fields = line.split()
        if tag == "v":
            if len(fields) < 3:
                raise ObjParseError("vertex record needs 3 coordinates", lineno)
            try:
                vertices.append([float(s) for s in fields[:3]])
            except ValueError as exc:
                raise ObjParseError(f"bad vertex coordinate ({exc})", lineno) from None
        elif tag == "f":
            if len(fields) != 3:
                raise UnsupportedFaceError(
                    f"face with {len(fields)} vertices; only triangles are supported",
                    lineno,
                )
            idx = []
            for tok in fields:
                head = tok.split("/", 1)[0]
                try:
                    i = int(head)
                except ValueError:
                    raise ObjParseError(f"bad face index {tok!r}", lineno) from None
                if i < 0:
                    i = len(vertices) + i + 1
                if i < 1:
                    raise ObjParseError(f"face index {tok!r} out of range", lineno)
                idx.append(i - 1)
            faces.append(idx)
        else:
            if tag not in skipped:
                log.warning("ignoring OBJ record type %r (first at line %d)", tag, lineno)
                skipped.add(tag)
    v = np.array(vertices, dtype=float).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(f) and f.max() >= len(v):
        bad = int(np.argmax(f.max(axis=1) >= len(v)))
        raise ObjParseError(f"face {bad + 1} references a missing vertex")
    return v, f


def load_obj(path):
    """Read an OBJ file into a validated :class:`MeshDomain`."""
    text = Path(path).read_text()
    vertices, faces = parse_obj(text)
    return build_domain(vertices, faces)


def weld(vertices, triangles, tol):
    """Merge vertices closer than ``tol``; returns (vertices, triangles)."""
    if len(vertices) < 2 or tol <= 0:
        return vertices, triangles
    pairs = cKDTree(vertices).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return vertices, triangles
    parent = np.arange(len(vertices))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(vertices))])
    keep, remap = np.unique(roots, return_inverse=True)
    return vertices[keep], remap[triangles]


def _plane_frame(vertices, diag):
    centroid = vertices.mean(axis=0)
    z_extent = np.ptp(vertices[:, 2])
    if z_extent <= PLANAR_TOL * diag:
        return PlanarFrame(np.array([0.0, 0.0, vertices[0, 2]]), np.eye(3))
    _, s, vt = np.linalg.svd(vertices - centroid, full_matrices=False)
    normal = vt[2]
    dist = np.abs((vertices - centroid) @ normal)
    if dist.max() > PLANAR_TOL * diag:
        return None
    u = vt[0]
    v = np.cross(normal, u)
    return PlanarFrame(centroid, np.vstack([u, v, normal]))


def build_domain(vertices, triangles):
    """Validate topology, orient, measure and compute normals."""
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(triangles) == 0:
        raise TopologyError("domain has no triangles")
    if triangles.min() < 0 or triangles.max() >= len(vertices):
        raise TopologyError("triangle references a missing vertex")
    diag = float(np.linalg.norm(np.ptp(vertices, axis=0)))
    vertices, triangles = weld(vertices, triangles, WELD_TOL * diag)
    repeated = (
        (triangles[:, 0] == triangles[:, 1])
        | (triangles[:, 1] == triangles[:, 2])
        | (triangles[:, 0] == triangles[:, 2])
    )
    if repeated.any():
        raise TopologyError(
            f"triangles with repeated vertices: {np.flatnonzero(repeated).tolist()}"
        )
    used = np.unique(triangles)
    if len(used) < len(vertices):
        keep = np.zeros(len(vertices), dtype=bool)
        keep[used] = True
        remap = np.cumsum(keep) - 1
        vertices = vertices[keep]
        triangles = remap[triangles]

    frame = _plane_frame(vertices, diag)
    if frame is not None:
        domain = MeshDomain(
            vertices=vertices,
            points=frame.to_local(vertices),
            triangles=triangles,
            dimension=Dimension.PLANAR_2D,
            frame=frame,
        )
        domain = _topology_2d(domain)
    else:
        domain = MeshDomain(
            vertices=vertices,
            points=vertices.copy(),
            triangles=triangles,
            dimension=Dimension.SOLID_3D,
        )
        domain = _topology_3d(domain)
    return compute_normals(domain)


def _topology_2d(domain):
    pts = domain.points
    tris = domain.triangles.copy()
    area = geometry.signed_areas_2d(pts, tris)
    scale = domain.diagonal**2
    flat = np.abs(area) <= 1e-14 * scale
    if flat.any():
        raise TopologyError(f"zero-area triangles: {np.flatnonzero(flat).tolist()}")
    neg = area < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    directed = tris[:, geometry.TRI_EDGES].reshape(-1, 2)
    undirected = np.sort(directed, axis=1)
    keys, inverse, counts = np.unique(
        undirected, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    over = keys[counts > 2]
    if len(over):
        raise TopologyError("edges shared by more than two triangles", over.tolist())
    boundary = directed[counts[inverse] == 1]
    lengths = np.linalg.norm(pts[boundary[:, 1]] - pts[boundary[:, 0]], axis=1)
    return replace(
        domain,
        triangles=tris,
        boundary_edges=boundary,
        boundary_vertices=np.unique(boundary),
        area=float(np.abs(area).sum()),
        boundary_length=float(lengths.sum()),
    )


def _topology_3d(domain):
    pts = domain.points
    tris = domain.triangles.copy()
    directed = tris[:, geometry.TRI_EDGES].reshape(-1, 2)
    undirected = np.sort(directed, axis=1)
    keys, inverse, counts = np.unique(
        undirected, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    bad = keys[counts != 2]
    if len(bad):
        raise TopologyError(
            f"surface is not watertight: {len(bad)} edges not shared by exactly two triangles",
            bad.tolist(),
        )
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    if (dcounts > 1).any():
        raise TopologyError("inconsistent face orientation across shared edges")
    p = pts[tris]
    volume = np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0
    if volume < 0:
        tris = tris[:, [0, 2, 1]]
        return _topology_3d(replace(domain, triangles=tris))
    if volume == 0:
        raise TopologyError("enclosed volume is zero")
    order = np.argsort(inverse, kind="stable")
    edge_faces = (order // 3).reshape(-1, 2)
    return replace(
        domain,
        triangles=tris,
        boundary_edges=keys,
        tri_edges=inverse.reshape(-1, 3),
        edge_faces=edge_faces,
        boundary_vertices=np.arange(len(pts)),
        volume=float(volume),
        surface_area=float(geometry.triangle_areas(pts, tris).sum()),
    )


def compute_normals(domain):
    """Return a copy of ``domain`` with unit face, edge and vertex normals."""
    pts = domain.points
    n = len(pts)
    if domain.is_planar:
        e = domain.boundary_edges
        d = pts[e[:, 1]] - pts[e[:, 0]]
        edge_n = np.column_stack([d[:, 1], -d[:, 0], np.zeros(len(e))])
        edge_n = _normalize_or_raise(edge_n, "boundary edge")
        vert_sum = np.zeros((n, 3))
        np.add.at(vert_sum, e[:, 0], edge_n)
        np.add.at(vert_sum, e[:, 1], edge_n)
        vert_n = np.zeros((n, 3))
        bv = domain.boundary_vertices
        vert_n[bv] = _normalize_or_raise(vert_sum[bv], "boundary vertex", bv)
        face_n = np.tile([0.0, 0.0, 1.0], (len(domain.triangles), 1))
        return replace(
            domain, face_normals=face_n, edge_normals=edge_n, vertex_normals=vert_n
        )

    tris = domain.triangles
    p = pts[tris]
    face_n = _normalize_or_raise(
        np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), "triangle"
    )
    ef = domain.edge_faces
    edge_n = _normalize_or_raise(face_n[ef[:, 0]] + face_n[ef[:, 1]], "edge")
    angles = np.radians(geometry.triangle_angles(pts, tris))
    vert_sum = np.zeros((n, 3))
    for k in range(3):
        np.add.at(vert_sum, tris[:, k], angles[:, k, None] * face_n)
    vert_n = _normalize_or_raise(vert_sum, "vertex")
    return replace(domain, face_normals=face_n, edge_normals=edge_n, vertex_normals=vert_n)


def _normalize_or_raise(vectors, what, ids=None):
    norms = np.linalg.norm(vectors, axis=1)
    scale = max(float(norms.max(initial=0.0)), 1e-300)
    bad = norms <= 1e-12 * scale
    if bad.any():
        where = np.flatnonzero(bad)
        if ids is not None:
            where = np.asarray(ids)[where]
        raise DegenerateNormalError(f"degenerate {what} normal at {where.tolist()}")
    return vectors / norms[:, None]


def edge_insert_count(length, h):
    """Number of extra vertices placed on a boundary edge of this length."""
    if length <= 4.0 * h:
        return 0
    return max(0, math.ceil(length / (4.0 * h) - 1.0))


def _edge_points(a, b, count):
    if count == 0:
        return np.zeros((0, 3))
    i = np.arange(1, count + 1)[:, None]
    return a + (b - a) * i / (count + 1)


def _triangle_points(pa, pb, pc, h, tol):
    """Interior lattice and third-edge points for one boundary triangle.

    Corners are relabelled so that ``ab`` is the longest edge and ``bc`` the
    shortest. Rows start on ``bc`` and advance parallel to ``ab``.
    """
    corners = [pa, pb, pc]
    lengths = [np.linalg.norm(corners[(k + 1) % 3] - corners[k]) for k in range(3)]
    longest = int(np.argmax(lengths))
    rest = [k for k in range(3) if k != longest]
    shortest = min(rest, key=lambda k: (lengths[k], k))
    ends_long = {longest, (longest + 1) % 3}
    ends_short = {shortest, (shortest + 1) % 3}
    (ib,) = ends_long & ends_short
    (ia,) = ends_long - {ib}
    (ic,) = ends_short - {ib}
    a, b, c = corners[ia], corners[ib], corners[ic]
    n_ab = edge_insert_count(lengths[longest], h)
    n_bc = edge_insert_count(lengths[shortest], h)
    if n_bc == 0:
        return np.zeros((0, 3))
    out = []
    step = (a - b) / (n_ab + 1)
    for i in range(1, n_bc + 1):
        s = i / (n_bc + 1)
        start = b + (c - b) * s
        for j in range(1, n_ab + 2):
            out.append(start + step * j)
        # Intersection of the row with edge ca.
        out.append(c + (a - c) * (1.0 - s))
    pts = np.array(out)
    bary = _barycentric(pts, a, b, c)
    inside = (bary >= -tol).all(axis=1)
    return pts[inside]


def _barycentric(pts, a, b, c):
    v0 = b - a
    v1 = c - a
    v2 = pts - a
    d00 = v0 @ v0
    d01 = v0 @ v1
    d11 = v1 @ v1
    d20 = v2 @ v0
    d21 = v2 @ v1
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return np.column_stack([1.0 - v - w, v, w])


def augment_boundary(domain, h_min):
    """Insert extra boundary vertices so consecutive ones are at most 4*h_min apart."""
    if h_min <= 0:
        raise ValueError("h_min must be positive")
    pts = domain.points
    tol = 1e-9 * domain.diagonal
    chunks, kinds, owners, normals = [], [], [], []
    for eid, (i, j) in enumerate(domain.boundary_edges):
        count = edge_insert_count(np.linalg.norm(pts[j] - pts[i]), h_min)
        new = _edge_points(pts[i], pts[j], count)
        if len(new):
            chunks.append(new)
            kinds.append(np.full(len(new), OWNER_EDGE))
            owners.append(np.full(len(new), eid))
            normals.append(np.tile(domain.edge_normals[eid], (len(new), 1)))
    if not domain.is_planar:
        rel_tol = 1e-9
        for t, (i, j, k) in enumerate(domain.triangles):
            new = _triangle_points(pts[i], pts[j], pts[k], h_min, rel_tol)
            if len(new):
                chunks.append(new)
                kinds.append(np.full(len(new), OWNER_TRIANGLE))
                owners.append(np.full(len(new), t))
                normals.append(np.tile(domain.face_normals[t], (len(new), 1)))
    if not chunks:
        aug = Augmentation(
            np.zeros((0, 3)), np.zeros(0, np.int8), np.zeros(0, np.int64), np.zeros((0, 3)), h_min
        )
        return replace(domain, augmented=aug)
    new_pts = np.vstack(chunks)
    kind = np.concatenate(kinds).astype(np.int8)
    owner = np.concatenate(owners).astype(np.int64)
    nrm = np.vstack(normals)
    keep = _dedupe_against(new_pts, pts[domain.boundary_vertices], tol)
    aug = Augmentation(new_pts[keep], kind[keep], owner[keep], nrm[keep], h_min)
    return replace(domain, augmented=aug)


def _dedupe_against(new_pts, existing, tol):
    """Mask keeping the first of each cluster of ``new_pts`` not near ``existing``."""
    keep = np.ones(len(new_pts), dtype=bool)
    if len(existing):
        d, _ = cKDTree(existing).query(new_pts)
        keep &= d > tol
    tree = cKDTree(new_pts)
    for i, j in sorted(tree.query_pairs(max(tol, 1e-300))):
        if keep[i]:
            keep[j] = False
    return keep


def boundary_sites(domain):
    """All boundary vertices (original then augmented) with their candidate elements.

    Returns ``(points, elements)`` where ``elements[k]`` lists the boundary
    elements (edges in 2D, triangles in 3D) adjacent to site ``k``.
    """
    bv = domain.boundary_vertices
    pts = [domain.points[bv]]
    elements = [domain.vertex_elements(v) for v in bv]
    aug = domain.augmented
    if aug is not None and len(aug.points):
        pts.append(aug.points)
        for kind, owner in zip(aug.kind, aug.owner):
            if kind == OWNER_TRIANGLE or domain.is_planar:
                elements.append(np.array([owner], dtype=np.int64))
            else:
                elements.append(domain.edge_faces[owner].astype(np.int64))
    return np.vstack(pts), elements
