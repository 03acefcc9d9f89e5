"""Delaunay meshing of particle positions, domain filtering and quality reports."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from . import geometry
from .containment import Location, classify_points
from .errors import DegenerateInputError, EmptyMeshError, FilterError

DEGENERATE_TOL = 1e-12
HIST_BIN = 5.0


@dataclass
class SimplexMesh:
    nodes: np.ndarray
    elements: np.ndarray
    dim: int
    boundary: np.ndarray | None = None
    fixed: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.nodes)
        if self.boundary is None:
            self.boundary = np.zeros(n, dtype=bool)
        if self.fixed is None:
            self.fixed = np.zeros(n, dtype=bool)

    @property
    def edges(self):
        return geometry.unique_edges(self.elements)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def measures(self):
        """Signed areas (2D) or volumes (3D) of the elements."""
        if self.dim == 2:
            return geometry.signed_areas_2d(self.nodes, self.elements)
        return geometry.signed_volumes(self.nodes, self.elements)

    def compact(self):
        """Drop nodes no element references, renumbering the rest."""
        used = np.zeros(len(self.nodes), dtype=bool)
        used[self.elements.ravel()] = True
        remap = np.cumsum(used) - 1
        return SimplexMesh(
            nodes=self.nodes[used],
            elements=remap[self.elements],
            dim=self.dim,
            boundary=self.boundary[used],
            fixed=self.fixed[used],
        )


def _longest_edges(nodes, elements):
    local = geometry.TRI_EDGES if elements.shape[1] == 3 else geometry.TET_EDGES
    p = nodes[elements]
    d = p[:, local[:, 1]] - p[:, local[:, 0]]
    return np.linalg.norm(d, axis=2).max(axis=1)


def delaunay(points, dim):
    """Delaunay triangulation (dim=2) or tetrahedralization (dim=3).

    Near-zero-measure elements are dropped and the rest are oriented
    counterclockwise / positively.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    if len(pts) < dim + 1:
        raise DegenerateInputError(f"need at least {dim + 1} points, got {len(pts)}")
    coords = pts[:, :dim]
    centered = coords - coords.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise DegenerateInputError("points are collinear" if dim == 2 else "points are coplanar")
    tri = Delaunay(coords)
    elems = tri.simplices.astype(np.int64)
    mesh = SimplexMesh(pts.copy(), elems, dim)
    return _clean(mesh)


def _clean(mesh):
    if len(mesh.elements) == 0:
        return mesh
    m = mesh.measures()
    lmax = _longest_edges(mesh.nodes, mesh.elements)
    keep = np.abs(m) > DEGENERATE_TOL * lmax**mesh.dim
    elems = mesh.elements[keep]
    neg = m[keep] < 0
    elems[neg] = elems[neg][:, [1, 0] + list(range(2, mesh.dim + 1))]
    mesh.elements = elems
    return mesh


def centroids(mesh):
    return mesh.nodes[mesh.elements].mean(axis=1)


def filter_to_domain(mesh, domain, bgrid, compact=True):
    """Remove elements whose centroid lies outside the domain."""
    if len(mesh.elements) == 0:
        raise FilterError("mesh has no elements to filter")
    where = classify_points(centroids(mesh), bgrid, domain)
    keep = where != Location.OUTSIDE.value
    if not keep.any():
        raise FilterError("every element centroid lies outside the domain")
    out = SimplexMesh(
        nodes=mesh.nodes,
        elements=mesh.elements[keep],
        dim=mesh.dim,
        boundary=mesh.boundary,
        fixed=mesh.fixed,
    )
    return out.compact() if compact else out


def edge_length_error(mesh, field):
    """Signed mean relative deviation of edge lengths from the target size."""
    edges = mesh.edges
    if len(edges) == 0:
        raise EmptyMeshError("mesh has no edges")
    a = mesh.nodes[edges[:, 0]]
    b = mesh.nodes[edges[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    target = field.pair_size(a, b)
    return float(np.mean((length - target) / target))


@dataclass
class QualityReport:
    n_nodes: int
    n_elements: int
    e_avg: float
    angles: np.ndarray  # triangle angles (2D) or dihedral angles (3D), degrees
    histogram: list = field(default_factory=list)  # (bin_start, bin_end, count)
    min_angle: float = float("nan")
    max_angle: float = float("nan")
    quality: np.ndarray | None = None  # tetrahedron q values (3D)
    quality_histogram: list = field(default_factory=list)

    @property
    def min_quality(self):
        if self.quality is None or len(self.quality) == 0:
            return float("nan")
        return float(self.quality.min())

    def fraction_within(self, lo, hi):
        a = self.angles
        return float(np.mean((a >= lo) & (a <= hi))) if len(a) else float("nan")


def histogram(values, width, lo, hi):
    edges = np.arange(lo, hi + width / 2, width)
    counts, _ = np.histogram(values, bins=edges)
    return [(float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)]


def quality_report(mesh, field):
    if len(mesh.elements) == 0:
        raise EmptyMeshError("mesh has no elements")
    if mesh.dim == 2:
        angles = geometry.triangle_angles(mesh.nodes, mesh.elements).ravel()
        q = None
        q_hist = []
    else:
        from .postopt import tet_qualities

        angles = geometry.dihedral_angles(mesh.nodes, mesh.elements).ravel()
        q = tet_qualities(mesh.nodes, mesh.elements)
        q_hist = histogram(q, 0.1, 0.0, 1.0)
    return QualityReport(
        n_nodes=mesh.n_nodes,
        n_elements=mesh.n_elements,
        e_avg=edge_length_error(mesh, field),
        angles=angles,
        histogram=histogram(angles, HIST_BIN, 0.0, 180.0),
        min_angle=float(angles.min()),
        max_angle=float(angles.max()),
        quality=q,
        quality_histogram=q_hist,
    )
