"""Target edge length fields: uniform, radial preset, and discrete grid."""

import numpy as np
from scipy.spatial import Delaunay

from .errors import InputError


class SizeField:
    """Base class. Subclasses implement :meth:`size_at` on (n, 3) arrays."""

    h_min: float
    h_max: float

    def size_at(self, x):
        raise NotImplementedError

    def pair_size(self, xi, xj):
        """Mean of the endpoint sizes."""
        return 0.5 * (self.size_at(xi) + self.size_at(xj))

    @property
    def is_uniform(self):
        return False


class Uniform(SizeField):
    def __init__(self, h):
        if not h > 0:
            raise InputError("uniform size must be positive")
        self.h = float(h)
        self.h_min = self.h_max = self.h

    def size_at(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.h
        return np.full(len(x), self.h)

    @property
    def is_uniform(self):
        return True

    def __repr__(self):
        return f"Uniform({self.h})"


class RadialLinear(SizeField):
    """Size decreasing linearly with distance from an axis parallel to z.

    ``h = (1 - falloff * rho / inner_radius) * r`` for ``rho < inner_radius``
    and ``(1 - falloff) * r`` beyond it.
    """

    def __init__(self, r=25.0, inner_radius=35.0, falloff=0.4, center=(0.0, 0.0)):
        if not (r > 0 and inner_radius > 0 and 0 <= falloff < 1):
            raise InputError("invalid radial size parameters")
        self.r = float(r)
        self.inner_radius = float(inner_radius)
        self.falloff = float(falloff)
        self.center = np.asarray(center, dtype=float)
        self.h_min = (1.0 - self.falloff) * self.r
        self.h_max = self.r

    def size_at(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        rho = np.hypot(x[:, 0] - self.center[0], x[:, 1] - self.center[1])
        h = np.where(
            rho < self.inner_radius,
            (1.0 - self.falloff * rho / self.inner_radius) * self.r,
            (1.0 - self.falloff) * self.r,
        )
        return float(h[0]) if single else h

    def __repr__(self):
        return f"RadialLinear(r={self.r}, inner_radius={self.inner_radius}, falloff={self.falloff})"


PRESETS = {"radial": RadialLinear}


class Discrete(SizeField):
    """Piecewise-constant size stored on a uniform lattice of cells.

    Attributes
    ----------
    origin : ndarray
        Lower corner of the lattice bounding box.
    cell : float
        Cell edge length (a quarter of the smallest size).
    values : ndarray
        Cell sizes, shape (nx, ny, nz).
    """

    def __init__(self, origin, cell, values, anchors):
        self.origin = np.asarray(origin, dtype=float)
        self.cell = float(cell)
        self.values = np.asarray(values, dtype=float)
        self.anchors = anchors
        self.h_min = float(self.values.min())
        self.h_max = float(self.values.max())

    def cell_index(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = np.floor((x - self.origin) / self.cell).astype(np.int64)
        return np.clip(idx, 0, np.array(self.values.shape) - 1)

    def size_at(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.cell_index(x)
        h = self.values[idx[:, 0], idx[:, 1], idx[:, 2]]
        return float(h[0]) if x.ndim == 1 else h

    def __repr__(self):
        return f"Discrete(shape={self.values.shape}, h_min={self.h_min}, h_max={self.h_max})"


def build_discrete(domain, anchors, margin=0.0):
    """Interpolate anchor sizes onto a lattice covering the domain.

    Parameters
    ----------
    domain : MeshDomain
        Anchors are given in the domain's simulation frame.
    anchors : array_like
        Rows ``(x, y, z, h)``.
    margin : float, optional
        Padding added around the domain bounding box (default 0, the tight box).
    """
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 4)
    if len(anchors) == 0:
        raise InputError("at least one size anchor is required")
    pos = anchors[:, :3].copy()
    size = anchors[:, 3]
    if not (size > 0).all():
        raise InputError("anchor sizes must be positive")
    planar = domain.is_planar
    ndim = 2 if planar else 3
    if planar:
        pos[:, 2] = 0.0

    _check_duplicates(pos, size)
    h_min = float(size.min())
    lo, hi = domain.bbox
    lo = lo - margin
    hi = hi + margin
    if planar:
        lo[2] = hi[2] = 0.0
    eps = 1e-9 * max(float(np.linalg.norm(hi - lo)), 1.0)
    outside = ((pos[:, :ndim] < lo[:ndim] - eps) | (pos[:, :ndim] > hi[:ndim] + eps)).any(axis=1)
    if outside.any():
        raise InputError(f"size anchors outside the bounding box: {np.flatnonzero(outside).tolist()}")

    cell = h_min / 4.0
    shape = np.maximum(np.ceil((hi - lo) / cell).astype(np.int64), 1)
    if planar:
        shape[2] = 1

    # Box corners are implicit h_min anchors unless a user anchor sits there.
    corners = _box_corners(lo, hi, ndim)
    bg_pts = np.vstack([pos[:, :ndim], corners])
    bg_size = np.concatenate([size, np.full(len(corners), h_min)])
    bg_pts, keep = np.unique(bg_pts, axis=0, return_index=True)
    bg_size = bg_size[keep]

    axes = [lo[d] + (np.arange(shape[d]) + 0.5) * cell for d in range(ndim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centroids = np.column_stack([m.ravel() for m in mesh])
    values = _interpolate(bg_pts, bg_size, centroids).reshape(shape[:ndim])
    if planar:
        values = values[:, :, None]

    idx = np.floor((pos - lo) / cell).astype(np.int64)
    idx = np.clip(idx, 0, shape - 1)
    for (i, j, k), h in sorted(zip(map(tuple, idx), size), key=lambda t: -t[1]):
        values[i, j, k] = h
    return Discrete(lo, cell, values, anchors)


def _check_duplicates(pos, size):
    _, inv = np.unique(pos, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    for g in np.unique(inv):
        s = size[inv == g]
        if np.ptp(s) > 0:
            raise InputError(f"anchors at {pos[inv == g][0].tolist()} have conflicting sizes")


def _box_corners(lo, hi, ndim):
    grids = np.meshgrid(*[[lo[d], hi[d]] for d in range(ndim)], indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def _interpolate(points, values, queries):
    """Barycentric interpolation in a Delaunay mesh of ``points``.

    Queries outside every simplex use the simplex whose smallest barycentric
    coordinate is largest, with the result clamped to the value range.
    """
    tri = Delaunay(points)
    simplex = tri.find_simplex(queries)
    out = np.empty(len(queries))
    inside = simplex >= 0
    bary = _bary(tri, simplex[inside], queries[inside])
    out[inside] = np.einsum("ij,ij->i", bary, values[tri.simplices[simplex[inside]]])
    missing = np.flatnonzero(~inside)
    every = np.arange(len(tri.simplices))
    for q in missing:
        allb = _bary(tri, every, np.repeat(queries[q : q + 1], len(every), axis=0))
        best = int(np.argmax(allb.min(axis=1)))
        out[q] = allb[best] @ values[tri.simplices[best]]
    lo, hi = values.min(), values.max()
    return np.clip(out, lo, hi)


def _bary(tri, simplex, q):
    t = tri.transform[simplex]
    ndim = q.shape[1]
    b = np.einsum("ijk,ik->ij", t[:, :ndim], q - t[:, ndim])
    return np.column_stack([b, 1.0 - b.sum(axis=1)])


def make_field(spec, domain=None):
    """Build a field from a config mapping.

    Recognized forms: ``{"h": 10}``, ``{"preset": "radial", "params": {...}}``
    and ``{"anchors": [[x, y, z, h], ...]}``.
    """
    if "anchors" in spec and spec["anchors"] is not None:
        if domain is None:
            raise InputError("a discrete size field needs the domain")
        anchors = np.asarray(spec["anchors"], dtype=float).reshape(-1, 4)
        local = domain.to_local(anchors[:, :3])
        return build_discrete(domain, np.column_stack([local, anchors[:, 3]]))
    if "preset" in spec and spec["preset"] is not None:
        name = spec["preset"]
        if name not in PRESETS:
            raise InputError(f"unknown size preset {name!r}")
        return PRESETS[name](**spec.get("params", {}))
    if "h" in spec and spec["h"] is not None:
        return Uniform(spec["h"])
    raise InputError("size field needs h, preset or anchors")
