"""Boundary meshes of the benchmark geometries (rectangle, L-shape, cuboid, cylinder).

Planar regions are triangulated on a regular grid; solids are closed,
outward-oriented triangle surfaces.
"""

import math

import numpy as np
from scipy.spatial import Delaunay

# L-shaped region: [-20, 30] x [-30, 20] minus the notch [10, 30] x [-30, -10].
L_OUTER = ((-20.0, -30.0), (30.0, 20.0))
L_NOTCH = ((10.0, -30.0), (30.0, -10.0))
L_CORNER = (10.0, -10.0)
L_POLYGON = np.array(
    [(-20.0, -30.0), (10.0, -30.0), (10.0, -10.0), (30.0, -10.0), (30.0, 20.0), (-20.0, 20.0)]
)


def _grid_cells(x0, x1, y0, y1, spacing):
    nx = max(1, int(round((x1 - x0) / spacing)))
    ny = max(1, int(round((y1 - y0) / spacing)))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    return xs, ys


def _planar_grid(xs, ys, keep=None):
    """Two CCW triangles per kept grid cell; shared vertices are not merged."""
    verts, tris = [], []
    index = {}

    def vid(i, j):
        key = (i, j)
        if key not in index:
            index[key] = len(verts)
            verts.append((xs[i], ys[j], 0.0))
        return index[key]

    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            cx = 0.5 * (xs[i] + xs[i + 1])
            cy = 0.5 * (ys[j] + ys[j + 1])
            if keep is not None and not keep(cx, cy):
                continue
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return np.array(verts), np.array(tris, dtype=np.int64)


def rectangle(width=100.0, height=50.0, spacing=5.0, z=0.0):
    """Rectangle ``[0, width] x [0, height]`` in the plane ``z``."""
    xs, ys = _grid_cells(0.0, width, 0.0, height, spacing)
    v, t = _planar_grid(xs, ys)
    v[:, 2] = z
    return v, t


def l_shape(spacing=5.0):
    """The L-shaped region with its reentrant corner at (10, -10)."""
    (x0, y0), (x1, y1) = L_OUTER
    (nx0, ny0), (nx1, ny1) = L_NOTCH
    xs = np.arange(x0, x1 + spacing / 2, spacing)
    ys = np.arange(y0, y1 + spacing / 2, spacing)
    for val in (nx0, ny1):
        if not np.isclose(xs - val, 0).any() and not np.isclose(ys - val, 0).any():
            raise ValueError("spacing must divide the notch corner coordinates")

    def keep(cx, cy):
        return not (nx0 < cx < nx1 and ny0 < cy < ny1)

    return _planar_grid(xs, ys, keep)


def _orient(verts, tris, outward):
    """Flip triangles whose normal disagrees with ``outward(centroid)``."""
    p = verts[tris]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    c = p.mean(axis=1)
    flip = np.einsum("ij,ij->i", n, outward(c)) < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _merge(parts):
    verts, tris, off = [], [], 0
    for v, t in parts:
        verts.append(v)
        tris.append(t + off)
        off += len(v)
    return np.vstack(verts), np.vstack(tris)


def cuboid(size=(100.0, 100.0, 80.0), spacing=20.0, origin=(0.0, 0.0, 0.0)):
    """Closed surface of an axis-aligned box."""
    size = np.asarray(size, dtype=float)
    origin = np.asarray(origin, dtype=float)
    parts = []
    for axis in range(3):
        u, w = [a for a in range(3) if a != axis]
        us, ws = _grid_cells(0.0, size[u], 0.0, size[w], spacing)
        v2, t = _planar_grid(us, ws)
        for level in (0.0, size[axis]):
            v = np.zeros((len(v2), 3))
            v[:, u] = v2[:, 0]
            v[:, w] = v2[:, 1]
            v[:, axis] = level
            parts.append((v + origin, t))
    verts, tris = _merge(parts)
    center = origin + size / 2
    return verts, _orient(verts, tris, lambda c: c - center)


def _disk(radius, segments, spacing):
    """Planar triangulation of a disk whose rim is a regular polygon."""
    theta = 2.0 * math.pi * np.arange(segments) / segments
    rim = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    inner = []
    rings = int(math.floor(radius / spacing))
    for k in range(1, rings):
        r = radius * k / rings
        m = max(6 * k, int(round(2 * math.pi * r / spacing)))
        phi = 2.0 * math.pi * (np.arange(m) + 0.5 * (k % 2)) / m
        inner.append(np.column_stack([r * np.cos(phi), r * np.sin(phi)]))
    pts = np.vstack([np.zeros((1, 2))] + inner + [rim])
    tri = Delaunay(pts).simplices
    return pts, tri


def cylinder(radius=50.0, z0=-20.0, z1=20.0, segments=48, spacing=10.0):
    """Closed surface of a cylinder around the z axis."""
    theta = 2.0 * math.pi * np.arange(segments) / segments
    layers = max(1, int(round((z1 - z0) / spacing)))
    zs = np.linspace(z0, z1, layers + 1)
    side_v = np.array([(radius * math.cos(t), radius * math.sin(t), z) for z in zs for t in theta])
    side_t = []
    for k in range(layers):
        for i in range(segments):
            a = k * segments + i
            b = k * segments + (i + 1) % segments
            c = b + segments
            d = a + segments
            side_t += [(a, b, c), (a, c, d)]
    parts = [(side_v, np.array(side_t, dtype=np.int64))]
    disk, dt = _disk(radius, segments, spacing)
    for z in (z0, z1):
        parts.append((np.column_stack([disk, np.full(len(disk), z)]), dt))
    verts, tris = _merge(parts)
    zc = 0.5 * (z0 + z1)

    def outward(c):
        out = np.zeros_like(c)
        r = np.hypot(c[:, 0], c[:, 1])
        cap = np.isclose(c[:, 2], z0) | np.isclose(c[:, 2], z1)
        out[cap, 2] = np.sign(c[cap, 2] - zc)
        out[~cap, 0] = c[~cap, 0] / r[~cap]
        out[~cap, 1] = c[~cap, 1] / r[~cap]
        return out

    return verts, _orient(verts, tris, outward)


SHAPES = {
    "rectangle": rectangle,
    "l_shape": l_shape,
    "cuboid": cuboid,
    "cylinder": cylinder,
}
