"""Independent reference implementations used as test oracles.

Nothing here imports fluidmesh internals beyond plain data; each routine is
written the slow, obvious way so it can check the vectorized code.
"""

import math

import numpy as np


# ---------------------------------------------------------------- containment

def polygon_contains(points, loop):
    """Even-odd ray casting along +x against a closed polygon loop (2D)."""
    pts = np.asarray(points, dtype=float)
    loop = np.asarray(loop, dtype=float)
    inside = np.zeros(len(pts), dtype=bool)
    x, y = pts[:, 0], pts[:, 1]
    for k in range(len(loop)):
        (x1, y1), (x2, y2) = loop[k][:2], loop[(k + 1) % len(loop)][:2]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xc)
    return inside


def surface_contains(points, vertices, triangles, direction=(0.5773, 0.5774, 0.5775)):
    """Ray-parity test against a closed triangle surface (Moller-Trumbore)."""
    pts = np.asarray(points, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    a = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - a
    e2 = vertices[triangles[:, 2]] - a
    h = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    q_e1 = e1
    out = np.zeros(len(pts), dtype=bool)
    for start in range(0, len(pts), 512):
        p = pts[start : start + 512]
        s = p[:, None, :] - a[None]
        u = np.einsum("ptj,tj->pt", s, h) * inv
        qv = np.cross(s, q_e1[None])
        v = np.einsum("j,ptj->pt", d, qv) * inv
        t = np.einsum("tj,ptj->pt", e2, qv) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
        out[start : start + 512] = hit.sum(axis=1) % 2 == 1
    return out


def distance_to_segments(points, segments):
    best = np.full(len(points), np.inf)
    for a, b in segments:
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        d = b - a
        t = np.clip(((points - a) @ d) / (d @ d), 0, 1)
        best = np.minimum(best, np.linalg.norm(points - (a + t[:, None] * d), axis=1))
    return best


def closest_on_triangle_bruteforce(p, a, b, c, n=60):
    """Closest point by dense barycentric sampling refined on the edges."""
    best, best_d = None, np.inf
    for i in range(n + 1):
        for j in range(n + 1 - i):
            u, v = i / n, j / n
            q = a + u * (b - a) + v * (c - a)
            d = np.linalg.norm(p - q)
            if d < best_d:
                best, best_d = q, d
    return best, best_d


# ---------------------------------------------------------------- delaunay

def circumsphere(p):
    """Center and squared radius of the circumcircle/sphere of a simplex."""
    p = np.asarray(p, dtype=float)
    a = 2.0 * (p[1:] - p[0])
    rhs = (p[1:] ** 2).sum(axis=1) - (p[0] ** 2).sum()
    c = np.linalg.solve(a, rhs)
    return c, float(((c - p[0]) ** 2).sum())


def empty_circumsphere_violations(points, simplices, rel_tol=1e-10):
    """Count simplices whose circumsphere strictly contains another point."""
    pts = np.asarray(points, dtype=float)
    bad = 0
    for s in simplices:
        c, r2 = circumsphere(pts[s])
        d2 = ((pts - c) ** 2).sum(axis=1)
        d2[list(s)] = np.inf
        if (d2 < r2 * (1.0 - rel_tol)).any():
            bad += 1
    return bad


# ---------------------------------------------------------------- flow

def kernel(q, alpha):
    if q < 1.0:
        return alpha * ((2.0 - q) ** 3 - 4.0 * (1.0 - q) ** 3)
    if q < 2.0:
        return alpha * (2.0 - q) ** 3
    return 0.0


def scalar_two_particle(x1, x2, v1, v2, steps, h, k_s, alpha, k_v, m, dt, vmax):
    """Two free particles on a line under the repelling kernel and drag."""
    traj = []
    for _ in range(steps):
        r = x2 - x1
        w = kernel(abs(r) / h, alpha)
        f2 = k_s * w * math.copysign(1.0, r)
        f1 = -f2
        f1 -= k_v * m * v1 / dt
        f2 -= k_v * m * v2 / dt
        v1 = v1 + f1 / m * dt
        v2 = v2 + f2 / m * dt
        if abs(v1) > vmax:
            v1 = math.copysign(vmax, v1)
        if abs(v2) > vmax:
            v2 = math.copysign(vmax, v2)
        x1 = x1 + v1 * dt
        x2 = x2 + v2 * dt
        traj.append((x1, x2, v1, v2))
    return traj


# ---------------------------------------------------------------- post-opt

def _sub(a, b):
    return [a[0] - b[0], a[1] - b[1], a[2] - b[2]]


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def _norm(a):
    return math.sqrt(_dot(a, a))


def dihedral_by_normals(p, i, j):
    """Dihedral angle (degrees) at edge (i, j) of the tet p, via face normals."""
    k, l = [v for v in range(4) if v not in (i, j)]
    e = _sub(p[j], p[i])
    n1 = _cross(e, _sub(p[k], p[i]))
    n2 = _cross(e, _sub(p[l], p[i]))
    c = _dot(n1, n2) / (_norm(n1) * _norm(n2))
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def quality(p):
    vol = abs(_dot(_sub(p[1], p[0]), _cross(_sub(p[2], p[0]), _sub(p[3], p[0])))) / 6.0
    lmax = max(_norm(_sub(p[j], p[i])) for i in range(4) for j in range(i + 1, 4))
    s = 0.0
    for f in ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)):
        s += 0.5 * _norm(_cross(_sub(p[f[1]], p[f[0]]), _sub(p[f[2]], p[f[0]])))
    return 6.0 * math.sqrt(6.0) * vol / (lmax * s)


def closest_between_lines(a, c, b, d):
    """Closest points of the infinite lines ac and bd (interior solution)."""
    u = _sub(c, a)
    v = _sub(d, b)
    w = _sub(a, b)
    uu, uv, vv = _dot(u, u), _dot(u, v), _dot(v, v)
    uw, vw = _dot(u, w), _dot(v, w)
    den = uu * vv - uv * uv
    s = (uv * vw - vv * uw) / den
    t = (uu * vw - uv * uw) / den
    return [a[k] + s * u[k] for k in range(3)], [b[k] + t * v[k] for k in range(3)], s, t


def dense_mass_spring(nodes, tets, fixed, h, k, aim, k_v, m, dt, steps, mid_lo=0.3, mid_hi=0.5):
    """Straight-line relaxation with uniform target h; mid tets chosen up front."""
    x = [list(map(float, p)) for p in nodes]
    v = [[0.0, 0.0, 0.0] for _ in x]
    edges = set()
    for t in tets:
        for i in range(4):
            for j in range(i + 1, 4):
                edges.add((min(t[i], t[j]), max(t[i], t[j])))
    edges = sorted(edges)
    mid = [list(t) for t in tets if mid_lo <= quality([x[i] for i in t]) <= mid_hi]
    pairs = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]
    out = []
    for _ in range(steps):
        f = [[0.0, 0.0, 0.0] for _ in x]

        def spring(i, j):
            d = _sub(x[j], x[i])
            l = _norm(d)
            for c in range(3):
                g = k * (l - h) * d[c] / l
                f[i][c] += g
                f[j][c] -= g

        for i, j in edges:
            spring(i, j)
        for t in mid:
            p = [x[i] for i in t]
            best, pick = -1.0, None
            for (a, c), (b, d) in pairs:
                s = dihedral_by_normals(p, a, c) + dihedral_by_normals(p, b, d)
                if s > best + 1e-12:
                    best, pick = s, ((a, c), (b, d))
            (a, c), (b, d) = pick
            pa, pb, sa, sb = closest_between_lines(p[a], p[c], p[b], p[d])
            assert 0 <= sa <= 1 and 0 <= sb <= 1, "toy mesh must have an interior closest pair"
            gap = _sub(pa, pb)
            lpq = _norm(gap)
            push = [k * (aim * 2.0 * h - lpq) * g / lpq for g in gap]
            for vtx, sign in ((a, 1.0), (c, 1.0), (b, -1.0), (d, -1.0)):
                for comp in range(3):
                    f[t[vtx]][comp] += sign * push[comp]
            for i in range(4):
                for j in range(i + 1, 4):
                    spring(t[i], t[j])
        for i in range(len(x)):
            if fixed[i]:
                continue
            for c in range(3):
                acc = (f[i][c] - k_v * m * v[i][c] / dt) / m
                v[i][c] += acc * dt
            for c in range(3):
                x[i][c] += v[i][c] * dt
        out.append([p[:] for p in x])
    return out
