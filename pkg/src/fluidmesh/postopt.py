"""Tetrahedral mesh post-optimization.

Mid-quality tetrahedra are relaxed with a mass-spring system that also pushes
apart their closest pair of opposite edges; poor tetrahedra are flattened by
projecting their free vertices onto a plane so that retriangulation drops
them. The two phases alternate until both settle.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .containment import enforce_all
from .errors import UnremovableTetError
from .triangulate import SimplexMesh, delaunay, filter_to_domain

log = logging.getLogger(__name__)

POOR_Q = 0.3
MID_Q = 0.5
SQRT6 = math.sqrt(6.0)
# opposite-edge distance of a regular tet is h / sqrt(2) = (h_ab + h_cd) * sqrt(2) / 4
REGULAR_AIM = math.sqrt(2.0) / 4.0


@dataclass
class OptConfig:
    """Post-optimization constants.

    ``stiffness`` is dimensionless (force per unit length); ``None`` falls back
    to h_min like the flow, which is unstable at dt = 0.5 for h_min >~ 1.
    """

    mass: float = 1.0
    stiffness: float | None = 0.1
    damping: float = 0.08
    dt: float = 0.5
    t_total: float = 100.0
    settle: float = 0.05  # displacement threshold, in units of h_min
    n_max: int = 100
    removal_iters: int = 10
    aim_factor: float = REGULAR_AIM
    max_step: float = 0.4  # per-step displacement cap, in units of h_min
    peel_boundary_slivers: bool = True
    reselect: bool = False  # re-pick mid-quality tets every step


@dataclass
class OptResult:
    mesh: SimplexMesh
    converged: bool
    iterations: int
    n_poor: int
    displacement: float
    history: list = field(default_factory=list)


def tet_quality(points):
    """q = 6 sqrt(6) V / (L_max S) for one tetrahedron given as a (4, 3) array."""
    p = np.asarray(points, dtype=float).reshape(1, 4, 3)
    return float(_quality(p)[0])


def tet_qualities(nodes, tets):
    tets = np.asarray(tets, dtype=np.int64).reshape(-1, 4)
    return _quality(np.asarray(nodes, dtype=float)[tets])


def _quality(p):
    vol = np.abs(np.einsum("ij,ij->i", p[:, 1] - p[:, 0], np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]))) / 6.0
    e = geometry.TET_EDGES
    lmax = np.linalg.norm(p[:, e[:, 1]] - p[:, e[:, 0]], axis=2).max(axis=1)
    faces = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
    s = np.zeros(len(p))
    for a, b, c in faces:
        s += 0.5 * np.linalg.norm(np.cross(p[:, b] - p[:, a], p[:, c] - p[:, a]), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = 6.0 * SQRT6 * vol / (lmax * s)
    return np.where((lmax > 0) & (s > 0), q, 0.0)


def opposite_edge_pair(nodes, tet):
    """Opposite-edge pair whose two dihedral angles are largest.

    Returns local vertex indices ``((a, c), (b, d))``. The pair with the
    largest dihedral sum wins; ties go to the lower pair index.
    """
    ang = geometry.dihedral_angles(nodes, np.asarray(tet).reshape(1, 4))[0]
    sums = ang[geometry.TET_EDGE_PAIRS].sum(axis=1)
    k = int(np.argmax(sums))
    e1, e2 = geometry.TET_EDGE_PAIRS[k]
    return tuple(geometry.TET_EDGES[e1]), tuple(geometry.TET_EDGES[e2])


def _opposite_pairs(nodes, tets):
    ang = geometry.dihedral_angles(nodes, tets)
    sums = ang[:, geometry.TET_EDGE_PAIRS].sum(axis=2)
    k = np.argmax(sums, axis=1)
    pairs = geometry.TET_EDGE_PAIRS[k]
    return geometry.TET_EDGES[pairs[:, 0]], geometry.TET_EDGES[pairs[:, 1]]


def _scatter(n, idx, vals):
    out = np.zeros((n, 3))
    for c in range(3):
        out[:, c] = np.bincount(idx, weights=vals[:, c], minlength=n)
    return out


def spring_forces(nodes, edges, field, k):
    """Hooke forces k (l - h) e_ij along every edge, summed per node."""
    n = len(nodes)
    i, j = edges[:, 0], edges[:, 1]
    d = nodes[j] - nodes[i]
    l = np.linalg.norm(d, axis=1)
    h = field.pair_size(nodes[i], nodes[j])
    f = (k * (l - h) / l)[:, None] * d
    return _scatter(n, i, f) - _scatter(n, j, f)


def corrective_forces(nodes, tets, field, k, aim_factor=math.sqrt(2.0 / 3.0)):
    """Opposite-edge separation plus in-tet springs for mid-quality tets."""
    n = len(nodes)
    out = np.zeros((n, 3))
    if len(tets) == 0:
        return out
    le1, le2 = _opposite_pairs(nodes, tets)
    rows = np.arange(len(tets))
    a = tets[rows, le1[:, 0]]
    c = tets[rows, le1[:, 1]]
    b = tets[rows, le2[:, 0]]
    dd = tets[rows, le2[:, 1]]
    pa, pc, pb, pd = nodes[a], nodes[c], nodes[b], nodes[dd]
    p, q = geometry.segment_segment_closest(pa, pc, pb, pd)
    gap = p - q
    l_pq = np.linalg.norm(gap, axis=1)
    e = np.divide(gap, l_pq[:, None], out=np.zeros_like(gap), where=l_pq[:, None] > 0)
    h_aim = aim_factor * (field.pair_size(pa, pc) + field.pair_size(pb, pd))
    push = (k * (h_aim - l_pq))[:, None] * e
    # e points from the (b, d) edge toward the (a, c) edge.
    for v, sign in ((a, 1.0), (c, 1.0), (b, -1.0), (dd, -1.0)):
        out += _scatter(n, v, sign * push)
    # Springs along the six edges of each selected tet.
    e_loc = geometry.TET_EDGES
    i = tets[:, e_loc[:, 0]].ravel()
    j = tets[:, e_loc[:, 1]].ravel()
    out += spring_forces(nodes, np.column_stack([i, j]), field, k)
    return out


def _stiffness(cfg, field):
    return cfg.stiffness if cfg.stiffness is not None else field.h_min


def mid_quality(nodes, tets):
    q = tet_qualities(nodes, tets)
    return tets[(q >= POOR_Q) & (q <= MID_Q)]


def mass_spring_step(nodes, velocity, mesh_edges, mid, fixed, field, cfg):
    """One semi-implicit Euler step; returns new (nodes, velocity).

    ``mid`` lists the tetrahedra that receive the corrective force.
    """
    k = _stiffness(cfg, field)
    force = spring_forces(nodes, mesh_edges, field, k)
    force += corrective_forces(nodes, mid, field, k, cfg.aim_factor)
    force += -cfg.damping * cfg.mass * velocity / cfg.dt
    force[fixed] = 0.0
    v = velocity + force / cfg.mass * cfg.dt
    v[fixed] = 0.0
    if cfg.max_step is not None:
        vmax = cfg.max_step * field.h_min / cfg.dt
        s = np.linalg.norm(v, axis=1)
        over = s > vmax
        v[over] *= (vmax / s[over])[:, None]
    x = nodes + v * cfg.dt
    x[fixed] = nodes[fixed]
    return x, v


def mass_spring_optimize(mesh, field, fixed, domain=None, bgrid=None, config=None):
    """Relax node positions on the fixed connectivity of ``mesh``.

    Returns ``(positions, converged, steps, last_displacement)``.
    """
    cfg = config or OptConfig()
    fixed = np.asarray(fixed, dtype=bool)
    x = mesh.nodes.copy()
    v = np.zeros_like(x)
    edges = mesh.edges
    tets = mesh.elements
    free = ~fixed
    mid = mid_quality(x, tets)
    n_steps = int(round(cfg.t_total / cfg.dt))
    dd = 0.0
    for s in range(1, n_steps + 1):
        if cfg.reselect:
            mid = mid_quality(x, tets)
        x_new, v = mass_spring_step(x, v, edges, mid, fixed, field, cfg)
        if domain is not None and bgrid is not None:
            enforce_all(x_new, v, free, bgrid, domain)
        dd = float(np.linalg.norm(x_new - x, axis=1).mean())
        x = x_new
        if dd <= cfg.settle * field.h_min:
            return x, True, s, dd
    log.warning("mass-spring relaxation did not settle in %d steps", n_steps)
    return x, False, n_steps, dd


def _project_to_plane(x, origin, normal):
    return x - np.dot(x - origin, normal) * normal


def _plane(p0, p1, p2):
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n)
    if norm <= 1e-14 * max(np.linalg.norm(p1 - p0), np.linalg.norm(p2 - p0)) ** 2:
        return None
    return p0, n / norm


def flatten_tet(nodes, tet, fixed):
    """Target positions that flatten one poor tet, by its free-vertex count.

    Returns ``{vertex: new_position}``; empty when the plane is undefined.
    Raises UnremovableTetError when every vertex is fixed.
    """
    tet = [int(t) for t in tet]
    free = [v for v in tet if not fixed[v]]
    pinned = [v for v in tet if fixed[v]]
    p = nodes
    if not free:
        raise UnremovableTetError("poor tetrahedron has no free vertex", [tuple(tet)])
    if len(free) == 1:
        plane = _plane(p[pinned[0]], p[pinned[1]], p[pinned[2]])
    elif len(free) == 2:
        mid = 0.5 * (p[free[0]] + p[free[1]])
        plane = _plane(p[pinned[0]], p[pinned[1]], mid)
    elif len(free) == 3:
        pairs = [(free[0], free[1]), (free[1], free[2]), (free[0], free[2])]
        lengths = [np.linalg.norm(p[i] - p[j]) for i, j in pairs]
        longest = int(np.argmax(lengths))
        short = [pairs[k] for k in range(3) if k != longest]
        m1 = 0.5 * (p[short[0][0]] + p[short[0][1]])
        m2 = 0.5 * (p[short[1][0]] + p[short[1][1]])
        plane = _plane(p[pinned[0]], m1, m2)
    else:
        (la, lc), (lb, ld) = opposite_edge_pair(p, tet)
        a, c, b, d = tet[la], tet[lc], tet[lb], tet[ld]
        n = np.cross(p[c] - p[a], p[d] - p[b])
        norm = np.linalg.norm(n)
        plane = None if norm == 0 else (p[tet].mean(axis=0), n / norm)
    if plane is None:
        return {}
    origin, normal = plane
    return {v: _project_to_plane(p[v], origin, normal) for v in free}


def _retriangulate(nodes, domain, bgrid, boundary, fixed):
    mesh = delaunay(nodes, 3)
    mesh.boundary = boundary
    mesh.fixed = fixed
    if domain is not None:
        mesh = filter_to_domain(mesh, domain, bgrid, compact=False)
    return mesh


def boundary_slivers(mesh, fixed):
    """Poor tets whose vertices are all fixed and that touch the mesh surface."""
    tets = mesh.elements
    if len(tets) == 0:
        return np.zeros(0, dtype=np.int64)
    q = tet_qualities(mesh.nodes, tets)
    cand = (q < POOR_Q) & fixed[tets].all(axis=1)
    if not cand.any():
        return np.zeros(0, dtype=np.int64)
    faces = np.sort(tets[:, [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]], axis=2).reshape(-1, 3)
    _, inv, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    exposed = (counts[inv.reshape(-1)] == 1).reshape(-1, 4).any(axis=1)
    return np.flatnonzero(cand & exposed)


def peel(mesh, fixed):
    """Repeatedly drop exposed all-fixed poor tets (surface slivers)."""
    removed = 0
    while True:
        idx = boundary_slivers(mesh, fixed)
        if len(idx) == 0:
            return mesh, removed
        keep = np.ones(len(mesh.elements), dtype=bool)
        keep[idx] = False
        mesh = SimplexMesh(mesh.nodes, mesh.elements[keep], 3, mesh.boundary, mesh.fixed)
        removed += len(idx)


def remove_poor_tets(mesh, fixed, domain=None, bgrid=None, config=None):
    """Flatten q < 0.3 tets by plane projection until a pass moves nothing.

    Returns ``(mesh, n_poor, converged)``; ``mesh`` is the last
    retriangulation of the updated positions.
    """
    cfg = config or OptConfig()
    fixed = np.asarray(fixed, dtype=bool)
    x = mesh.nodes.copy()
    boundary = mesh.boundary
    current = mesh
    for _ in range(cfg.removal_iters):
        current = _retriangulate(x, domain, bgrid, boundary, fixed)
        if cfg.peel_boundary_slivers:
            current, _ = peel(current, fixed)
        q = tet_qualities(x, current.elements)
        poor = current.elements[q < POOR_Q]
        if len(poor) == 0:
            return current, 0, True
        stuck = [tuple(t) for t in poor if fixed[t].all()]
        if stuck:
            raise UnremovableTetError(f"{len(stuck)} poor tetrahedra have no free vertex", stuck, x)
        moved = 0.0
        for t in poor:
            for v, target in flatten_tet(x, t, fixed).items():
                moved += float(np.linalg.norm(target - x[v]))
                x[v] = target
        if domain is not None and bgrid is not None:
            enforce_all(x, None, ~fixed, bgrid, domain)
        if moved == 0.0:
            break
    current = _retriangulate(x, domain, bgrid, boundary, fixed)
    if cfg.peel_boundary_slivers:
        current, _ = peel(current, fixed)
    n_poor = int((tet_qualities(x, current.elements) < POOR_Q).sum())
    if n_poor:
        log.warning("%d poor tetrahedra remain after removal", n_poor)
    return current, n_poor, n_poor == 0


def circumsphere(p):
    """Center and radius of the sphere through four points (None if flat)."""
    a = p[1:] - p[0]
    rhs = 0.5 * np.einsum("ij,ij->i", a, a)
    try:
        c = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        return None
    return p[0] + c, float(np.linalg.norm(c))


def break_stuck(nodes, tets, fixed, domain=None, bgrid=None, depth=0.5):
    """Pull the nearest free node inside the circumsphere of each stuck tet.

    A poor tet whose vertices are all fixed cannot be flattened; a node
    strictly inside its circumsphere keeps retriangulation from recreating
    it. Returns the updated positions and the number of nodes moved.
    """
    x = nodes.copy()
    free = np.flatnonzero(~fixed)
    moved = 0
    if len(free) == 0:
        return x, 0
    for t in tets:
        sphere = circumsphere(x[list(t)])
        if sphere is None:
            continue
        c, r = sphere
        dist = np.linalg.norm(x[free] - c, axis=1)
        j = free[int(np.argmin(dist))]
        if dist.min() < r:
            continue
        u = (x[j] - c) / dist.min()
        x[j] = c + depth * r * u
        moved += 1
    if moved and domain is not None and bgrid is not None:
        enforce_all(x, None, ~fixed, bgrid, domain)
    return x, moved


def hybrid_optimize(mesh, field, fixed, domain=None, bgrid=None, config=None):
    """Alternate mass-spring relaxation and poor-tet removal until both settle.

    Poor tets with no free vertex are broken up by pulling a free node into
    their circumsphere before the next iteration.
    """
    cfg = config or OptConfig()
    fixed = np.asarray(fixed, dtype=bool)
    if mesh.boundary is None or len(mesh.boundary) != len(mesh.nodes):
        mesh.boundary = np.zeros(len(mesh.nodes), dtype=bool)
    current = mesh
    if cfg.peel_boundary_slivers:
        current, _ = peel(current, fixed)
    best = current
    best_poor = int((tet_qualities(current.nodes, current.elements) < POOR_Q).sum())
    history = []
    n_poor = best_poor
    dd = float("inf")
    for n_t in range(1, cfg.n_max + 1):
        start = current.nodes.copy()
        x, _, _, _ = mass_spring_optimize(current, field, fixed, domain, bgrid, cfg)
        relaxed = _retriangulate(x, domain, bgrid, current.boundary, fixed)
        try:
            current, n_poor, _ = remove_poor_tets(relaxed, fixed, domain, bgrid, cfg)
        except UnremovableTetError as exc:
            if exc.nodes is not None:
                x = exc.nodes
            x, moved = break_stuck(x, exc.tets, fixed, domain, bgrid)
            current = _retriangulate(x, domain, bgrid, current.boundary, fixed)
            if cfg.peel_boundary_slivers:
                current, _ = peel(current, fixed)
            n_poor = int((tet_qualities(x, current.elements) < POOR_Q).sum())
            history.append((n_t, float("nan"), n_poor))
            if not moved:
                log.warning("post-optimization stopped: %s", exc)
                return OptResult(_compact(best if best_poor <= n_poor else current), False, n_t,
                                 min(best_poor, n_poor), dd, history)
            continue
        dd = float(np.linalg.norm(current.nodes - start, axis=1).mean())
        history.append((n_t, dd, n_poor))
        if n_poor <= best_poor:
            best, best_poor = current, n_poor
        if dd <= cfg.settle * field.h_min and n_poor == 0:
            return OptResult(_compact(current), True, n_t, 0, dd, history)
    log.warning("post-optimization did not converge in %d iterations (%d poor tets)", cfg.n_max, best_poor)
    return OptResult(_compact(best), False, cfg.n_max, best_poor, dd, history)


def _compact(mesh):
    return mesh.compact()
