"""Particle flow simulation that distributes mesh nodes over a domain.

Particles are injected at interior sources, repel each other through a
compact cubic kernel, lose energy to a viscous drag and bounce off the
domain boundary. A proportional controller adjusts the particle count from
the mean edge length error of intermediate Delaunay meshes until the flow
comes to rest.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .containment import Location, build_boundary_grid, classify_points, enforce_all, boundary_distance
from .domain import augment_boundary
from .errors import DegenerateInputError, FilterError, InputError, OverlapError
from .spatial import candidate_pairs
from .triangulate import delaunay, edge_length_error, filter_to_domain

__all__ = [
    "FlowConfig",
    "FlowState",
    "FlowResult",
    "estimate_initial_count",
    "compute_sources",
    "kernel",
    "repelling_force",
    "repelling_forces",
    "viscous_force",
    "step",
    "manage_population",
    "travel_metrics",
    "edge_length_error",
    "update_target_count",
    "run",
    "result_mesh",
]

log = logging.getLogger(__name__)

SQRT3_4 = math.sqrt(3.0) / 4.0


@dataclass
class FlowConfig:
    """Simulation constants. ``None`` entries are derived from the size field."""

    mass: float = 1.0
    stiffness: float | None = None  # defaults to h_min
    damping: float = 0.08
    dt: float = 1.0
    max_steps: int = 20000
    alpha: float | None = None  # 1/6 in 2D, 1/18 in 3D
    k_p: float = 0.5
    controller_cap: float = 0.25
    slow_ratio: float = 0.05
    reset_ratio: float = 0.06
    stop_ratio: float = 0.005
    deadband: float = 0.02
    injection_speed: float | None = None  # defaults to 0.1 * h_min / dt
    seed: int = 0
    dedupe_tol: float = 1e-6
    verbose: bool = False

    def __post_init__(self):
        if not (self.mass > 0 and self.dt > 0 and self.max_steps > 0):
            raise InputError("mass, dt and max_steps must be positive")
        if not 0 < self.damping < 1:
            raise InputError("damping must lie in (0, 1)")


@dataclass
class FlowState:
    positions: np.ndarray
    velocities: np.ndarray
    fixed: np.ndarray
    ids: np.ndarray  # persistent particle ids, increasing along the arrays
    serial: np.ndarray  # injection order; -1 for fixed particles
    clearance: np.ndarray  # lower bound on distance to the boundary
    sources: np.ndarray
    n_total: int
    config: FlowConfig
    domain: object
    field: object
    bgrid: object
    rng: np.random.Generator
    n_status: bool = False
    travel: list = field(default_factory=list)
    dd_max: float = 0.0
    step_index: int = 0
    next_id: int = 0
    next_serial: int = 0
    source_cursor: int = 0

    @property
    def n_p(self):
        return len(self.positions)

    @property
    def h_min(self):
        return self.field.h_min

    @property
    def dim(self):
        return self.domain.ndim

    @property
    def alpha(self):
        if self.config.alpha is not None:
            return self.config.alpha
        return 1.0 / 6.0 if self.dim == 2 else 1.0 / 18.0

    @property
    def stiffness(self):
        return self.config.stiffness if self.config.stiffness is not None else self.h_min

    @property
    def max_speed(self):
        # 0.4 r / dt with kernel width r = 2 h_min
        return 0.4 * 2.0 * self.h_min / self.config.dt

    @property
    def injection_speed(self):
        if self.config.injection_speed is not None:
            return self.config.injection_speed
        return 0.1 * self.h_min / self.config.dt


@dataclass
class ControllerEvent:
    step: int
    n_p: int
    n_total_before: int
    n_total_after: int
    ratio: float
    e_avg: float


@dataclass
class FlowResult:
    positions: np.ndarray  # simulation frame
    boundary: np.ndarray
    fixed: np.ndarray
    converged: bool
    steps: int
    last_ratio: float
    n_total: int
    events: list
    travel: list


def _ceil(x):
    # Guard against 100 * 1.05 = 105.00000000000001.
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


def _background_tets(domain, bgrid):
    mesh = delaunay(domain.points, 3)
    cent = mesh.nodes[mesh.elements].mean(axis=1)
    inside = classify_points(cent, bgrid, domain) != Location.OUTSIDE.value
    return mesh, inside


def estimate_initial_count(domain, field, bgrid=None):
    """Initial target particle count from domain measures and target sizes."""
    pts = domain.points
    if field.is_uniform:
        h = field.h
        a0 = SQRT3_4 * h * h
        if domain.is_planar:
            n = domain.area / (6.0 * a0) + domain.boundary_length / h
        else:
            v0 = h**3 / (6.0 * math.sqrt(2.0))
            n = domain.volume / (18.0 * v0) + domain.surface_area / (6.0 * a0)
        return max(1, _ceil(n))

    if domain.is_planar:
        tris = domain.triangles
        cent = pts[tris].mean(axis=1)
        h = field.size_at(cent)
        n = np.sum(geometry.triangle_areas(pts, tris) / (6.0 * SQRT3_4 * h * h))
        e = domain.boundary_edges
        mid = 0.5 * (pts[e[:, 0]] + pts[e[:, 1]])
        length = np.linalg.norm(pts[e[:, 1]] - pts[e[:, 0]], axis=1)
        n += np.sum(length / field.size_at(mid))
        return max(1, _ceil(float(n)))

    if bgrid is None:
        bgrid = build_boundary_grid(domain)
    mesh, inside = _background_tets(domain, bgrid)
    tets = mesh.elements[inside]
    cent = mesh.nodes[tets].mean(axis=1)
    h = field.size_at(cent)
    vol = np.abs(geometry.signed_volumes(mesh.nodes, tets))
    n = np.sum(vol / (18.0 * h**3 / (6.0 * math.sqrt(2.0))))
    tris = domain.triangles
    tc = pts[tris].mean(axis=1)
    ht = field.size_at(tc)
    n += np.sum(geometry.triangle_areas(pts, tris) / (6.0 * SQRT3_4 * ht * ht))
    return max(1, _ceil(float(n)))


def compute_sources(domain, field, bgrid=None):
    """Injection points: element centroids emitted every ~6 (2D) / 18 (3D) ideal elements."""
    pts = domain.points
    if bgrid is None:
        bgrid = build_boundary_grid(domain)
    if domain.is_planar:
        elems = domain.triangles
        cent = pts[elems].mean(axis=1)
        size = geometry.triangle_areas(pts, elems)
        h = field.size_at(cent)
        threshold = 6.0 * SQRT3_4 * h * h
        nodes = pts
    else:
        mesh, _ = _background_tets(domain, bgrid)
        elems = mesh.elements
        nodes = mesh.nodes
        cent = nodes[elems].mean(axis=1)
        size = np.abs(geometry.signed_volumes(nodes, elems))
        h = field.size_at(cent)
        threshold = 18.0 * h**3 / (6.0 * math.sqrt(2.0))

    acc = 0.0
    picked = []
    for i in range(len(elems)):
        acc += size[i]
        if acc >= threshold[i] * (1.0 - 1e-12):
            picked.append(i)
            acc = 0.0
    sources = cent[picked].reshape(-1, 3)
    if len(sources):
        where = classify_points(sources, bgrid, domain)
        sources = sources[where != Location.OUTSIDE.value]
    if len(sources) == 0:
        order = np.argsort(-size, kind="stable")
        for i in order:
            c = cent[i : i + 1]
            if classify_points(c, bgrid, domain)[0] != Location.OUTSIDE.value:
                sources = c.copy()
                break
    if domain.is_planar:
        sources[:, 2] = 0.0
    return sources


def kernel(q, alpha):
    """Compactly supported cubic repulsion weight, zero for q >= 2."""
    q = np.asarray(q, dtype=float)
    w = np.where(
        q < 1.0,
        (2.0 - q) ** 3 - 4.0 * (1.0 - q) ** 3,
        np.where(q < 2.0, (2.0 - q) ** 3, 0.0),
    )
    w = alpha * w
    return float(w) if w.ndim == 0 else w


def _scatter(n, idx, vals):
    out = np.zeros((n, 3))
    for c in range(3):
        out[:, c] = np.bincount(idx, weights=vals[:, c], minlength=n)
    return out


def repelling_forces(positions, field, stiffness, alpha, dim):
    """Kernel repulsion on every particle, shape (n, 3)."""
    n = len(positions)
    h_min = field.h_min
    rings = max(1, math.ceil(field.h_max / h_min - 1e-12))
    i, j = candidate_pairs(positions, 2.0 * h_min, rings=rings, dim=dim)
    if len(i) == 0:
        return np.zeros((n, 3))
    d = positions[i] - positions[j]
    r = np.sqrt(np.einsum("ij,ij->i", d, d))
    if field.is_uniform:
        h = field.h
    else:
        hs = field.size_at(positions)
        h = 0.5 * (hs[i] + hs[j])
    q = r / h
    near = q < 2.0
    i, j, d, r, q = i[near], j[near], d[near], r[near], q[near]
    if not field.is_uniform:
        h = h[near]
    if (r == 0).any():
        k = int(np.argmax(r == 0))
        raise OverlapError(f"particles {int(i[k])} and {int(j[k])} coincide")
    f = (stiffness * kernel(q, alpha) / r)[:, None] * d
    return _scatter(n, i, f) - _scatter(n, j, f)


def repelling_force(i, neighbors, positions, field, stiffness, alpha):
    """Repulsion on particle ``i`` from the listed neighbors."""
    xi = positions[i]
    total = np.zeros(3)
    for j in neighbors:
        if j == i:
            continue
        d = xi - positions[j]
        r = float(np.linalg.norm(d))
        if r == 0.0:
            raise OverlapError(f"particles {i} and {j} coincide")
        h = field.pair_size(xi, positions[j])
        w = kernel(r / h, alpha)
        if w > 0:
            total += stiffness * w * d / r
    return total


def viscous_force(velocity, mass, dt, damping):
    return -damping * mass * np.asarray(velocity, dtype=float) / dt


def step(state):
    """Advance one semi-implicit Euler step, then enforce the boundary."""
    cfg = state.config
    movable = ~state.fixed
    x = state.positions
    v = state.velocities
    force = repelling_forces(x, state.field, state.stiffness, state.alpha, state.dim)
    force += viscous_force(v, cfg.mass, cfg.dt, cfg.damping)
    force[state.fixed] = 0.0
    v_new = v + force / cfg.mass * cfg.dt
    v_new[state.fixed] = 0.0
    speed = np.linalg.norm(v_new, axis=1)
    vmax = state.max_speed
    over = speed > vmax
    if over.any():
        v_new[over] *= (vmax / speed[over])[:, None]
    x_new = x + v_new * cfg.dt
    x_new[state.fixed] = x[state.fixed]
    if state.dim == 2:
        x_new[:, 2] = 0.0
        v_new[:, 2] = 0.0
    state.clearance -= np.linalg.norm(x_new - x, axis=1)
    enforce_all(x_new, v_new, movable, state.bgrid, state.domain, state.clearance)
    state.positions = x_new
    state.velocities = v_new
    state.step_index += 1
    return state


def _random_directions(rng, k, dim):
    if dim == 2:
        theta = rng.uniform(0.0, 2.0 * math.pi, size=k)
        return np.column_stack([np.cos(theta), np.sin(theta), np.zeros(k)])
    v = rng.normal(size=(k, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _keep(state, mask):
    state.positions = state.positions[mask]
    state.velocities = state.velocities[mask]
    state.fixed = state.fixed[mask]
    state.ids = state.ids[mask]
    state.serial = state.serial[mask]
    state.clearance = state.clearance[mask]


def manage_population(state):
    """Inject at sources or drop the newest particles, then remove overlaps."""
    deficit = state.n_total - state.n_p
    n_src = len(state.sources)
    if deficit > 0 and n_src:
        k = min(deficit, n_src)
        pick = (state.source_cursor + np.arange(k)) % n_src
        state.source_cursor = int((state.source_cursor + k) % n_src)
        pos = state.sources[pick].copy()
        vel = _random_directions(state.rng, k, state.dim) * state.injection_speed
        ids = state.next_id + np.arange(k)
        serial = state.next_serial + np.arange(k)
        state.next_id += k
        state.next_serial += k
        state.positions = np.vstack([state.positions, pos])
        state.velocities = np.vstack([state.velocities, vel])
        state.fixed = np.concatenate([state.fixed, np.zeros(k, dtype=bool)])
        state.ids = np.concatenate([state.ids, ids])
        state.serial = np.concatenate([state.serial, serial])
        state.clearance = np.concatenate([state.clearance, np.zeros(k)])
    elif deficit < 0:
        free = np.flatnonzero(~state.fixed)
        newest = free[np.argsort(-state.serial[free], kind="stable")][: -deficit]
        mask = np.ones(state.n_p, dtype=bool)
        mask[newest] = False
        _keep(state, mask)
    _dedupe(state)
    return state


def _dedupe(state):
    tol = state.config.dedupe_tol * state.h_min
    i, j = candidate_pairs(state.positions, 2.0 * state.h_min, rings=1, dim=state.dim)
    if len(i) == 0:
        return
    d = np.linalg.norm(state.positions[i] - state.positions[j], axis=1)
    close = d <= tol
    if not close.any():
        return
    drop = np.unique(np.maximum(i[close], j[close]))
    drop = drop[~state.fixed[drop]]
    mask = np.ones(state.n_p, dtype=bool)
    mask[drop] = False
    _keep(state, mask)


def travel_metrics(state, old_ids, old_positions):
    """Mean displacement of surviving particles and the running maximum."""
    _, a, b = np.intersect1d(old_ids, state.ids, assume_unique=True, return_indices=True)
    if len(a):
        dd = float(np.mean(np.linalg.norm(state.positions[b] - old_positions[a], axis=1)))
    else:
        dd = 0.0
    state.travel.append(dd)
    state.dd_max = max(state.dd_max, dd)
    return dd, state.dd_max


def update_target_count(n_total, e_avg, k_p=0.5, cap=0.25, deadband=0.02):
    """Proportional update of the target count; unchanged inside the deadband."""
    if abs(e_avg) <= deadband:
        return int(n_total)
    e = math.copysign(min(k_p * abs(e_avg), cap), e_avg)
    return int(_ceil(n_total * (1.0 + e)))


def current_mesh(state):
    """Delaunay mesh of the current particles, restricted to the domain."""
    mesh = delaunay(state.positions, state.dim)
    return filter_to_domain(mesh, state.domain, state.bgrid)


def result_mesh(state, result):
    """Final Delaunay mesh carrying the boundary and fixed flags of ``result``."""
    mesh = delaunay(result.positions, state.dim)
    mesh.boundary = result.boundary.copy()
    mesh.fixed = result.fixed.copy()
    return filter_to_domain(mesh, state.domain, state.bgrid)


def init_state(domain, field, fixed_nodes=None, config=None, bgrid=None):
    config = config or FlowConfig()
    if domain.augmented is None or domain.augmented.h_min != field.h_min:
        domain = augment_boundary(domain, field.h_min)
    if bgrid is None:
        bgrid = build_boundary_grid(domain)
    fixed_nodes = np.zeros((0, 3)) if fixed_nodes is None else np.asarray(fixed_nodes, dtype=float).reshape(-1, 3)
    if len(fixed_nodes):
        where = classify_points(fixed_nodes, bgrid, domain)
        bad = np.flatnonzero(where == Location.OUTSIDE.value)
        if len(bad):
            raise InputError(f"fixed nodes outside the domain: {fixed_nodes[bad].tolist()}")
    nf = len(fixed_nodes)
    sources = compute_sources(domain, field, bgrid)
    return FlowState(
        positions=fixed_nodes.copy(),
        velocities=np.zeros((nf, 3)),
        fixed=np.ones(nf, dtype=bool),
        ids=np.arange(nf),
        serial=np.full(nf, -1),
        clearance=np.zeros(nf),
        sources=sources,
        n_total=estimate_initial_count(domain, field, bgrid),
        config=config,
        domain=domain,
        field=field,
        bgrid=bgrid,
        rng=np.random.default_rng(config.seed),
        next_id=nf,
    )


def run(domain, field, fixed_nodes=None, config=None, state=None):
    """Simulate until the flow stops or the step cap is hit.

    ``fixed_nodes`` are given in the domain's simulation frame.
    """
    if state is None:
        state = init_state(domain, field, fixed_nodes, config)
    cfg = state.config
    events = []
    ratio = 1.0
    converged = False
    for _ in range(cfg.max_steps):
        old_ids = state.ids.copy()
        old_pos = state.positions.copy()
        manage_population(state)
        step(state)
        dd, dd_max = travel_metrics(state, old_ids, old_pos)
        ratio = dd / dd_max if dd_max > 0 else 0.0
        settled = state.n_p == state.n_total
        if ratio < cfg.slow_ratio and settled and not state.n_status:
            before = state.n_total
            e_avg = _mesh_error(state)
            if e_avg is not None:
                state.n_total = update_target_count(
                    state.n_total, e_avg, cfg.k_p, cfg.controller_cap, cfg.deadband
                )
            state.n_status = True
            ev = ControllerEvent(state.step_index, state.n_p, before, state.n_total, ratio,
                                 float("nan") if e_avg is None else e_avg)
            events.append(ev)
            if cfg.verbose:
                print(
                    f"step {ev.step:6d}  N_p {ev.n_p:5d}  N_total {ev.n_total_before:5d} -> "
                    f"{ev.n_total_after:5d}  ratio {ratio:.4f}  e_avg {ev.e_avg:+.4f}",
                    flush=True,
                )
        if ratio > cfg.reset_ratio:
            state.n_status = False
        if ratio < cfg.stop_ratio and state.n_p == state.n_total:
            converged = True
            break
    if not converged:
        log.warning("flow did not converge in %d steps (last ratio %.4g)", cfg.max_steps, ratio)
    return finish(state, converged, ratio, events)


def _mesh_error(state):
    try:
        return edge_length_error(current_mesh(state), state.field)
    except (DegenerateInputError, FilterError):
        return None


def finish(state, converged, ratio, events):
    pos = state.positions.copy()
    h_local = state.field.size_at(pos)
    dist = boundary_distance(pos, state.bgrid, state.domain)
    boundary = dist <= 1e-3 * h_local
    return FlowResult(
        positions=pos,
        boundary=boundary,
        fixed=state.fixed.copy(),
        converged=converged,
        steps=state.step_index,
        last_ratio=ratio,
        n_total=state.n_total,
        events=events,
        travel=list(state.travel),
    )
