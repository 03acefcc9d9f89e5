"""End-to-end meshing: domain, size field, particle flow, triangulation and post-optimization."""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import flow, postopt
from .domain import build_domain
from .io import read_obj
from .errors import InputError
from .sizefield import make_field
from .triangulate import SimplexMesh, quality_report

log = logging.getLogger(__name__)


@dataclass
class Case:
    """Everything needed for one meshing run.

    ``fixed`` rows are world coordinates; ``size`` is a mapping accepted by
    :func:`fluidmesh.sizefield.make_field`.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    size: dict
    fixed: np.ndarray | None = None
    flow_config: flow.FlowConfig = field(default_factory=flow.FlowConfig)
    opt_config: postopt.OptConfig = field(default_factory=postopt.OptConfig)
    run_postopt: bool = True
    name: str = ""


@dataclass
class MeshResult:
    mesh: SimplexMesh  # world coordinates
    report: object  # QualityReport of the returned mesh
    flow_report: object  # QualityReport of the particle mesh before post-optimization
    flow: flow.FlowResult
    opt: postopt.OptResult | None
    wall_time: float
    dim: int

    @property
    def converged(self):
        if not self.flow.converged:
            return False
        return self.opt is None or self.opt.converged


def size_spec_with_locals(size, fixed_rows, domain):
    """Fold ``x, y, z, h_local`` fixed-node rows into an anchor-based size spec.

    A uniform ``h`` becomes anchors at the corners of the domain bounding
    box; explicit anchors are kept and extended.
    """
    rows = [r for r in fixed_rows if len(r) == 4]
    if not rows:
        return size
    local = np.array(rows, dtype=float)
    if size.get("anchors") is not None:
        base = np.asarray(size["anchors"], dtype=float).reshape(-1, 4)
    elif size.get("h") is not None:
        lo, hi = domain.bbox
        dims = domain.ndim
        grids = np.meshgrid(*[[lo[d], hi[d]] for d in range(dims)], indexing="ij")
        corners = np.column_stack([g.ravel() for g in grids])
        if dims == 2:
            corners = domain.to_world(np.column_stack([corners, np.zeros(len(corners))]))
        base = np.column_stack([corners, np.full(len(corners), float(size["h"]))])
    else:
        raise InputError("a local size at a fixed node needs h or anchors")
    return {"anchors": np.vstack([base, local])}


def mesh_domain(domain, field, fixed=None, flow_config=None, opt_config=None, run_postopt=True):
    """Mesh a built domain; ``fixed`` is in world coordinates."""
    t0 = time.perf_counter()
    fixed_local = None
    if fixed is not None and len(fixed):
        fixed_local = domain.to_local(np.asarray(fixed, dtype=float).reshape(-1, 3))
    state = flow.init_state(domain, field, fixed_local, flow_config)
    result = flow.run(state.domain, field, state=state)
    mesh = flow.result_mesh(state, result)
    flow_report = quality_report(mesh, field)
    opt = None
    if domain.ndim == 3 and run_postopt:
        pinned = mesh.boundary | mesh.fixed
        opt = postopt.hybrid_optimize(mesh, field, pinned, state.domain, state.bgrid, opt_config)
        mesh = opt.mesh
    report = quality_report(mesh, field) if opt is not None else flow_report
    world = SimplexMesh(
        nodes=domain.to_world(mesh.nodes),
        elements=mesh.elements,
        dim=mesh.dim,
        boundary=mesh.boundary,
        fixed=mesh.fixed,
    )
    if fixed is not None and len(fixed):
        _restore_fixed(world, np.asarray(fixed, dtype=float).reshape(-1, 3))
    return MeshResult(world, report, flow_report, result, opt, time.perf_counter() - t0, domain.ndim)


def _restore_fixed(mesh, fixed_world):
    """Write the user's fixed coordinates back verbatim.

    In-plane frames round-trip exactly already; rotated planar frames can
    differ in the last bit.
    """
    idx = np.flatnonzero(mesh.fixed)
    if len(idx) == 0:
        return
    for p in fixed_world:
        j = idx[np.argmin(np.linalg.norm(mesh.nodes[idx] - p, axis=1))]
        mesh.nodes[j] = p


def run_case(case):
    domain = build_domain(case.vertices, case.triangles)
    fixed = None if case.fixed is None else np.asarray(case.fixed, dtype=float).reshape(-1, 3)
    field = make_field(case.size, domain)
    return mesh_domain(domain, field, fixed, case.flow_config, case.opt_config, case.run_postopt)


def load_case(path, size, fixed_rows=(), **kwargs):
    """Case from an OBJ file; ``fixed_rows`` are ``(x, y, z)`` or ``(x, y, z, h_local)``."""
    v, t = read_obj(path)
    domain = build_domain(v, t)
    size = size_spec_with_locals(size, list(fixed_rows), domain)
    fixed = np.array([r[:3] for r in fixed_rows], dtype=float).reshape(-1, 3) if len(fixed_rows) else None
    return Case(v, t, size, fixed, **kwargs)


def metrics(result):
    r = result.report
    return {
        "N_nodes": r.n_nodes,
        "N_elements": r.n_elements,
        "e_avg": f"{r.e_avg:.6g}",
        "e_avg_flow": f"{result.flow_report.e_avg:.6g}",
        "min_angle": f"{r.min_angle:.6g}",
        "max_angle": f"{r.max_angle:.6g}",
        "min_q": f"{r.min_quality:.6g}",
        "converged": int(result.converged),
        "flow_steps": result.flow.steps,
        "opt_iterations": 0 if result.opt is None else result.opt.iterations,
        "wall_time": f"{result.wall_time:.3f}",
    }
