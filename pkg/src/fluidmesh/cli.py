"""Command-line front end.

Exit status: 0 when the flow (and post-optimization, for solids) converged,
2 when a result was written but did not converge, 1 on any error.
"""

import argparse
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__, benchmarks, io, pipeline
from .errors import MeshError
from .flow import FlowConfig
from .postopt import OptConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

FLOW_KEYS = {"seed", "damping", "k_p", "max_steps", "injection_speed", "stiffness", "dt"}
OPT_KEYS = {"stiffness", "damping", "dt", "n_max", "aim_factor"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with 2, which is reserved for non-convergence here
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="fluidmesh", description="Particle-flow triangle and tetrahedral mesh generator.")
    p.add_argument("input", nargs="?", help="boundary OBJ (planar region or closed surface)")
    p.add_argument("-o", "--output", help="output directory (default: out)")
    p.add_argument("-c", "--config", help="TOML run configuration; flags override it")
    p.add_argument("--shape", choices=sorted(benchmarks.CASES), help="run a built-in benchmark case instead of INPUT")
    p.add_argument("--h", type=float, help="uniform target edge length")
    p.add_argument("--preset", choices=["radial"], help="analytic size preset")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="preset parameter (repeatable)")
    p.add_argument("--anchors", help="text file of size anchors, one 'x y z h' row per line")
    p.add_argument("--fixed", action="append", default=[], metavar="X,Y,Z[,H]",
                   help="fixed node, optionally with a local target size (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--no-postopt", action="store_true", help="skip tetrahedral post-optimization")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def parse_fixed(text):
    try:
        vals = [float(t) for t in text.replace(" ", "").split(",")]
    except ValueError:
        raise UsageError(f"bad --fixed value {text!r}") from None
    if len(vals) not in (3, 4):
        raise UsageError(f"--fixed takes x,y,z or x,y,z,h, got {text!r}")
    if len(vals) == 4 and not vals[3] > 0:
        raise UsageError("local size must be positive")
    return vals


def parse_param(text):
    key, sep, val = text.partition("=")
    if not sep:
        raise UsageError(f"--param expects KEY=VALUE, got {text!r}")
    try:
        return key.strip(), float(val)
    except ValueError:
        raise UsageError(f"bad --param value {text!r}") from None


def read_anchors(path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"anchor file not found: {path}")
    rows = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].replace(",", " ").strip()
        if line:
            rows.append([float(t) for t in line.split()])
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise UsageError(f"{path}: anchors need 4 columns (x y z h)")
    return arr


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None


def resolve(args):
    """Merge the config file and flags into (case, output directory)."""
    cfg = load_config(args.config) if args.config else {}
    base = Path(args.config).parent if args.config else Path(".")
    size = dict(cfg.get("size", {}))
    flow_kw = dict(cfg.get("flow", {}))
    opt_cfg = dict(cfg.get("postopt", {}))
    run_postopt = bool(opt_cfg.pop("enabled", True)) and not args.no_postopt
    fixed = [list(map(float, r)) for r in cfg.get("fixed", [])]
    fixed += [parse_fixed(f) for f in args.fixed]

    if args.h is not None:
        size = {"h": args.h}
    if args.preset is not None:
        size = {"preset": args.preset, "params": dict(parse_param(p) for p in args.param)}
    if args.anchors is not None:
        size = {"anchors": read_anchors(args.anchors)}
    if args.seed is not None:
        flow_kw["seed"] = args.seed
    if args.max_steps is not None:
        flow_kw["max_steps"] = args.max_steps
    bad = (set(flow_kw) - FLOW_KEYS) | (set(opt_cfg) - OPT_KEYS)
    if bad:
        raise UsageError(f"unknown configuration keys: {sorted(bad)}")
    flow_config = FlowConfig(verbose=args.verbose, **flow_kw)
    opt_config = OptConfig(**opt_cfg)

    out = Path(args.output or cfg.get("output", "out"))
    if args.shape:
        case = benchmarks.CASES[args.shape](flow_config.seed)
        if size:
            case.size = size
        if fixed:
            case.fixed = np.array([r[:3] for r in fixed])
        case.flow_config = flow_config
        case.opt_config = opt_config
        case.run_postopt = run_postopt
        return case, out

    source = args.input or cfg.get("input")
    if source is None:
        raise UsageError("an input OBJ (or --shape) is required")
    source = Path(source) if args.input else base / source
    if not source.is_file():
        raise FileNotFoundError(f"input file not found: {source}")
    if not size:
        raise UsageError("a size field is required (--h, --preset, --anchors or [size] in the config)")
    case = pipeline.load_case(source, size, fixed, flow_config=flow_config, opt_config=opt_config,
                              run_postopt=run_postopt, name=source.stem)
    return case, out


def write_outputs(result, out):
    out.mkdir(parents=True, exist_ok=True)
    mesh = result.mesh
    if result.dim == 2:
        io.write_obj(out / "mesh.obj", mesh.nodes, mesh.elements)
    else:
        io.write_node_ele(out / "mesh", mesh.nodes, mesh.elements, mesh.boundary)
    io.write_histogram_csv(out / "report.csv", result.report.histogram)
    io.write_metrics(out / "metrics.txt", pipeline.metrics(result))


def _origin(exc):
    """Name of the innermost fluidmesh module in the traceback."""
    name = None
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod.startswith("fluidmesh."):
            name = mod.split(".", 1)[1]
    return name


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        case, out = resolve(args)
        result = pipeline.run_case(case)
        write_outputs(result, out)
    except UsageError as exc:
        print(f"fluidmesh: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (MeshError, OSError, ValueError) as exc:
        where = _origin(exc)
        prefix = f"{where}: " if where else ""
        print(f"fluidmesh: error: {prefix}{exc}", file=sys.stderr)
        return EXIT_ERROR
    m = pipeline.metrics(result)
    print(f"{m['N_nodes']} nodes, {m['N_elements']} elements, e_avg {m['e_avg']}, "
          f"converged {bool(m['converged'])} -> {out}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
