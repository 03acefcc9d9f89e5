"""Mesh and report serialization (OBJ, node/ele, CSV histogram, metrics)."""

from pathlib import Path

import numpy as np

from .domain import parse_obj
from .errors import InputError

FMT = "%.17g"


def _write(path, text):
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _fmt(x):
    return FMT % float(x)


def obj_text(vertices, triangles):
    lines = [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in triangles]
    return "\n".join(lines) + "\n"


def write_obj(path, vertices, triangles):
    return _write(path, obj_text(vertices, triangles))


def read_obj(path):
    return parse_obj(Path(path).read_text())


def node_text(nodes, boundary=None):
    n = len(nodes)
    flags = np.zeros(n, dtype=int) if boundary is None else np.asarray(boundary, dtype=int)
    lines = [f"{n} 3 0 1"]
    lines += [
        f"{i + 1} {_fmt(x)} {_fmt(y)} {_fmt(z)} {int(b)}"
        for i, ((x, y, z), b) in enumerate(zip(nodes, flags))
    ]
    return "\n".join(lines) + "\n"


def ele_text(tets):
    lines = [f"{len(tets)} 4 0"]
    lines += [f"{i + 1} {a + 1} {b + 1} {c + 1} {d + 1}" for i, (a, b, c, d) in enumerate(tets)]
    return "\n".join(lines) + "\n"


def write_node_ele(prefix, nodes, tets, boundary=None):
    """Write ``prefix.node`` and ``prefix.ele``; returns both paths."""
    prefix = Path(prefix)
    node = _write(prefix.with_suffix(".node"), node_text(nodes, boundary))
    ele = _write(prefix.with_suffix(".ele"), ele_text(tets))
    return node, ele


def _rows(path):
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line.split())
    return out


def read_node(path):
    """Returns ``(nodes, boundary_flags)``."""
    rows = _rows(path)
    n, dim = int(rows[0][0]), int(rows[0][1])
    body = rows[1 : n + 1]
    if len(body) != n or dim != 3:
        raise InputError(f"{path}: malformed node file")
    nodes = np.array([[float(v) for v in r[1:4]] for r in body])
    flags = np.array([int(r[4]) if len(r) > 4 else 0 for r in body], dtype=bool)
    return nodes, flags


def read_ele(path):
    rows = _rows(path)
    m, k = int(rows[0][0]), int(rows[0][1])
    body = rows[1 : m + 1]
    if len(body) != m or k != 4:
        raise InputError(f"{path}: malformed element file")
    return np.array([[int(v) - 1 for v in r[1:5]] for r in body], dtype=np.int64).reshape(-1, 4)


def write_histogram_csv(path, rows):
    lines = ["bin_start,bin_end,count"]
    lines += [f"{a:g},{b:g},{c}" for a, b, c in rows]
    return _write(path, "\n".join(lines) + "\n")


def write_metrics(path, metrics):
    lines = [f"{k} {v}" for k, v in metrics.items()]
    return _write(path, "\n".join(lines) + "\n")


def read_metrics(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, _, v = line.partition(" ")
            out[k] = v.strip()
    return out
