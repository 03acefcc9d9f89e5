"""Uniform-cell spatial index for particles and boundary vertices."""

import itertools
import math

import numpy as np

from .errors import GridConsistencyError


class UniformGrid:
    """Sparse uniform grid mapping integer cell coordinates to item ids.

    Parameters
    ----------
    cell_size : float
        Edge length of a cell.
    origin : array_like, optional
        World position of the corner of cell (0, 0, 0).
    dim : int
        2 restricts neighbor blocks to the z = 0 layer.
    """

    def __init__(self, cell_size, origin=(0.0, 0.0, 0.0), dim=3):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.cell_size = float(cell_size)
        self.origin = np.asarray(origin, dtype=float)
        self.dim = dim
        self.cells = {}
        self._where = {}

    @classmethod
    def build(cls, items, cell_size, origin=(0.0, 0.0, 0.0), dim=3):
        grid = cls(cell_size, origin, dim)
        for item_id, point in items:
            grid.insert(item_id, point)
        return grid

    def __len__(self):
        return len(self._where)

    def __contains__(self, item_id):
        return item_id in self._where

    def cell_of(self, point):
        p = (np.asarray(point, dtype=float) - self.origin) / self.cell_size
        return tuple(int(math.floor(c)) for c in p[:3])

    def insert(self, item_id, point):
        if item_id in self._where:
            raise GridConsistencyError(f"item {item_id!r} is already indexed")
        key = self.cell_of(point)
        self.cells.setdefault(key, []).append(item_id)
        self._where[item_id] = key

    def _block(self, key, rings=1):
        r = range(-rings, rings + 1)
        zr = r if self.dim == 3 else (0,)
        for dx, dy, dz in itertools.product(r, r, zr):
            yield (key[0] + dx, key[1] + dy, key[2] + dz)

    def neighbors(self, x, rings=1):
        """Ids in the 3x3(x3) block of cells around ``x``'s cell."""
        out = []
        for key in self._block(self.cell_of(x), rings):
            bucket = self.cells.get(key)
            if bucket:
                out.extend(bucket)
        return out

    def relocate(self, item_id, old, new):
        key_old = self.cell_of(old)
        if self._where.get(item_id) != key_old:
            raise GridConsistencyError(f"item {item_id!r} is not indexed at {key_old}")
        key_new = self.cell_of(new)
        if key_new == key_old:
            return
        bucket = self.cells[key_old]
        bucket.remove(item_id)
        if not bucket:
            del self.cells[key_old]
        self.cells.setdefault(key_new, []).append(item_id)
        self._where[item_id] = key_new

    def contents(self):
        """Mapping of cell key to a sorted tuple of ids (for comparisons)."""
        return {k: tuple(sorted(v)) for k, v in self.cells.items()}


def cell_keys(points, cell_size, origin=(0.0, 0.0, 0.0)):
    return np.floor((np.asarray(points) - np.asarray(origin)) / cell_size).astype(np.int64)


def _offsets(rings, dim, half):
    r = range(-rings, rings + 1)
    zr = r if dim == 3 else (0,)
    offs = [o for o in itertools.product(r, r, zr)]
    if half:
        offs = [o for o in offs if o >= (0, 0, 0)]
    return np.array(offs, dtype=np.int64)


def candidate_pairs(points, cell_size, rings=1, dim=3):
    """All pairs (i < j) whose cells lie within ``rings`` cells of each other.

    This is the vectorized cell-list form of the grid: points are bucketed by
    sorting their cell codes, so each call costs O(n log n) plus the output.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n < 2:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    keys = cell_keys(points, cell_size)
    lo = keys.min(axis=0) - rings
    span = keys.max(axis=0) - lo + rings + 1
    rel = keys - lo
    code = (rel[:, 0] * span[1] + rel[:, 1]) * span[2] + rel[:, 2]
    order = np.argsort(code, kind="stable")
    sorted_code = code[order]
    ii, jj = [], []
    for off in _offsets(rings, dim, half=True):
        shift = (off[0] * span[1] + off[1]) * span[2] + off[2]
        target = code + shift
        start = np.searchsorted(sorted_code, target, side="left")
        stop = np.searchsorted(sorted_code, target, side="right")
        counts = stop - start
        total = int(counts.sum())
        if total == 0:
            continue
        i = np.repeat(np.arange(n), counts)
        first = np.repeat(start - (np.cumsum(counts) - counts), counts)
        j = order[first + np.arange(total)]
        if not off.any():
            mask = i < j
            i, j = i[mask], j[mask]
        else:
            a = np.minimum(i, j)
            j = np.maximum(i, j)
            i = a
        ii.append(i)
        jj.append(j)
    if not ii:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(ii), np.concatenate(jj)
