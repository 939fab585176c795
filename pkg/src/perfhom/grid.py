"""Uniform cell-centred grids on boxes and masked grid functions."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, ResolutionError

__all__ = [
    "Box",
    "Grid",
    "GridFunction",
    "sample",
    "check_resolution",
    "masked_l2_distance",
    "masked_integral",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box prod_i [lower_i, upper_i); empty when any side is nonpositive."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise ValueError("box corners have different dimensions")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, d=2):
        return cls((0.0,) * d, (1.0,) * d)

    @classmethod
    def cube(cls, a, b, d=2):
        return cls((a,) * d, (b,) * d)

    @property
    def dimension(self):
        return len(self.lower)

    @property
    def widths(self):
        return np.subtract(self.upper, self.lower)

    @property
    def is_empty(self):
        return bool(np.any(self.widths <= 0))

    @property
    def volume(self):
        return 0.0 if self.is_empty else float(np.prod(self.widths))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x < self.upper), axis=-1)

    def intersect(self, other):
        return Box(np.maximum(self.lower, other.lower), np.minimum(self.upper, other.upper))

    def dilate(self, r):
        return Box(np.subtract(self.lower, r), np.add(self.upper, r))

    def includes(self, other):
        return other.is_empty or (
            np.all(np.asarray(other.lower) >= self.lower) and np.all(np.asarray(other.upper) <= self.upper)
        )

    def to_list(self):
        return [list(self.lower), list(self.upper)]


class Grid:
    """Cell-centred lattice on a box: nodes ``lower + (j + 1/2) h``, each carrying weight h^d."""

    def __init__(self, box, h):
        if not h > 0:
            raise ValueError("grid spacing must be positive")
        if box.is_empty:
            raise ValueError("grid box is empty")
        counts = box.widths / h
        n = np.rint(counts).astype(int)
        if np.any(n < 1) or np.any(np.abs(counts - n) > 1e-9 * np.maximum(counts, 1)):
            raise ValueError(f"box widths {box.widths.tolist()} are not integer multiples of h={h}")
        self.box = box
        self.h = float(h)
        self.shape = tuple(int(v) for v in n)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.box == other.box and self.h == other.h

    def __hash__(self):
        return hash((self.box, self.h))

    def __repr__(self):
        return f"Grid(box={self.box.to_list()}, h={self.h}, shape={self.shape})"

    @property
    def dimension(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def cell_volume(self):
        return self.h**self.dimension

    def axis(self, i):
        return self.box.lower[i] + (np.arange(self.shape[i]) + 0.5) * self.h

    def points(self):
        """Node coordinates with shape ``self.shape + (d,)``."""
        axes = [self.axis(i) for i in range(self.dimension)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def index_of(self, x):
        """Integer index of the cell containing x."""
        return np.floor((np.asarray(x, dtype=float) - self.box.lower) / self.h).astype(int)

    def region_mask(self, region):
        if region is None:
            return np.ones(self.shape, dtype=bool)
        return region.contains(self.points())


def check_resolution(h, delta, shape):
    """Require h <= delta * c_min / 4, i.e. 4 nodes across the smallest semi-axis."""
    limit = delta * shape.min_feature / 4
    if h > limit * (1 + 1e-12):
        raise ResolutionError(f"grid spacing h={h:g} exceeds delta*c_min/4={limit:g}; inclusions are unresolved")


class GridFunction:
    """Values on the nodes of a grid plus a membership mask.

    ``values`` has shape ``grid.shape`` or ``grid.shape + (k,)`` for a batch
    of k functions sharing the mask.
    """

    def __init__(self, grid, values, mask=None):
        values = np.asarray(values, dtype=float)
        if values.shape[: grid.dimension] != grid.shape:
            raise GridMismatchError(f"values shape {values.shape} does not match grid {grid.shape}")
        mask = np.ones(grid.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != grid.shape:
            raise GridMismatchError("mask shape does not match grid")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("grid function has non-finite values on masked nodes")
        self.grid = grid
        self.values = values
        self.mask = mask

    def __repr__(self):
        return f"GridFunction({self.grid!r}, masked={int(self.mask.sum())})"

    def with_values(self, values):
        return GridFunction(self.grid, values, self.mask)

    def __add__(self, c):
        return self.with_values(self.values + c)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def to_csv(self, path, header_comment=None):
        pts = self.grid.points().reshape(-1, self.grid.dimension)
        vals = self.values.reshape(len(pts), -1)
        if vals.shape[1] != 1:
            raise ValueError("CSV export supports single functions only")
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i + 1}" for i in range(self.grid.dimension)] + ["value", "mask"])
            for p, v, m in zip(pts, vals[:, 0], self.mask.ravel()):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v)), int(m)])

    @classmethod
    def from_csv(cls, path, grid):
        rows = []
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader)
        d = len(header) - 2
        if d != grid.dimension:
            raise GridMismatchError("CSV dimension does not match grid")
        for r in reader:
            rows.append([float(v) for v in r])
        data = np.array(rows)
        idx = grid.index_of(data[:, :d])
        values = np.full(grid.shape, np.nan)
        mask = np.zeros(grid.shape, dtype=bool)
        values[tuple(idx.T)] = data[:, d]
        mask[tuple(idx.T)] = data[:, d + 1] > 0
        return cls(grid, values, mask)


def sample(grid, f, pset=None, delta=None, check=True):
    """Sample ``f`` at the nodes; the mask marks nodes in delta*E (all nodes if ``pset`` is None).

    ``f`` is a callable on point arrays of shape (..., d) or a constant.
    """
    pts = grid.points()
    if callable(f):
        values = np.asarray(f(pts), dtype=float)
        if values.shape[: grid.dimension] != grid.shape:
            values = np.broadcast_to(values, grid.shape).copy()
    else:
        values = np.full(grid.shape, float(f))
    if pset is None:
        mask = np.ones(grid.shape, dtype=bool)
    else:
        if check:
            check_resolution(grid.h, delta, pset.shape)
        mask = pset.contains(pts, delta)
    return GridFunction(grid, values, mask)


def _same_grid(u, v):
    if u.grid != v.grid:
        raise GridMismatchError("grid functions live on different grids")


def masked_integral(u, region=None):
    """h^d * sum of values over masked nodes inside ``region``."""
    sel = u.mask & u.grid.region_mask(region)
    return math.fsum(u.values[sel].ravel()) * u.grid.cell_volume


def masked_l2_distance(u, v, region=None):
    """sqrt(h^d * sum (u - v)^2) over nodes masked in both functions and inside ``region``."""
    _same_grid(u, v)
    sel = u.mask & v.mask & u.grid.region_mask(region)
    diff = (u.values - v.values)[sel]
    return math.sqrt(math.fsum((diff * diff).ravel()) * u.grid.cell_volume)
