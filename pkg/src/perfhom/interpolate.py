"""Lattice averages of grid functions and their interpolants.

Two families of averages are used to give a meaning to the convergence of
functions that live on a perforated domain:

* inclusion averages ``u_k = mean of u over delta*(k+K)`` (one value per
  inclusion, nodes at ``delta*k``);
* coarse averages ``u_k = mean of u over s*(k+[0,1)^d) cap delta*E`` on a
  mesoscale lattice of side ``s`` (nodes at the cube centres).

Cells that are not entirely inside the grid box are dropped.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, ResolutionError
from .grid import GridFunction

__all__ = [
    "LatticeAverages",
    "inclusion_averages",
    "coarse_averages",
    "piecewise_constant",
    "kuhn_affine",
    "discrete_dirichlet",
    "jensen_lower_bound",
]


@dataclass
class LatticeAverages:
    """Values indexed by lattice points.

    Attributes
    ----------
    scale : float
        Lattice spacing (delta for inclusion averages, cube side otherwise).
    indices : ndarray of int, shape (n, d)
    values : ndarray, shape (n,)
    kind : str
        "inclusion" or "coarse".
    counts : ndarray of int
        Number of masked nodes averaged per index.
    """

    scale: float
    indices: np.ndarray
    values: np.ndarray
    kind: str
    counts: np.ndarray

    @property
    def dimension(self):
        return self.indices.shape[1]

    @property
    def _cell_shift(self):
        # inclusion cells are centred on delta*k, coarse cells start at s*k
        return -0.5 if self.kind == "inclusion" else 0.0

    def node_positions(self):
        return self.scale * (self.indices + self._cell_shift + 0.5)

    def cell_index(self, x):
        return np.floor(np.asarray(x, dtype=float) / self.scale - self._cell_shift).astype(int)

    def as_dict(self):
        return {tuple(int(v) for v in k): float(v) for k, v in zip(self.indices, self.values)}

    def dense(self):
        """Values on the bounding box of the indices (NaN where missing) and its lower corner."""
        lo = self.indices.min(axis=0)
        hi = self.indices.max(axis=0)
        arr = np.full(tuple(hi - lo + 1), np.nan)
        arr[tuple((self.indices - lo).T)] = self.values
        return arr, lo

    def to_csv(self, path, header_comment=None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"k{i + 1}" for i in range(self.dimension)] + ["value"])
            for k, v in zip(self.indices, self.values):
                w.writerow([int(c) for c in k] + [repr(float(v))])


def _group_means(keys, vals):
    """Means per distinct key row, computed as ref + mean(v - ref) so constants are exact."""
    uniq, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    first = np.full(len(uniq), -1)
    first[inv[::-1]] = np.arange(len(inv))[::-1]
    ref = vals[first]
    dev = np.bincount(inv, weights=vals - ref[inv], minlength=len(uniq))
    return uniq, ref + dev / counts, counts


def inclusion_averages(u, pset, delta):
    """Mean of the masked values over each inclusion delta*(k+K) lying inside the grid box."""
    grid = u.grid
    d = grid.dimension
    lower = np.asarray(grid.box.lower)
    upper = np.asarray(grid.box.upper)
    ext = pset.shape.half_extent
    kmin = np.ceil(lower / delta + ext - 1e-12).astype(int)
    kmax = np.floor(upper / delta - ext + 1e-12).astype(int)
    if np.any(kmax < kmin):
        return LatticeAverages(delta, np.zeros((0, d), int), np.zeros(0), "inclusion", np.zeros(0, int))
    pts = grid.points()[u.mask]
    vals = u.values[u.mask]
    keys = pset.cell_index(pts, delta)
    keep = np.all((keys >= kmin) & (keys <= kmax), axis=1)
    idx, means, counts = _group_means(keys[keep], vals[keep])
    expected = int(np.prod(kmax - kmin + 1))
    if len(idx) < expected:
        raise ResolutionError(
            f"{expected - len(idx)} inclusions inside the box carry no masked node; refine the grid"
        )
    return LatticeAverages(float(delta), idx, means, "inclusion", counts)


def coarse_averages(u, pset, delta, epsilon, side_factor=1.0):
    """Mean of the masked values over mesoscale cubes s*(k+[0,1)^d), s = side_factor*epsilon.

    Only cubes entirely inside the grid box are kept.
    """
    if epsilon < 2 * delta:
        raise PreconditionError(f"coarse averages need epsilon >= 2*delta (epsilon={epsilon}, delta={delta})")
    grid = u.grid
    d = grid.dimension
    s = float(side_factor * epsilon)
    lower = np.asarray(grid.box.lower)
    upper = np.asarray(grid.box.upper)
    kmin = np.ceil(lower / s - 1e-12).astype(int)
    kmax = np.floor(upper / s + 1e-12).astype(int) - 1
    if np.any(kmax < kmin):
        return LatticeAverages(s, np.zeros((0, d), int), np.zeros(0), "coarse", np.zeros(0, int))
    pts = grid.points()[u.mask]
    vals = u.values[u.mask]
    keys = np.floor(pts / s).astype(int)
    keep = np.all((keys >= kmin) & (keys <= kmax), axis=1)
    idx, means, counts = _group_means(keys[keep], vals[keep])
    expected = int(np.prod(kmax - kmin + 1))
    if len(idx) < expected:
        raise ResolutionError(f"{expected - len(idx)} mesoscale cubes contain no masked node")
    return LatticeAverages(s, idx, means, "coarse", counts)


def _covered(avgs, grid):
    if len(avgs.indices) == 0:
        return np.zeros(grid.shape, dtype=bool), None, None, None
    arr, lo = avgs.dense()
    cells = avgs.cell_index(grid.points()) - lo
    inside = np.all((cells >= 0) & (cells < np.array(arr.shape)), axis=-1)
    return inside, arr, lo, cells


def piecewise_constant(avgs, grid):
    """Grid function equal to the average of the cell containing each node.

    Nodes outside the retained cells are left unmasked.
    """
    inside, arr, lo, cells = _covered(avgs, grid)
    values = np.zeros(grid.shape)
    if arr is not None:
        c = np.where(inside[..., None], cells, 0)
        looked = arr[tuple(np.moveaxis(c, -1, 0))]
        inside &= ~np.isnan(looked)
        values[inside] = looked[inside]
    return GridFunction(grid, values, inside)


def kuhn_affine(avgs, grid):
    """Piecewise-affine interpolation of lattice data through the Kuhn split.

    In 2-D each lattice square is cut along its main diagonal: on the
    triangle f1 >= f2 the interpolant is v00 + f1 (v10 - v00) + f2 (v11 - v10),
    on the other one v00 + f2 (v01 - v00) + f1 (v11 - v01).  Nodes outside the
    convex hull of the data are unmasked.
    """
    d = avgs.dimension
    if d > 2:
        raise NotImplementedError("Kuhn interpolation is implemented for d <= 2 only")
    values = np.zeros(grid.shape)
    mask = np.zeros(grid.shape, dtype=bool)
    if len(avgs.indices) == 0:
        return GridFunction(grid, values, mask)
    arr, lo = avgs.dense()
    # lattice coordinates of each node relative to the data nodes
    t = grid.points() / avgs.scale - (avgs._cell_shift + 0.5) - lo
    k = np.floor(t).astype(int)
    f = t - k
    # points lying exactly on the last lattice line belong to the previous square
    top = np.array(arr.shape) - 1
    edge = (k == top) & (f == 0)
    k = np.where(edge, k - 1, k)
    f = np.where(edge, 1.0, f)
    ok = np.all((k >= 0) & (k < top), axis=-1) if np.all(top > 0) else np.zeros(grid.shape, bool)
    kk = np.where(ok[..., None], k, 0)

    def v(*shift):
        return arr[tuple(np.moveaxis(kk + np.array(shift), -1, 0))]

    if d == 1:
        v0, v1 = v(0), v(1)
        out = v0 + f[..., 0] * (v1 - v0)
    else:
        f1, f2 = f[..., 0], f[..., 1]
        v00, v10, v01, v11 = v(0, 0), v(1, 0), v(0, 1), v(1, 1)
        lower_tri = v00 + f1 * (v10 - v00) + f2 * (v11 - v10)
        upper_tri = v00 + f2 * (v01 - v00) + f1 * (v11 - v01)
        out = np.where(f1 >= f2, lower_tri, upper_tri)
    ok &= np.isfinite(out)
    values[ok] = out[ok]
    mask[ok] = True
    return GridFunction(grid, values, mask)


def discrete_dirichlet(avgs, scale=None):
    """sum over unordered nearest-neighbour pairs of s^d ((v_k - v_k') / s)^2, s = ``scale``."""
    s = avgs.scale if scale is None else float(scale)
    if len(avgs.indices) == 0:
        return 0.0
    arr, _ = avgs.dense()
    d = arr.ndim
    terms = []
    for ax in range(d):
        diff = np.diff(arr, axis=ax)
        diff = diff[np.isfinite(diff)]
        terms.append(math.fsum((diff * diff).ravel()))
    return s ** (d - 2) * math.fsum(terms)


def jensen_lower_bound(avgs, epsilon, cell_volume):
    """eps^-(d+2) * sum over ordered neighbour cubes of m_k m_k' (v_k - v_k')^2.

    ``m_k = counts_k * cell_volume`` is the masked measure of cube k.  When
    every pair of points in neighbouring cubes lies within the kernel range
    and carries weight 1, this is a lower bound for the energy by Jensen's
    inequality.
    """
    if len(avgs.indices) == 0:
        return 0.0
    d = avgs.dimension
    arr, lo = avgs.dense()
    cnt = np.full(arr.shape, np.nan)
    cnt[tuple((avgs.indices - lo).T)] = avgs.counts * cell_volume
    terms = []
    for ax in range(d):
        dv = np.diff(arr, axis=ax)
        sl0 = [slice(None)] * d
        sl1 = [slice(None)] * d
        sl0[ax] = slice(0, -1)
        sl1[ax] = slice(1, None)
        mm = cnt[tuple(sl0)] * cnt[tuple(sl1)]
        t = mm * dv * dv
        terms.append(math.fsum(t[np.isfinite(t)].ravel()))
    return 2.0 * epsilon ** -(d + 2) * math.fsum(terms)
