"""Periodic perforated sets E = K + Z^d and their connectivity thresholds.

Inclusion shapes work in *local* cell coordinates: a point ``y`` of the
unit cell centred at the origin, ``y in [-1/2, 1/2)^d``.  A
:class:`PerforatedSet` maps physical points ``x`` to local coordinates
through ``x / delta`` modulo the lattice.

Two thresholds govern the scaling regimes:

* ``D0`` -- the smallest gap ``dist(K, K + k)`` over ``k != 0``;
* ``D``  -- the smallest ``r`` for which the translates with gap ``< r``
  link every inclusion, i.e. generate the whole lattice Z^d.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage, optimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import PreconditionError

__all__ = [
    "Ball",
    "Ellipse",
    "Mask",
    "PerforatedSet",
    "ConnectivityReport",
    "inclusion_distance",
    "compute_D0",
    "compute_D",
    "lattice_index",
    "window_offsets",
    "components",
    "read_pgm",
    "write_pgm",
    "shape_from_spec",
]


def _unit_ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class Ball:
    """Closed ball of radius ``c`` centred in the cell."""

    c: float
    dimension: int = 2

    def __post_init__(self):
        if not 0 < self.c < 0.5:
            raise ValueError(f"ball radius must satisfy 0 < c < 1/2, got c={self.c}")

    @property
    def volume(self):
        return _unit_ball_volume(self.dimension) * self.c**self.dimension

    @property
    def min_feature(self):
        return self.c

    @property
    def half_extent(self):
        return np.full(self.dimension, self.c)

    def contains_local(self, y):
        y = np.asarray(y, dtype=float)
        return np.einsum("...i,...i->...", y, y) <= self.c**2

    def gap(self, k):
        return max(float(np.linalg.norm(k)) - 2 * self.c, 0.0)

    def spec(self):
        return {"type": "ball", "c": self.c}


@dataclass(frozen=True)
class Ellipse:
    """Closed axis-aligned ellipse (ellipsoid) with semi-axes ``c``."""

    c: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.c))
        if len(c) not in (1, 2, 3):
            raise ValueError("ellipse needs 1 to 3 semi-axes")
        if not all(0 < v < 0.5 for v in c):
            raise ValueError(f"ellipse semi-axes must satisfy 0 < c_i < 1/2, got {list(c)}")
        object.__setattr__(self, "c", c)

    @property
    def dimension(self):
        return len(self.c)

    @property
    def volume(self):
        return _unit_ball_volume(self.dimension) * float(np.prod(self.c))

    @property
    def min_feature(self):
        return min(self.c)

    @property
    def half_extent(self):
        return np.array(self.c)

    def contains_local(self, y):
        y = np.asarray(y, dtype=float) / np.array(self.c)
        return np.einsum("...i,...i->...", y, y) <= 1.0

    def gap(self, k):
        # K is convex and centrally symmetric, so dist(K, K+k) = dist(k, 2K)
        return _point_ellipse_distance(np.asarray(k, dtype=float), 2 * np.array(self.c))

    def spec(self):
        return {"type": "ellipse", "c": list(self.c)}


def _point_ellipse_distance(p, a):
    """Euclidean distance from ``p`` to the solid ellipse with semi-axes ``a``."""
    if np.sum((p / a) ** 2) <= 1.0:
        return 0.0
    a2 = a * a

    def f(t):
        return np.sum((a * p / (a2 + t)) ** 2) - 1.0

    hi = float(np.linalg.norm(p) * a.max()) + 1.0
    t = optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    x = a2 * p / (a2 + t)
    return float(np.linalg.norm(p - x))


@dataclass(frozen=True, eq=False)
class Mask:
    """Raster inclusion: ``raster[i1, ..., id]`` covers the pixel
    ``prod_j [i_j/m - 1/2, (i_j+1)/m - 1/2]`` of the centred unit cell.

    Array axes are coordinate axes (axis 0 is x1).  The all-true raster is
    accepted as a surrogate for the full space E = R^d.
    """

    raster: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.raster, dtype=bool)
        if r.ndim not in (1, 2, 3) or len(set(r.shape)) != 1:
            raise ValueError("mask raster must be a cube array of dimension 1 to 3")
        if not r.any():
            raise ValueError("mask raster is empty")
        if not r.all():
            border = np.zeros_like(r)
            for ax in range(r.ndim):
                sl = [slice(None)] * r.ndim
                sl[ax] = 0
                border[tuple(sl)] = True
                sl[ax] = -1
                border[tuple(sl)] = True
            if (r & border).any():
                raise ValueError("mask inclusion must lie strictly inside the cell (border pixels set)")
            _, n = ndimage.label(r)
            if n != 1:
                raise ValueError(f"mask inclusion must be connected under face adjacency, found {n} pieces")
        r.setflags(write=False)
        object.__setattr__(self, "raster", r)

    @classmethod
    def full(cls, m, dimension=2):
        return cls(np.ones((m,) * dimension, dtype=bool))

    @classmethod
    def from_pgm(cls, path):
        return cls(read_pgm(path) > 0)

    @property
    def m(self):
        return self.raster.shape[0]

    @property
    def dimension(self):
        return self.raster.ndim

    @property
    def is_full(self):
        return bool(self.raster.all())

    @property
    def volume(self):
        return float(self.raster.mean())

    @property
    def half_extent(self):
        if self.is_full:
            return np.full(self.dimension, 0.5)
        idx = np.argwhere(self.raster)
        lo = idx.min(axis=0) / self.m - 0.5
        hi = (idx.max(axis=0) + 1) / self.m - 0.5
        return np.maximum(np.abs(lo), np.abs(hi))

    @property
    def min_feature(self):
        if self.is_full:
            return math.inf
        idx = np.argwhere(self.raster)
        return float((idx.max(axis=0) - idx.min(axis=0) + 1).min()) / (2 * self.m)

    @property
    def tolerance(self):
        """Distance error bar: one pixel diagonal."""
        return math.sqrt(self.dimension) / self.m

    def contains_local(self, y):
        y = np.asarray(y, dtype=float)
        idx = np.floor((y + 0.5) * self.m).astype(int)
        idx = np.clip(idx, 0, self.m - 1)
        return self.raster[tuple(np.moveaxis(idx, -1, 0))]

    def pixel_centers(self):
        return (np.argwhere(self.raster) + 0.5) / self.m - 0.5

    def gap(self, k):
        """Distance between the closed pixel unions of K and K + k."""
        if self.is_full:
            return max(float(np.abs(k).max()) - 1.0, 0.0)
        pts = self.pixel_centers()
        tree = cKDTree(pts)
        shifted = pts + np.asarray(k, dtype=float)
        dmin, _ = tree.query(shifted)
        cut = dmin.min() + self.tolerance
        best = math.inf
        for i, nbrs in enumerate(tree.query_ball_point(shifted, cut)):
            if nbrs:
                v = np.abs(shifted[i] - pts[nbrs]) - 1.0 / self.m
                best = min(best, float(np.linalg.norm(np.maximum(v, 0.0), axis=1).min()))
        return best

    def spec(self):
        return {"type": "mask", "m": self.m, "volume": self.volume}


def read_pgm(path):
    """Read a P2 (ASCII) or P5 (binary) PGM file into an integer array."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P5":
        pos += 1
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        arr = np.frombuffer(data[pos:], dtype=dtype, count=width * height)
    elif magic == b"P2":
        arr = np.array(data[pos:].split(), dtype=int)[: width * height]
    else:
        raise ValueError(f"{path}: not a P2/P5 PGM file")
    if arr.size != width * height:
        raise ValueError(f"{path}: truncated PGM data")
    return arr.reshape(height, width).astype(int)


def write_pgm(path, raster):
    """Write a 2-D 0/1 raster as a binary P5 PGM."""
    r = np.asarray(raster, dtype=np.uint8)
    header = f"P5\n{r.shape[1]} {r.shape[0]}\n1\n".encode()
    Path(path).write_bytes(header + r.tobytes())


def shape_from_spec(spec, dimension=2, base_dir=None):
    kind = spec.get("type")
    if kind == "ball":
        return Ball(float(spec["c"]), dimension)
    if kind == "ellipse":
        return Ellipse(tuple(spec["c"]))
    if kind == "mask":
        if "file" in spec:
            path = Path(spec["file"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return Mask.from_pgm(path)
        if spec.get("full"):
            return Mask.full(int(spec.get("m", 16)), dimension)
        raise ValueError("mask shape needs 'file' or 'full = true'")
    raise ValueError(f"unknown shape type {kind!r}; expected ball, ellipse or mask")


@dataclass(frozen=True)
class PerforatedSet:
    """E = K + Z^d for an inclusion shape K."""

    shape: object

    @property
    def dimension(self):
        return self.shape.dimension

    @property
    def volume_fraction(self):
        return self.shape.volume

    def local_coordinates(self, x, delta):
        y = np.asarray(x, dtype=float) / delta
        return y - np.floor(y + 0.5)

    def contains(self, x, delta):
        if not delta > 0:
            raise ValueError("delta must be positive")
        return self.shape.contains_local(self.local_coordinates(x, delta))

    def cell_index(self, x, delta):
        """Lattice index k of the cell delta*(k + [-1/2, 1/2)^d) containing x."""
        return np.floor(np.asarray(x, dtype=float) / delta + 0.5).astype(int)


def window_offsets(d, window=2):
    """Nonzero k in Z^d with |k|_inf <= window, ordered by (|k|_inf, |k|_2, lexicographic)."""
    ks = [k for k in itertools.product(range(-window, window + 1), repeat=d) if any(k)]
    ks.sort(key=lambda k: (max(map(abs, k)), sum(v * v for v in k), k))
    return [np.array(k) for k in ks]


def inclusion_distance(shape, k):
    """dist(K, K + k) for a nonzero lattice vector k."""
    k = np.atleast_1d(np.asarray(k))
    if not np.any(k):
        raise ValueError("inclusion_distance needs k != 0")
    if k.shape != (shape.dimension,):
        raise ValueError(f"k must have {shape.dimension} components")
    return shape.gap(k)


def compute_D0(shape, window=2):
    """min over nonzero k in the window of dist(K, K + k)."""
    return min(inclusion_distance(shape, k) for k in window_offsets(shape.dimension, window))


def lattice_index(vectors, d):
    """Index [Z^d : L] of the lattice spanned by integer ``vectors``; 0 if L has rank < d.

    Integer Gaussian elimination: the product of the pivots of a triangular
    basis is the covolume of L.
    """
    rows = [[int(v) for v in vec] for vec in vectors]
    rows = [r for r in rows if any(r)]
    index = 1
    for col in range(d):
        active = [r for r in rows if r[col] != 0]
        rest = [r for r in rows if r[col] == 0]
        if not active:
            return 0
        while len(active) > 1:
            active.sort(key=lambda r: abs(r[col]))
            p = active[0]
            nxt = [p]
            for r in active[1:]:
                q = r[col] // p[col]
                r = [a - q * b for a, b in zip(r, p)]
                (nxt if r[col] != 0 else rest).append(r)
            active = nxt
        index *= abs(active[0][col])
        rows = [r for r in rest if any(r)]
    return index


def _gap_table(shape, window):
    ks = window_offsets(shape.dimension, window)
    return ks, np.array([inclusion_distance(shape, k) for k in ks])


def compute_D(pset, window=2, tol=1e-6):
    """Infimal r such that translates with gap < r generate Z^d.

    The predicate is monotone in r and only changes at gap values, so the
    search runs over the sorted candidate gaps (a discrete bisection); the
    result is exact up to the accuracy of the gaps themselves.
    """
    shape = pset.shape if isinstance(pset, PerforatedSet) else pset
    d = shape.dimension
    ks, gaps = _gap_table(shape, window)
    cand = np.unique(gaps)

    def spans(j):
        return lattice_index([k for k, g in zip(ks, gaps) if g <= cand[j]], d) == 1

    lo, hi = 0, len(cand) - 1
    if not spans(hi):
        raise PreconditionError("translates within the search window never connect E; enlarge the window")
    while lo < hi:
        mid = (lo + hi) // 2
        if spans(mid):
            hi = mid
        else:
            lo = mid + 1
    return float(cand[lo])


@dataclass
class ConnectivityReport:
    """Connected components of delta*E + B_{epsilon/2} restricted to a box."""

    delta: float
    epsilon: float
    indices: np.ndarray
    labels: np.ndarray
    count: int
    component_count_per_period: float
    generator_translations: list = field(default_factory=list)

    @property
    def connected(self):
        return self.component_count_per_period == 1

    def label_of(self, k):
        hit = np.nonzero((self.indices == np.asarray(k)).all(axis=1))[0]
        return int(self.labels[hit[0]]) if hit.size else None

    def to_dict(self):
        per = self.component_count_per_period
        return {
            "delta": self.delta,
            "epsilon": self.epsilon,
            "components_in_box": self.count,
            "components_per_period": per if math.isfinite(per) else "inf",
            "generators": [list(map(int, k)) for k in self.generator_translations],
        }


def components(pset, delta, epsilon, omega, window=2):
    """Label the inclusions delta*(k+K) meeting ``omega`` by connectivity at range epsilon.

    Two inclusions are linked when their gap is < epsilon.  ``omega`` is any
    object with ``lower`` and ``upper`` arrays (see :class:`perfhom.grid.Box`).
    """
    if not (delta > 0 and epsilon > 0):
        raise ValueError("delta and epsilon must be positive")
    shape = pset.shape
    d = shape.dimension
    r = float(epsilon) / float(delta)
    ks, gaps = _gap_table(shape, window)
    gens = [k for k, g in zip(ks, gaps) if g < r]
    # keep one of each +/- pair for reporting
    half = [k for k in gens if tuple(k) > tuple(-k)]
    idx = lattice_index(gens, d)
    per = float(idx) if idx > 0 else math.inf

    lower = np.asarray(omega.lower, dtype=float)
    upper = np.asarray(omega.upper, dtype=float)
    ext = shape.half_extent
    kmin = np.ceil(lower / delta - ext).astype(int)
    kmax = np.floor(upper / delta + ext).astype(int)
    ranges = [range(a, b + 1) for a, b in zip(kmin, kmax)]
    indices = np.array(list(itertools.product(*ranges)), dtype=int).reshape(-1, d)
    n = len(indices)
    if n == 0:
        return ConnectivityReport(delta, epsilon, indices, np.zeros(0, int), 0, per, half)
    shape_n = kmax - kmin + 1
    flat = np.ravel_multi_index((indices - kmin).T, shape_n)
    rows, cols = [], []
    for g in half:
        tgt = indices + g
        ok = np.all((tgt >= kmin) & (tgt <= kmax), axis=1)
        rows.append(flat[ok])
        cols.append(np.ravel_multi_index((tgt[ok] - kmin).T, shape_n))
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
    else:
        rows = cols = np.zeros(0, dtype=int)
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    count, labels = connected_components(adj, directed=False)
    return ConnectivityReport(delta, epsilon, indices, labels, int(count), per, half)
