"""Periodic cell problem and homogenized tensor.

For a direction xi the cell form is

    Q(u) = sum_{x in M} sum_{y in E} w((x - y)/kappa) (<xi, x - y> + u(x) - u(y))^2 h^2d

over the masked nodes M of the unit cell, with u 1-periodic.  Because u is
periodic, all translated copies y + k of a node collapse onto one
periodised offset table indexed by the node offset o = x - y (mod 1):

    W(o) = h^2d sum_k w(o + k),   B(o) = h^2d sum_k w(o + k)(o + k),
    C(o) = h^2d sum_k w(o + k)(o + k)(o + k)^T,

and Q(u) = c0 + 4 beta.u + 2 u.Lu with L = diag(W*1_M) - W, beta = (xi.B)*1_M
and c0 = sum_M xi^T (C*1_M) xi (``*`` is circular convolution on the torus).
Convolutions are done with FFTs, so the matrix L is never formed.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels as _k
from .energy import pair_weight
from .errors import ConvergenceError, PreconditionError, ResolutionError

__all__ = [
    "CellDiscretization",
    "QuadraticForm",
    "CellSolution",
    "HomogenizedTensor",
    "assemble",
    "minimize",
    "dense_minimum",
    "homogenized_tensor",
]


class CellDiscretization:
    """Periodic node lattice of the unit cell with the periodised weight tables.

    Parameters
    ----------
    shape : inclusion shape (Ball, Ellipse, Mask)
    kernel : RadialKernel
    kappa : float
        Kernel range in units of the period.
    m : int
        Nodes per axis; node j sits at (j + 1/2)/m - 1/2.
    check : bool
        Require at least 8 nodes across the thinnest inclusion axis.
    """

    def __init__(self, shape, kernel, kappa, m, tol_tail=1e-6, check=True):
        if not kappa > 0:
            raise ValueError("kappa must be positive")
        d = kernel.dimension
        if shape.dimension != d:
            raise ValueError("shape and kernel dimensions differ")
        if check and 2 * shape.min_feature * m < 8:
            raise ResolutionError(f"m={m} puts fewer than 8 nodes across the inclusion")
        self.shape = shape
        self.kernel = kernel
        self.kappa = float(kappa)
        self.m = int(m)
        self.d = d
        self.h = 1.0 / m
        p = (np.arange(m) + 0.5) / m - 0.5
        pts = np.stack(np.meshgrid(*([p] * d), indexing="ij"), -1)
        self.mask = np.asarray(shape.contains_local(pts), dtype=bool)
        if not self.mask.any():
            raise PreconditionError("cell mask is empty")
        self.R = float(_k.truncation_radius(kernel, tol_tail))
        self.window = int(math.ceil(self.kappa * self.R)) + 1
        self._build_tables()
        self._fmask = np.fft.rfftn(self.mask.astype(float))
        self.labels, self.n_components = self._components()

    @property
    def unknowns(self):
        return int(self.mask.sum())

    def _build_tables(self):
        d, m, h, kap = self.d, self.m, self.h, self.kappa
        o = np.stack(np.meshgrid(*([np.arange(m) * h] * d), indexing="ij"), -1).reshape(-1, d)
        W = np.zeros(len(o))
        B = np.zeros((d, len(o)))
        C = np.zeros((d, d, len(o)))
        reach = kap * self.R + h * math.sqrt(d)
        for k in itertools.product(range(-self.window, self.window + 1), repeat=d):
            z = o + np.array(k, dtype=float)
            near = np.linalg.norm(z, axis=1) < reach + math.sqrt(d)
            if not near.any():
                continue
            zn = z[near]
            w = pair_weight(self.kernel, zn / kap, h / kap, self.R)
            W[near] += w
            for i in range(d):
                B[i, near] += w * zn[:, i]
                for j in range(i, d):
                    C[i, j, near] += w * zn[:, i] * zn[:, j]
        for i in range(d):
            for j in range(i):
                C[i, j] = C[j, i]
        s = h ** (2 * d)
        shp = (m,) * d
        self.W = (W * s).reshape(shp)
        self.B = (B * s).reshape((d,) + shp)
        self.C = (C * s).reshape((d, d) + shp)
        self._fW = np.fft.rfftn(self.W)
        self._fB = [np.fft.rfftn(b) for b in self.B]
        self._fC = [[np.fft.rfftn(self.C[i, j]) for j in range(d)] for i in range(d)]
        self._deg = self._conv(self._fW, self.mask.astype(float))

    def _conv(self, ftable, f):
        return np.fft.irfftn(ftable * np.fft.rfftn(f), s=f.shape, axes=range(f.ndim))

    def _components(self):
        """Connected components of the masked nodes under nonzero weights (on the torus)."""
        fpos = np.fft.rfftn((self.W > 0).astype(float))
        labels = np.full(self.mask.shape, -1)
        n = 0
        while True:
            free = np.argwhere(self.mask & (labels < 0))
            if len(free) == 0:
                break
            front = np.zeros(self.mask.shape)
            front[tuple(free[0])] = 1.0
            while True:
                grown = (self._conv(fpos, front) > 0.5) & self.mask
                grown |= front > 0
                if grown.sum() == (front > 0).sum():
                    break
                front = grown.astype(float)
            labels[front > 0] = n
            n += 1
        return labels, n

    # operators on full m^d arrays, zero off the mask
    def laplacian(self, u):
        u = np.where(self.mask, u, 0.0)
        return np.where(self.mask, self._deg * u - self._conv(self._fW, u), 0.0)

    def beta(self, xi):
        fb = sum(float(x) * f for x, f in zip(xi, self._fB))
        return np.where(self.mask, np.fft.irfftn(fb * self._fmask, s=self.mask.shape, axes=range(self.d)), 0.0)

    def c0(self, xi):
        xi = np.asarray(xi, dtype=float)
        tot = []
        for i in range(self.d):
            for j in range(self.d):
                if xi[i] * xi[j] != 0:
                    g = np.fft.irfftn(self._fC[i][j] * self._fmask, s=self.mask.shape, axes=range(self.d))
                    tot.append(xi[i] * xi[j] * math.fsum(g[self.mask].ravel()))
        return math.fsum(tot)

    def project(self, u):
        """Remove the mean of u on every connected component."""
        out = np.where(self.mask, u, 0.0)
        for c in range(self.n_components):
            sel = self.labels == c
            out[sel] -= out[sel].mean()
        return out


@dataclass
class QuadraticForm:
    """Q(u) = c0 + 4 beta.u + 2 u.Lu on the periodic masked nodes."""

    cell: CellDiscretization
    xi: np.ndarray
    c0: float
    beta: np.ndarray

    def value(self, u):
        u = np.where(self.cell.mask, u, 0.0)
        return self.c0 + 4.0 * float(np.vdot(self.beta, u)) + 2.0 * float(np.vdot(u, self.cell.laplacian(u)))

    def value_direct(self, u):
        """Q(u) by an explicit loop over node pairs and translates (small cells only)."""
        return _direct_form(self.cell, self.xi, u)

    def gradient(self, u):
        return 4.0 * self.beta + 4.0 * self.cell.laplacian(u)

    def hessp(self, v):
        return 4.0 * self.cell.laplacian(v)


@dataclass
class CellSolution:
    corrector: np.ndarray
    value: float
    iterations: int
    residual: float


def assemble(cell, xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (cell.d,):
        raise ValueError(f"xi must have {cell.d} components")
    return QuadraticForm(cell, xi, cell.c0(xi), cell.beta(xi))


def minimize(cell, xi, tol=1e-10, maxiter=None):
    """Minimize Q by conjugate gradients on L u = -beta with mean-zero gauge per component."""
    form = assemble(cell, xi)
    b = cell.project(-form.beta)
    bnorm = math.sqrt(float(np.vdot(b, b)))
    if bnorm == 0.0:
        u = np.zeros(cell.mask.shape)
        return CellSolution(u, form.c0, 0, 0.0)
    maxiter = 10 * cell.unknowns if maxiter is None else maxiter
    u = np.zeros(cell.mask.shape)
    r = b.copy()
    p = r.copy()
    rr = float(np.vdot(r, r))
    it = 0
    while math.sqrt(rr) > tol * bnorm:
        if it >= maxiter:
            raise ConvergenceError(
                f"cell CG did not reach relative residual {tol:g} in {maxiter} iterations",
                iterations=it, residual=math.sqrt(rr) / bnorm,
            )
        Ap = cell.project(cell.laplacian(p))
        pAp = float(np.vdot(p, Ap))
        if not pAp > 0.0:
            raise ConvergenceError(
                f"cell CG broke down (p.Lp = {pAp:g}) before reaching relative residual {tol:g}",
                iterations=it, residual=math.sqrt(rr) / bnorm,
            )
        alpha = rr / pAp
        u += alpha * p
        r -= alpha * Ap
        rr_new = float(np.vdot(r, r))
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    # recompute the true residual to report it honestly
    res = cell.project(-form.beta - cell.laplacian(u))
    residual = math.sqrt(float(np.vdot(res, res))) / bnorm
    value = form.c0 + 2.0 * float(np.vdot(form.beta, u))
    return CellSolution(u, value, it, residual)


def _pair_arrays(cell):
    idx = np.argwhere(cell.mask)
    pts = (idx + 0.5) / cell.m - 0.5
    return idx, pts


def _direct_form(cell, xi, u):
    """Q(u) summed pair by pair over translates, float coordinates."""
    idx, pts = _pair_arrays(cell)
    uv = u[cell.mask]
    xi = np.asarray(xi, dtype=float)
    s = cell.h ** (2 * cell.d)
    ks = np.array(list(itertools.product(range(-cell.window, cell.window + 1), repeat=cell.d)), dtype=float)
    parts = []
    for i, x in enumerate(pts):
        for j, y in enumerate(pts):
            z = x - (y + ks)
            w = pair_weight(cell.kernel, z / cell.kappa, cell.h / cell.kappa, cell.R)
            parts.append(math.fsum(w * (z @ xi + uv[i] - uv[j]) ** 2))
    return s * math.fsum(parts)


def dense_minimum(cell, xi):
    """Oracle: assemble L and beta explicitly, minimise through an eigendecomposition."""
    idx, pts = _pair_arrays(cell)
    n = len(pts)
    xi = np.asarray(xi, dtype=float)
    s = cell.h ** (2 * cell.d)
    ks = np.array(list(itertools.product(range(-cell.window, cell.window + 1), repeat=cell.d)), dtype=float)
    Wm = np.zeros((n, n))
    beta = np.zeros(n)
    c0 = 0.0
    for i in range(n):
        z = pts[i][None, None, :] - (pts[None, :, :] + ks[:, None, :])
        w = pair_weight(cell.kernel, z.reshape(-1, cell.d) / cell.kappa, cell.h / cell.kappa, cell.R)
        w = w.reshape(len(ks), n)
        zx = z @ xi
        Wm[i] = w.sum(axis=0) * s
        beta[i] = (w * zx).sum() * s
        c0 += (w * zx * zx).sum() * s
    L = np.diag(Wm.sum(axis=1)) - Wm
    ev, V = np.linalg.eigh(L)
    keep = ev > 1e-12 * max(ev.max(), 1e-300)
    inv = np.zeros_like(ev)
    inv[keep] = 1.0 / ev[keep]
    u = -V @ (inv * (V.T @ beta))
    return c0 + 2.0 * float(beta @ u), u


@dataclass
class HomogenizedTensor:
    matrix: np.ndarray
    kappa: float
    raw_min: list
    cg_iters: int
    residual: float
    normalization: str = "kappa^-(d+2)"
    correctors: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "kappa": self.kappa,
            "normalization": self.normalization,
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "raw_min": [float(v) for v in self.raw_min],
            "cg_iters": int(self.cg_iters),
            "residual": float(self.residual),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def quadratic(self, xi):
        xi = np.asarray(xi, dtype=float)
        return float(xi @ self.matrix @ xi)


def homogenized_tensor(shape, kernel, kappa, m, tol=1e-10, cell=None):
    """A^kappa with <A xi, xi> = kappa^-(d+2) min Q_xi.

    Diagonal entries come from xi = e_i, off-diagonal ones by polarisation
    from xi = e_i + e_j.
    """
    cell = CellDiscretization(shape, kernel, kappa, m) if cell is None else cell
    d = cell.d
    norm = cell.kappa ** -(d + 2)
    q = {}
    raw = []
    iters = 0
    residual = 0.0
    correctors = {}
    dirs = [(i, i) for i in range(d)] + [(i, j) for i in range(d) for j in range(i + 1, d)]
    for i, j in dirs:
        xi = np.zeros(d)
        xi[i] += 1.0
        if j != i:
            xi[j] += 1.0
        sol = minimize(cell, xi, tol=tol)
        q[(i, j)] = sol.value
        raw.append(sol.value)
        iters += sol.iterations
        residual = max(residual, sol.residual)
        correctors[(i, j)] = sol.corrector
    A = np.zeros((d, d))
    for i in range(d):
        A[i, i] = q[(i, i)]
    for i in range(d):
        for j in range(i + 1, d):
            A[i, j] = A[j, i] = 0.5 * (q[(i, j)] - q[(i, i)] - q[(j, j)])
    return HomogenizedTensor(A * norm, cell.kappa, raw, iters, residual, correctors=correctors)
