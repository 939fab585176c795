"""Explicit sequences and (epsilon, delta) sweeps for the three scaling regimes.

* subcritical (eps << delta): per-inclusion constants make the energy vanish
  at the rate of the kernel's second-moment tail beyond D0 * delta / eps;
* critical (eps / delta = kappa): the energy of ``u`` plus the cell
  correctors approaches the integral of <A^kappa grad u, grad u>;
* supercritical (delta << eps): the energy of ``u`` itself approaches
  |K|^2 C_phi times the Dirichlet integral.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import cellproblem as _cp
from . import energy as _en
from . import geometry as _geo
from . import kernels as _k
from .errors import PerfhomError, PreconditionError
from .grid import Box, Grid, GridFunction, check_resolution, sample
from .interpolate import _group_means

__all__ = [
    "TestFunction",
    "RegimeConfig",
    "RegimeReport",
    "degenerate_recovery",
    "zero_energy_sequence",
    "corrected_function",
    "refine_h",
    "run_sweep",
    "REGIMES",
    "CSV_HEADER",
]

REGIMES = ("subcritical", "critical", "supercritical")
CSV_HEADER = ["epsilon", "delta", "ratio", "energy", "predicted", "tail_bound", "rel_error"]
PREDICTED_FLOOR = 1e-12


@dataclass(frozen=True)
class TestFunction:
    """u(x) = a.x + b + sum_i q_i x_i^2, or a user callable with its gradient."""

    __test__ = False  # keep pytest from collecting this class

    a: tuple = (1.0, 0.0)
    b: float = 0.0
    q: tuple | None = None
    func: object = None
    grad: object = None

    @classmethod
    def affine(cls, a, b=0.0):
        return cls(tuple(float(v) for v in a), float(b))

    @classmethod
    def quadratic(cls, q, a=None, b=0.0):
        q = tuple(float(v) for v in q)
        a = tuple(0.0 for _ in q) if a is None else tuple(float(v) for v in a)
        return cls(a, float(b), q)

    @classmethod
    def custom(cls, func, grad, dimension=2):
        return cls((0.0,) * dimension, 0.0, None, func, grad)

    @property
    def dimension(self):
        return len(self.a)

    @property
    def is_affine(self):
        return self.func is None and (self.q is None or not any(self.q))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.func is not None:
            return self.func(x)
        out = x @ np.array(self.a) + self.b
        if self.q is not None:
            out = out + (x * x) @ np.array(self.q)
        return out

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.func is not None:
            return self.grad(x)
        g = np.broadcast_to(np.array(self.a), x.shape).copy()
        if self.q is not None:
            g += 2.0 * x * np.array(self.q)
        return g

    def dirichlet(self, box, A=None, order=8):
        """int_box <A grad u, grad u> by tensor Gauss-Legendre quadrature (A = I by default)."""
        d = box.dimension
        A = np.eye(d) if A is None else np.asarray(A, dtype=float)
        if box.is_empty:
            return 0.0
        x, w = np.polynomial.legendre.leggauss(order)
        axes = [0.5 * (lo + hi) + 0.5 * (hi - lo) * x for lo, hi in zip(box.lower, box.upper)]
        wts = [0.5 * (hi - lo) * w for lo, hi in zip(box.lower, box.upper)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
        ww = np.prod(np.stack(np.meshgrid(*wts, indexing="ij"), -1), axis=-1)
        g = self.gradient(pts)
        return float(np.sum(ww * np.einsum("...i,ij,...j->...", g, A, g)))

    def spec(self):
        if self.func is not None:
            return {"type": "custom"}
        if self.q is not None:
            return {"type": "quadratic", "q": list(self.q), "a": list(self.a), "b": self.b}
        return {"type": "affine", "a": list(self.a), "b": self.b}


def refine_h(epsilon, delta, shape, delta_div=8, eps_div=16, fixed=None):
    """Grid spacing for one sweep point.

    ``min(delta/delta_div, eps/eps_div)`` clamped to the resolution limit
    ``delta * c_min / 4`` and rounded down to a power of two so that dyadic
    boxes and periods are node-aligned.  ``fixed`` overrides the rule.
    """
    if fixed is not None:
        return float(fixed)
    h = min(delta / delta_div, epsilon / eps_div)
    if math.isfinite(shape.min_feature):
        h = min(h, delta * shape.min_feature / 4)
    return 2.0 ** math.floor(math.log2(h) + 1e-12)


def _aligned_box(box, h, outer):
    lo = np.floor(np.asarray(box.lower) / h + 1e-9) * h
    hi = np.ceil(np.asarray(box.upper) / h - 1e-9) * h
    lo = np.maximum(lo, outer.lower)
    hi = np.minimum(hi, outer.upper)
    return Box(lo, hi)


def degenerate_recovery(u, pset, delta, grid):
    """u on the matrix, and on each inclusion delta*(k+K) the mean of u over its nodes."""
    pts = grid.points()
    vals = np.asarray(u(pts), dtype=float)
    mask = pset.contains(pts, delta)
    keys = pset.cell_index(pts[mask], delta)
    uniq, means, _ = _group_means(keys, vals[mask])
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    out = vals.copy()
    out[mask] = means[inv.ravel()]
    return GridFunction(grid, out, mask)


def zero_energy_sequence(pset, delta, epsilon, grid, kernel=None):
    """Integer-valued grid function with zero energy when eps < delta * D.

    Components of delta*E + B_{r/2} are labelled at the discrete interaction
    reach r = eps * support + h sqrt(d) / 2.  A lattice direction kbar joining
    different components is chosen; the component of delta*(k0 + 2 m kbar + K)
    gets the value m, everything else 0.
    """
    d = pset.dimension
    h = grid.h
    D = _geo.compute_D(pset)
    if not epsilon < delta * D - 2 * h:
        raise PreconditionError(
            f"zero-energy construction needs eps < delta*D - 2h (eps={epsilon:g}, delta*D={delta * D:g}, h={h:g})"
        )
    support = 1.0 if kernel is None else kernel.support_radius
    if not math.isfinite(support):
        raise PreconditionError("zero-energy sequences need a compactly supported kernel")
    reach = epsilon * support + h * math.sqrt(d) / 2
    rep = _geo.components(pset, delta, reach, grid.box)
    pts = grid.points()
    mask = pset.contains(pts, delta)
    keys = pset.cell_index(pts, delta)
    index_of = {tuple(k): i for i, k in enumerate(rep.indices)}
    # reference inclusion: the first one entirely inside the box
    lo = np.asarray(grid.box.lower) / delta + pset.shape.half_extent
    inside = np.all(rep.indices >= np.ceil(lo), axis=1)
    k0 = rep.indices[np.argmax(inside)]
    lab0 = rep.labels[index_of[tuple(k0)]]
    kbar = None
    # prefer directions pointing into the box from its lower corner
    cands = sorted(_geo.window_offsets(d, 2), key=lambda k: bool((k < 0).any()))
    for k in cands:
        j = index_of.get(tuple(k0 + k))
        if j is not None and rep.labels[j] != lab0:
            kbar = k
            break
    if kbar is None:
        raise PreconditionError("every inclusion in the box is connected; no zero-energy oscillation exists")
    value_of = {}
    mstep = 0
    while True:
        j = index_of.get(tuple(k0 + 2 * mstep * kbar))
        if j is None:
            break
        value_of.setdefault(rep.labels[j], float(mstep))
        mstep += 1
    per_inclusion = np.array([value_of.get(lab, 0.0) for lab in rep.labels])
    kmin = rep.indices.min(axis=0)
    span = rep.indices.max(axis=0) - kmin + 1
    lookup = np.zeros(tuple(span))
    lookup[tuple((rep.indices - kmin).T)] = per_inclusion
    comp = lookup[tuple((keys[mask] - kmin).T)]
    values = np.zeros(grid.shape)
    values[mask] = comp
    return GridFunction(grid, values, mask)


def corrected_function(u, pset, delta, grid, tensor, m):
    """u + delta * sum_i d_i u(x) w_i(x / delta) with the cell correctors of ``tensor``."""
    d = grid.dimension
    pts = grid.points()
    vals = np.asarray(u(pts), dtype=float)
    g = u.gradient(pts)
    frac = np.mod(pts / delta + 0.5, 1.0)
    j = np.clip(np.floor(frac * m + 1e-9).astype(int), 0, m - 1)
    jj = tuple(np.moveaxis(j, -1, 0))
    for i in range(d):
        w = tensor.correctors[(i, i)]
        vals = vals + delta * g[..., i] * w[jj]
    mask = pset.contains(pts, delta)
    return GridFunction(grid, vals, mask)


@dataclass
class RegimeConfig:
    """One sweep request.

    ``sweep`` lists (epsilon, delta) pairs; ``omega_prime`` is the interior
    comparison box (default: omega shrunk by the largest kernel reach).
    """

    regime: str
    sweep: list
    shape: object
    kernel: object
    test_function: TestFunction
    omega: Box
    omega_prime: Box | None = None
    delta_div: float = 8
    eps_div: float = 16
    h_fixed: float | None = None
    tolerance: float | None = None
    tol_tail: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {', '.join(REGIMES)}")
        self.sweep = [(float(e), float(dl)) for e, dl in self.sweep]
        ratios = [e / dl for e, dl in self.sweep]
        if self.regime == "subcritical":
            ok = all(r1 > r2 for r1, r2 in zip(ratios, ratios[1:]))
        elif self.regime == "supercritical":
            ok = all(dl1 > dl2 for (_, dl1), (_, dl2) in zip(self.sweep, self.sweep[1:]))
        else:
            ok = all(e1 > e2 for (e1, _), (e2, _) in zip(self.sweep, self.sweep[1:]))
        if not ok:
            raise ValueError(f"sweep is not monotone in the direction of the {self.regime} regime")

    def interior(self):
        if self.omega_prime is not None:
            return self.omega_prime
        if not self.sweep:
            return self.omega
        R = _k.truncation_radius(self.kernel, self.tol_tail)
        return self.omega.dilate(-max(e for e, _ in self.sweep) * R)

    def to_dict(self):
        return {
            "regime": self.regime,
            "sweep": [list(p) for p in self.sweep],
            "shape": self.shape.spec(),
            "kernel": self.kernel.spec(),
            "dimension": self.kernel.dimension,
            "test_function": self.test_function.spec(),
            "omega": self.omega.to_list(),
            "omega_prime": self.interior().to_list(),
            "delta_div": self.delta_div,
            "eps_div": self.eps_div,
            "h_fixed": self.h_fixed,
            "tolerance": self.tolerance,
            "tol_tail": self.tol_tail,
            "seed": self.seed,
        }


def _fmt(v):
    return repr(float(v))


@dataclass
class RegimeReport:
    config: dict
    rows: list
    verdicts: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    config_hash: str = ""

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in CSV_HEADER])
        return buf.getvalue()

    def to_dat(self):
        lines = [f"# config_sha256={self.config_hash}", "# " + " ".join(CSV_HEADER)]
        for r in self.rows:
            lines.append(" ".join(f"{float(r[c]):.17g}" for c in CSV_HEADER))
        return "\n".join(lines) + "\n"

    def to_dict(self):
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        return {
            "config": self.config,
            "config_sha256": self.config_hash,
            "rows": [{c: float(r[c]) for c in CSV_HEADER} for r in self.rows],
            "verdicts": self.verdicts,
            "errors": self.errors,
            "metadata": {
                "seed": self.config.get("seed"),
                "timestamp": int(epoch) if epoch and epoch.isdigit() else None,
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def config_hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _row(cfg, eps, delta):
    pset = _geo.PerforatedSet(cfg.shape)
    kernel = cfg.kernel
    u = cfg.test_function
    h = refine_h(eps, delta, cfg.shape, cfg.delta_div, cfg.eps_div, cfg.h_fixed)
    check_resolution(h, delta, cfg.shape)
    R = _k.truncation_radius(kernel, cfg.tol_tail)
    omega = cfg.omega
    row = {"epsilon": eps, "delta": delta, "ratio": eps / delta}
    if cfg.regime == "subcritical":
        grid = Grid(_aligned_box(omega, h, omega), h)
        v = degenerate_recovery(u, pset, delta, grid)
        ctx = _en.EnergyContext(kernel, grid, eps, pset, delta, tol_tail=cfg.tol_tail)
        energy = _en.evaluate(ctx, v)
        predicted = 0.0
        D0 = _geo.compute_D0(cfg.shape)
        tail = _k.tail_second_moment(kernel, D0 * delta / eps)
    else:
        interior = cfg.interior()
        reach = eps * R + h * math.sqrt(omega.dimension)
        grid = Grid(_aligned_box(interior.dilate(reach), h, omega), h)
        if cfg.regime == "supercritical":
            v = sample(grid, u, pset, delta)
            predicted = cfg.shape.volume**2 * _k.c_phi(kernel) * u.dirichlet(interior)
        else:
            m = int(round(delta / h))
            tensor = _cp.homogenized_tensor(cfg.shape, kernel, eps / delta, m)
            v = corrected_function(u, pset, delta, grid, tensor, m)
            predicted = u.dirichlet(interior, tensor.matrix)
        ctx = _en.EnergyContext(kernel, grid, eps, pset, delta, tol_tail=cfg.tol_tail)
        energy = _en.evaluate_localized(ctx, v, interior)
        tail = _en.truncation_bound(ctx, v, interior)
    row.update(energy=energy, predicted=predicted, tail_bound=tail,
               rel_error=abs(energy - predicted) / max(abs(predicted), PREDICTED_FLOOR))
    return row


def run_sweep(cfg, threads=1):
    """Evaluate every sweep point; failures are recorded and the sweep continues."""

    def one(p):
        try:
            return _row(cfg, *p), None
        except PerfhomError as exc:
            return None, {"epsilon": p[0], "delta": p[1], "error": f"{type(exc).__name__}: {exc}"}

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, cfg.sweep))
    else:
        results = [one(p) for p in cfg.sweep]
    rows = [r for r, _ in results if r is not None]
    errors = [e for _, e in results if e is not None]
    cdict = cfg.to_dict()
    report = RegimeReport(cdict, rows, errors=errors, config_hash=config_hash(cdict))
    report.verdicts = _verdicts(cfg, rows)
    return report


def _verdicts(cfg, rows):
    if not rows:
        return {}
    if cfg.regime == "subcritical":
        e = [r["energy"] for r in rows]
        t = [r["tail_bound"] for r in rows]
        c_fit = e[0] / t[0] if t[0] > 0 else math.inf
        return {
            "fitted_constant": c_fit,
            "strictly_decreasing": all(a > b for a, b in zip(e, e[1:])),
            "within_tail_bound": all(ei <= c_fit * ti * (1 + 1e-12) for ei, ti in zip(e, t)),
        }
    tol = cfg.tolerance if cfg.tolerance is not None else (0.10 if cfg.regime == "supercritical" else 0.15)
    errs = [r["rel_error"] for r in rows]
    return {
        "tolerance": tol,
        "finest_within_tolerance": errs[-1] <= tol,
        "error_decreasing": all(a > b for a, b in zip(errs, errs[1:])),
    }
