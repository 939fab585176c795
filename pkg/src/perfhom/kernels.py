"""Radial convolution kernels phi(xi) = phi0(|xi|).

A kernel is a :class:`RadialKernel` wrapping one of the profile classes
below.  Piecewise-constant profiles (indicator, tabulated, staircase) are
stored as a list of *steps* ``(r_j, a_j)`` meaning
``phi0(t) = sum_j a_j * [t < r_j]``; this representation is what makes
exact pixel averages possible in :func:`cell_average`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize

from .errors import DivergentMomentError, UnboundedProfileError

__all__ = [
    "IndicatorProfile",
    "ExponentialProfile",
    "TabulatedProfile",
    "StaircaseProfile",
    "RadialKernel",
    "indicator",
    "exponential",
    "tabulated",
    "sphere_area",
    "evaluate",
    "radial_moment",
    "c_phi",
    "tail_second_moment",
    "tail_mass",
    "truncation_radius",
    "staircase",
    "cell_average",
    "kernel_from_spec",
]

_QUAD_RTOL = 1e-10


class _StepProfile:
    """Mixin for profiles that are finite sums of indicators of [0, r)."""

    steps: tuple

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for r, a in self.steps:
            out += a * (t < r)
        return out

    @property
    def max_value(self):
        return float(sum(a for _, a in self.steps))

    @property
    def breakpoints(self):
        return sorted({r for r, _ in self.steps})

    def level_radius(self, y):
        """sup{t : phi0(t) >= y}, or 0 when the level set is empty."""
        total = 0.0
        for r, a in sorted(self.steps, key=lambda s: -s[0]):
            total += a
            if total >= y:
                return float(r)
        return 0.0


@dataclass(frozen=True)
class IndicatorProfile(_StepProfile):
    """phi0 = 1 on [0, s), 0 beyond."""

    s: float = 1.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"indicator radius must be positive, got {self.s}")

    @property
    def steps(self):
        return ((float(self.s), 1.0),)

    @property
    def support(self):
        return float(self.s)

    def spec(self):
        return {"type": "indicator", "s": self.s}


@dataclass(frozen=True)
class ExponentialProfile:
    """phi0(t) = exp(-lam * t)."""

    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"exponential rate must be positive, got {self.lam}")

    steps = None
    breakpoints = ()
    support = math.inf
    max_value = 1.0

    def __call__(self, t):
        return np.exp(-self.lam * np.asarray(t, dtype=float))

    def level_radius(self, y):
        if y > 1.0:
            return 0.0
        return -math.log(y) / self.lam

    def spec(self):
        return {"type": "exponential", "lambda": self.lam}


@dataclass(frozen=True)
class TabulatedProfile(_StepProfile):
    """Right-constant interpolation of nonincreasing samples.

    ``phi0(t) = phi[i]`` on ``[t[i], t[i+1])`` and ``0`` for ``t >= t[-1]``;
    the last sample only marks the end of the support.
    """

    t: tuple
    phi: tuple

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if t.ndim != 1 or t.shape != phi.shape or t.size < 2:
            raise ValueError("tabulated profile needs matching 1-D t and phi with >= 2 samples")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(phi))):
            raise UnboundedProfileError("tabulated profile contains non-finite values")
        if t[0] < 0 or np.any(np.diff(t) <= 0):
            raise ValueError("tabulated t must be nonnegative and strictly increasing")
        if np.any(phi < 0):
            raise ValueError("tabulated phi0 must be nonnegative")
        if np.any(np.diff(phi) > 0):
            raise ValueError("tabulated phi0 must be nonincreasing")
        object.__setattr__(self, "t", tuple(t.tolist()))
        object.__setattr__(self, "phi", tuple(phi.tolist()))

    @property
    def steps(self):
        t, phi = self.t, self.phi
        n = len(t)
        out = []
        for i in range(n - 1):
            nxt = phi[i + 1] if i < n - 2 else 0.0
            a = phi[i] - nxt
            if a > 0:
                out.append((t[i + 1], a))
        return tuple(out)

    @property
    def support(self):
        return float(self.t[-1])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["t", "phi0"]:
                raise ValueError(f"{path}: expected header 't,phi0'")
            rows = [(float(r["t"]), float(r["phi0"])) for r in reader]
        t, phi = zip(*rows)
        return cls(t, phi)

    def spec(self):
        return {"type": "tabulated", "t": list(self.t), "phi0": list(self.phi)}


@dataclass(frozen=True)
class StaircaseProfile(_StepProfile):
    """Simple-function approximation ``weight * sum_k [t < radii[k]]``.

    ``upper_radius`` adds the extra term ``weight * [t < upper_radius]``
    of the upper variant.
    """

    radii: tuple
    weight: float
    level: int
    upper_radius: float | None = None

    @property
    def steps(self):
        merged = {}
        for r in self.radii:
            if r > 0:
                merged[r] = merged.get(r, 0.0) + self.weight
        if self.upper_radius is not None:
            merged[self.upper_radius] = merged.get(self.upper_radius, 0.0) + self.weight
        return tuple(sorted(merged.items()))

    @property
    def support(self):
        rs = [r for r, _ in self.steps]
        return float(max(rs)) if rs else 0.0

    def spec(self):
        return {
            "type": "staircase",
            "level": self.level,
            "weight": self.weight,
            "radii": list(self.radii),
            "upper_radius": self.upper_radius,
        }


@dataclass(frozen=True)
class RadialKernel:
    """Kernel phi(xi) = profile(|xi|) on R^d."""

    profile: object
    dimension: int = 2

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")

    @property
    def support_radius(self):
        return self.profile.support

    @property
    def is_compact(self):
        return math.isfinite(self.profile.support)

    def __call__(self, xi):
        return evaluate(self, xi)

    def spec(self):
        return self.profile.spec()


def indicator(s=1.0, dimension=2):
    return RadialKernel(IndicatorProfile(s), dimension)


def exponential(lam=1.0, dimension=2):
    return RadialKernel(ExponentialProfile(lam), dimension)


def tabulated(t, phi, dimension=2):
    return RadialKernel(TabulatedProfile(tuple(t), tuple(phi)), dimension)


def kernel_from_spec(spec, dimension, base_dir=None):
    """Build a kernel from a config mapping such as ``{"type": "indicator", "s": 1.0}``."""
    kind = spec.get("type")
    if kind == "indicator":
        return indicator(float(spec.get("s", 1.0)), dimension)
    if kind == "exponential":
        return exponential(float(spec.get("lambda", 1.0)), dimension)
    if kind == "tabulated":
        if "file" in spec:
            path = Path(spec["file"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return RadialKernel(TabulatedProfile.from_csv(path), dimension)
        return tabulated(spec["t"], spec["phi0"], dimension)
    raise ValueError(f"unknown kernel type {kind!r}; expected indicator, exponential or tabulated")


def sphere_area(d):
    """Surface measure of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def evaluate(kernel, xi):
    """phi(xi) for points ``xi`` of shape (..., d)."""
    xi = np.asarray(xi, dtype=float)
    return kernel.profile(np.linalg.norm(xi, axis=-1))


def _quad(f, a, b):
    val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=_QUAD_RTOL, limit=400)
    return val, err


def radial_moment(kernel, power, R=0.0):
    """``int_{|xi| > R} phi(xi) |xi|^power dxi`` by panel-wise adaptive quadrature."""
    if R < 0:
        raise ValueError("R must be nonnegative")
    d = kernel.dimension
    prof = kernel.profile
    expo = power + d - 1

    def f(t):
        return float(prof(t)) * t**expo

    support = prof.support
    if R >= support:
        return 0.0
    cuts = [R] + [b for b in prof.breakpoints if R < b < support]
    if math.isfinite(support):
        cuts.append(support)
    total = 0.0
    err_total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        v, e = _quad(f, a, b)
        total += v
        err_total += e
    if not math.isfinite(support):
        v, e = _quad(f, cuts[-1], math.inf)
        total += v
        err_total += e
    if not (math.isfinite(total) and err_total <= 1e-8 * max(abs(total), 1e-300) + 1e-300):
        raise DivergentMomentError(
            f"moment of order {power} beyond R={R} did not converge "
            f"(value {total}, error estimate {err_total})"
        )
    return sphere_area(d) * total


def c_phi(kernel):
    """(1/d) * int phi(xi) |xi|^2 dxi."""
    return radial_moment(kernel, 2) / kernel.dimension


def tail_second_moment(kernel, R):
    """int_{|xi| > R} phi(xi) |xi|^2 dxi."""
    return radial_moment(kernel, 2, R)


def tail_mass(kernel, R):
    """int_{|xi| > R} phi(xi) dxi."""
    return radial_moment(kernel, 0, R)


def truncation_radius(kernel, tol=1e-6):
    """Radius beyond which the second-moment tail is at most ``tol * d * c_phi``.

    Compactly supported kernels return their support radius.
    """
    if kernel.is_compact:
        return kernel.support_radius
    target = tol * radial_moment(kernel, 2)
    if target <= 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while tail_second_moment(kernel, hi) > target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e8:
            raise DivergentMomentError("second-moment tail does not decay")
    root = optimize.brentq(lambda r: tail_second_moment(kernel, r) - target, lo, hi, xtol=1e-10)
    # nudge past the root so the bound holds despite brentq's bracket
    return root * (1.0 + 1e-9) + 1e-12


def staircase(kernel, n, upper=False):
    """Simple-function approximation with weight 2^-n and levels (k+1)2^-n.

    The lower variant satisfies ``phi_n <= phi``; the upper variant adds one
    extra step ``2^-n [t < R]`` and needs compact support R.
    """
    if n < 1 or int(n) != n:
        raise ValueError("staircase level n must be a positive integer")
    prof = kernel.profile
    if not math.isfinite(prof.max_value):
        raise UnboundedProfileError("staircase needs a bounded profile")
    w = 2.0**-n
    radii = tuple(prof.level_radius((k + 1) * w) for k in range(n * 2**n + 1))
    upper_radius = None
    if upper:
        if not kernel.is_compact:
            raise ValueError("upper staircase needs a compactly supported kernel")
        upper_radius = kernel.support_radius
    return RadialKernel(StaircaseProfile(radii, w, int(n), upper_radius), kernel.dimension)


# ---------------------------------------------------------------------------
# pixel averages


def _odd_corner_area(x, y, r):
    """Area of B_r intersected with [0,x] x [0,y], extended oddly in x and y."""
    sx, sy = np.sign(x), np.sign(y)
    x = np.minimum(np.abs(x), r)
    y = np.minimum(np.abs(y), r)
    ts = np.sqrt(np.maximum(r * r - y * y, 0.0))
    tm = np.minimum(ts, x)

    def g(t):
        return 0.5 * (t * np.sqrt(np.maximum(r * r - t * t, 0.0)) + r * r * np.arcsin(t / r))

    return sx * sy * (y * tm + g(x) - g(tm))


def _ball_box_fraction(centers, width, r):
    """Fraction of each cube (side ``width``) lying in the open ball B_r."""
    d = centers.shape[1]
    lo = centers - width / 2
    hi = centers + width / 2
    if d == 1:
        seg = np.clip(np.minimum(hi[:, 0], r) - np.maximum(lo[:, 0], -r), 0.0, None)
        return seg / width
    if d == 2:
        a, b = lo[:, 0], hi[:, 0]
        c, e = lo[:, 1], hi[:, 1]
        area = (
            _odd_corner_area(b, e, r)
            - _odd_corner_area(a, e, r)
            - _odd_corner_area(b, c, r)
            + _odd_corner_area(a, c, r)
        )
        return np.clip(area / width**2, 0.0, 1.0)
    # d == 3: midpoint sub-sampling
    s = 8
    sub = (np.arange(s) + 0.5) / s - 0.5
    grid = np.stack(np.meshgrid(sub, sub, sub, indexing="ij"), -1).reshape(-1, 3) * width
    frac = np.empty(len(centers))
    for i0 in range(0, len(centers), 4096):
        pts = centers[i0 : i0 + 4096, None, :] + grid[None]
        frac[i0 : i0 + 4096] = (np.einsum("nqd,nqd->nq", pts, pts) < r * r).mean(axis=1)
    return frac


def cell_average(kernel, centers, width):
    """Average of phi over axis-aligned cubes of side ``width`` centred at ``centers``.

    Exact (up to rounding) for piecewise-constant profiles in d <= 2;
    tensor Gauss-Legendre for smooth profiles; sub-sampled for d = 3.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    prof = kernel.profile
    if prof.steps is not None:
        out = np.zeros(len(centers))
        reach = width * math.sqrt(kernel.dimension) / 2
        dist = np.linalg.norm(centers, axis=1)
        for r, a in prof.steps:
            near = dist < r + reach
            if np.any(near):
                out[near] += a * _ball_box_fraction(centers[near], width, r)
        return out
    q = 5
    nodes, weights = np.polynomial.legendre.leggauss(q)
    nodes = nodes * width / 2
    weights = weights / 2
    d = kernel.dimension
    mesh = np.stack(np.meshgrid(*([nodes] * d), indexing="ij"), -1).reshape(-1, d)
    wts = np.prod(np.stack(np.meshgrid(*([weights] * d), indexing="ij"), -1).reshape(-1, d), axis=1)
    out = np.empty(len(centers))
    for i0 in range(0, len(centers), 65536):
        pts = centers[i0 : i0 + 65536, None, :] + mesh[None]
        out[i0 : i0 + 65536] = prof(np.linalg.norm(pts, axis=-1)) @ wts
    return out
