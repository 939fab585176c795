"""Command-line entry point.

    perfhom <geometry|energy|cell|sweep|recover> --config run.toml [--out DIR]
            [--threads N] [--seed N]

Every artifact carries the sha256 of the parsed configuration (with the
effective seed), either as a JSON field or as a leading ``#`` comment line.
Exit codes: 0 success, 1 other numerical failure, 2 configuration error,
3 non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import cellproblem as _cp
from . import energy as _en
from . import geometry as _geo
from . import kernels as _k
from .config import build_box, build_function, load_config
from .errors import ConfigError, ConvergenceError, PerfhomError
from .grid import Grid, GridFunction, check_resolution, sample
from .interpolate import coarse_averages, piecewise_constant
from .regimes import _aligned_box, degenerate_recovery, refine_h, run_sweep, zero_energy_sequence

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 1, 2, 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _Writer:
    """Serialized artifact writer for one run directory."""

    def __init__(self, out, digest):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.digest = digest
        self.written = []

    def json(self, name, payload):
        payload = dict(payload, config_sha256=self.digest)
        self._put(name, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")

    def table(self, name, header, rows, sep=","):
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.digest}\n")
        if sep == ",":
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(v) for v in r])
        else:
            buf.write("# " + " ".join(header) + "\n")
            for r in rows:
                buf.write(" ".join(f"{float(v):.17g}" for v in r) + "\n")
        self._put(name, buf.getvalue())

    def text(self, name, body):
        self._put(name, body)

    def field(self, name, u):
        u.to_csv(self.out / name, header_comment=f"config_sha256={self.digest}")
        self.written.append(name)

    def _put(self, name, body):
        (self.out / name).write_text(body)
        self.written.append(name)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _function_values(spec, grid, dimension, seed, key):
    fn = build_function(spec, dimension, key)
    if isinstance(fn, tuple):
        rng = np.random.default_rng(seed)
        return fn[1] * rng.standard_normal(grid.shape), {"type": "noise", "amplitude": fn[1]}
    return np.asarray(fn(grid.points()), dtype=float), fn.spec()


# -- subcommands -------------------------------------------------------------

def cmd_geometry(run, writer, seed, threads):
    """D, D0, |K| and, when delta and epsilon are given, the components on omega."""
    sec = run.sections.get("geometry") or {"window": 2, "delta": None, "epsilon": None,
                                           "omega": [[0.0] * run.dimension, [1.0] * run.dimension]}
    pset = _geo.PerforatedSet(run.shape)
    D = _geo.compute_D(pset, sec["window"])
    D0 = _geo.compute_D0(run.shape, sec["window"])
    payload = {
        "shape": run.shape.spec(),
        "dimension": run.dimension,
        "volume": run.shape.volume,
        "D": D,
        "D0": D0,
    }
    if sec["delta"] is not None and sec["epsilon"] is not None:
        omega = build_box(sec["omega"], run.dimension, "geometry.omega")
        rep = _geo.components(pset, sec["delta"], sec["epsilon"], omega, sec["window"])
        payload["components"] = dict(rep.to_dict(), connected=rep.connected)
    writer.json("geometry.json", payload)
    return payload


def _energy_grid(run, sec, key):
    d = run.dimension
    omega = build_box(sec["omega"], d, f"{key}.omega")
    h = sec["h"] if sec["h"] is not None else refine_h(sec["epsilon"], sec["delta"], run.shape)
    check_resolution(h, sec["delta"], run.shape)
    return Grid(_aligned_box(omega, h, omega), h), omega


def cmd_energy(run, writer, seed, threads):
    sec = run.section("energy")
    grid, _ = _energy_grid(run, sec, "energy")
    pset = _geo.PerforatedSet(run.shape)
    values, fspec = _function_values(sec["function"], grid, run.dimension, seed, "energy.function")
    u = GridFunction(grid, values, pset.contains(grid.points(), sec["delta"]))
    ctx = _en.EnergyContext(run.kernel, grid, sec["epsilon"], pset, sec["delta"], tol_tail=run.tol_tail,
                            quadrature=sec["quadrature"], method=sec["method"], threads=threads)
    region = build_box(sec["region"], run.dimension, "energy.region") if sec["region"] else None
    if region is None:
        F = _en.evaluate(ctx, u)
    else:
        F = _en.evaluate_localized(ctx, u, region)
    payload = {
        "epsilon": sec["epsilon"],
        "delta": sec["delta"],
        "h": grid.h,
        "grid_shape": list(grid.shape),
        "masked_nodes": int(u.mask.sum()),
        "function": fspec,
        "region": region.to_list() if region is not None else None,
        "method": ctx.method,
        "quadrature": ctx.quadrature,
        "energy": F,
        "tail_bound": _en.truncation_bound(ctx, u, region),
        "seed": seed,
    }
    writer.json("energy.json", payload)
    if sec["write_field"]:
        writer.field("energy_field.csv", u)
    return payload


def cmd_cell(run, writer, seed, threads):
    """Homogenized tensor for each kappa plus the table <A xi, xi> against kappa."""
    sec = run.section("cell")
    d = run.dimension
    kappas = sec["kappa"] if isinstance(sec["kappa"], list) else [sec["kappa"]]
    xi = np.asarray(sec["xi"] if sec["xi"] is not None else [1.0] + [0.0] * (d - 1), dtype=float)
    if xi.shape != (d,):
        raise ConfigError(f"xi needs {d} components", key="cell.xi")
    target = run.shape.volume**2 * _k.c_phi(run.kernel)
    tensors = []
    rows = []
    for kap in kappas:
        T = _cp.homogenized_tensor(run.shape, run.kernel, float(kap), sec["m"], tol=sec["tol"])
        q = T.quadratic(xi)
        tensors.append(T.to_dict())
        rows.append([float(kap), q, q / (target * float(xi @ xi)) if xi.any() else 0.0]
                    + [float(v) for v in T.matrix.ravel()])
    names = [f"A{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    header = ["kappa", "quadratic", "ratio_to_limit"] + names
    writer.json("cell.json", {"m": sec["m"], "xi": xi.tolist(), "limit": target, "tensors": tensors})
    writer.table("cell.csv", header, rows)
    writer.table("cell.dat", header, rows, sep=" ")
    return rows


def cmd_sweep(run, writer, seed, threads):
    cfg = run.regime_config(seed)
    report = run_sweep(cfg, threads)
    report.config_hash = writer.digest
    writer.text("sweep.csv", report.to_csv())
    writer.text("sweep.dat", report.to_dat())
    writer.text("sweep.json", report.to_json())
    return report


def cmd_recover(run, writer, seed, threads):
    """Explicit sequences: per-inclusion means (degenerate) or the zero-energy oscillation."""
    sec = run.section("recover")
    grid, omega = _energy_grid(run, sec, "recover")
    pset = _geo.PerforatedSet(run.shape)
    eps, delta = sec["epsilon"], sec["delta"]
    kind = sec["kind"]
    if kind == "degenerate":
        fn = build_function(sec["function"], run.dimension, "recover.function")
        if isinstance(fn, tuple):
            raise ConfigError("recovery needs an affine or quadratic function", key="recover.function.type")
        u = degenerate_recovery(fn, pset, delta, grid)
    elif kind == "zero":
        u = zero_energy_sequence(pset, delta, eps, grid, run.kernel)
    else:
        raise ConfigError(f"unknown recovery kind {kind!r}; expected degenerate or zero", key="recover.kind")
    ctx = _en.EnergyContext(run.kernel, grid, eps, pset, delta, tol_tail=run.tol_tail, threads=threads)
    payload = {
        "kind": kind,
        "epsilon": eps,
        "delta": delta,
        "h": grid.h,
        "grid_shape": list(grid.shape),
        "energy": _en.evaluate(ctx, u),
        "tail_bound": _en.truncation_bound(ctx, u),
    }
    if eps >= 2 * delta:
        pc = piecewise_constant(coarse_averages(u, pset, delta, eps), grid)
        payload["coarse_l2_norm"] = math.sqrt(math.fsum((pc.values[pc.mask] ** 2).ravel()) * grid.cell_volume)
    writer.json("recover.json", payload)
    writer.field("recover.csv", u)
    return payload


COMMANDS = {
    "geometry": cmd_geometry,
    "energy": cmd_energy,
    "cell": cmd_cell,
    "sweep": cmd_sweep,
    "recover": cmd_recover,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML run configuration")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (overrides the config)")
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    p = argparse.ArgumentParser(prog="perfhom", description="Nonlocal energies on perforated domains.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).strip().splitlines()[0])
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run = load_config(args.config)
        seed = run.seed if args.seed is None else args.seed
        threads = run.threads if args.threads is None else args.threads
        if threads < 1:
            raise ConfigError("threads must be >= 1", key="threads")
        writer = _Writer(args.out, run.hash(seed))
        COMMANDS[args.command](run, writer, seed, threads)
    except ConfigError as exc:
        print(f"perfhom: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"perfhom: not converged: {exc} (iterations={exc.iterations}, residual={exc.residual})",
              file=sys.stderr)
        return EXIT_CONVERGENCE
    except (PerfhomError, ValueError) as exc:
        print(f"perfhom: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for name in writer.written:
        print(writer.out / name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
