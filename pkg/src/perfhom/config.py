"""TOML run configuration with schema validation and line-numbered diagnostics.

A configuration file has a few top-level keys (``dimension``, ``seed``,
``threads``), the shared tables ``[shape]`` and ``[kernel]``, and one table
per subcommand.  Every table is checked against the schema below; unknown
keys are rejected with the list of valid ones.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from .errors import ConfigError
from .geometry import shape_from_spec
from .grid import Box
from .kernels import kernel_from_spec
from .regimes import REGIMES, RegimeConfig, TestFunction

__all__ = ["RunConfig", "parse_config", "load_config", "SCHEMA", "build_function", "build_box"]

_num = (int, float)

# table -> key -> (type(s), default); a default of ... means required
SCHEMA = {
    "": {
        "dimension": (int, 2),
        "seed": (int, 0),
        "threads": (int, 1),
        "shape": (dict, ...),
        "kernel": (dict, ...),
        "geometry": (dict, None),
        "energy": (dict, None),
        "cell": (dict, None),
        "sweep": (dict, None),
        "recover": (dict, None),
    },
    "shape": {
        "type": (str, ...),
        "c": ((int, float, list), None),
        "file": (str, None),
        "full": (bool, False),
        "m": (int, 16),
    },
    "kernel": {
        "type": (str, ...),
        "s": (_num, 1.0),
        "lambda": (_num, 1.0),
        "file": (str, None),
        "t": (list, None),
        "phi0": (list, None),
        "tol_tail": (_num, 1e-6),
    },
    "geometry": {
        "delta": (_num, None),
        "epsilon": (_num, None),
        "omega": (list, [[0.0, 0.0], [1.0, 1.0]]),
        "window": (int, 2),
    },
    "energy": {
        "epsilon": (_num, ...),
        "delta": (_num, ...),
        "h": (_num, None),
        "omega": (list, [[0.0, 0.0], [1.0, 1.0]]),
        "region": (list, None),
        "function": (dict, {"type": "affine", "a": [1.0, 0.0]}),
        "quadrature": (str, "cell"),
        "method": (str, "auto"),
        "write_field": (bool, False),
    },
    "cell": {
        "kappa": ((int, float, list), ...),
        "m": (int, 32),
        "xi": (list, None),
        "tol": (_num, 1e-10),
    },
    "sweep": {
        "regime": (str, ...),
        "points": (list, []),
        "omega": (list, [[0.0, 0.0], [1.0, 1.0]]),
        "omega_prime": (list, None),
        "function": (dict, {"type": "affine", "a": [1.0, 0.0]}),
        "delta_div": (_num, 8),
        "eps_div": (_num, 16),
        "h": (_num, None),
        "tolerance": (_num, None),
    },
    "recover": {
        "kind": (str, "degenerate"),
        "epsilon": (_num, ...),
        "delta": (_num, ...),
        "h": (_num, None),
        "omega": (list, [[0.0, 0.0], [1.0, 1.0]]),
        "function": (dict, {"type": "affine", "a": [1.0, 0.0]}),
    },
    "function": {
        "type": (str, ...),
        "a": (list, None),
        "b": (_num, 0.0),
        "q": (list, None),
        "amplitude": (_num, 1.0),
    },
}


def _locate(text, table, key):
    """Best-effort line number of ``key`` inside ``[table]`` or an inline table."""
    parent, _, leaf = table.rpartition(".")
    current = ""
    key_re = re.compile(rf"^\s*{re.escape(key)}\s*=")
    inline_re = re.compile(rf"[{{,]\s*{re.escape(key)}\s*=")
    for i, ln in enumerate(text.splitlines(), 1):
        ln = ln.split("#", 1)[0]
        m = re.match(r"^\s*\[([^\]]+)\]", ln)
        if m:
            current = m.group(1).strip()
            continue
        if current == table and key_re.match(ln):
            return i
        if leaf and current == parent and re.match(rf"^\s*{re.escape(leaf)}\s*=", ln) and inline_re.search(ln):
            return i
    return None


def _check_table(data, schema_name, where, text):
    schema = SCHEMA[schema_name]
    label = where or "top level"
    for key in data:
        if key not in schema:
            raise ConfigError(
                f"unknown key {key!r} in {label}; valid keys: {', '.join(sorted(schema))}",
                key=f"{where}.{key}" if where else key,
                line=_locate(text, where, key),
            )
    out = {}
    for key, (types, default) in schema.items():
        full = f"{where}.{key}" if where else key
        if key not in data:
            if default is ...:
                raise ConfigError(f"missing required key {key!r} in {label}", key=full,
                                  line=_locate(text, where, key) if where else None)
            out[key] = default
            continue
        val = data[key]
        ok = isinstance(val, types) and not (isinstance(val, bool) and types in (int, _num))
        if not ok:
            tname = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
            raise ConfigError(f"expected {tname}, got {type(val).__name__}", key=full, line=_locate(text, where, key))
        out[key] = val
    return out


def build_box(spec, d, key="omega"):
    try:
        lo, hi = spec
        box = Box(tuple(float(v) for v in lo), tuple(float(v) for v in hi))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"box must be [[lower...], [upper...]]: {exc}", key=key) from None
    if box.dimension != d or box.is_empty:
        raise ConfigError(f"box must be a nonempty {d}-dimensional box", key=key)
    return box


def build_function(spec, d, key="function", text=""):
    spec = _check_table(spec, "function", key, text)
    kind = spec["type"]
    if kind == "affine":
        a = spec["a"] if spec["a"] is not None else [1.0] + [0.0] * (d - 1)
        if len(a) != d:
            raise ConfigError(f"slope needs {d} components", key=f"{key}.a")
        return TestFunction.affine(a, spec["b"])
    if kind == "quadratic":
        if spec["q"] is None or len(spec["q"]) != d:
            raise ConfigError(f"quadratic function needs q with {d} components", key=f"{key}.q")
        return TestFunction.quadratic(spec["q"], spec["a"], spec["b"])
    if kind == "noise":
        return ("noise", float(spec["amplitude"]))
    raise ConfigError(f"unknown function type {kind!r}; expected affine, quadratic or noise", key=f"{key}.type")


@dataclass
class RunConfig:
    path: str
    data: dict
    dimension: int
    shape: object
    kernel: object
    tol_tail: float
    seed: int
    threads: int
    sections: dict = field(default_factory=dict)
    text: str = ""

    def hash(self, seed=None):
        payload = dict(self.data)
        payload["seed"] = self.seed if seed is None else seed
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def section(self, name):
        if self.sections.get(name) is None:
            raise ConfigError(f"config has no [{name}] table", key=name)
        return self.sections[name]

    def regime_config(self, seed=None):
        s = self.section("sweep")
        d = self.dimension
        if s["regime"] not in REGIMES:
            raise ConfigError(
                f"invalid regime {s['regime']!r}; expected one of {', '.join(REGIMES)}",
                key="sweep.regime", line=_locate(self.text, "sweep", "regime"),
            )
        fn = build_function(s["function"], d, "sweep.function", self.text)
        if isinstance(fn, tuple):
            raise ConfigError("sweeps need an affine or quadratic test function", key="sweep.function.type")
        try:
            return RegimeConfig(
                regime=s["regime"],
                sweep=[tuple(p) for p in s["points"]],
                shape=self.shape,
                kernel=self.kernel,
                test_function=fn,
                omega=build_box(s["omega"], d, "sweep.omega"),
                omega_prime=build_box(s["omega_prime"], d, "sweep.omega_prime") if s["omega_prime"] else None,
                delta_div=s["delta_div"],
                eps_div=s["eps_div"],
                h_fixed=s["h"],
                tolerance=s["tolerance"],
                tol_tail=self.tol_tail,
                seed=self.seed if seed is None else seed,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), key="sweep", line=_locate(self.text, "sweep", "points")) from None


def parse_config(text, path="<string>"):
    """Parse and validate TOML text into a :class:`RunConfig`."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", line=int(m.group(1)) if m else None) from None
    top = _check_table(raw, "", "", text)
    d = top["dimension"]
    if d not in (1, 2, 3):
        raise ConfigError("dimension must be 1, 2 or 3", key="dimension", line=_locate(text, "", "dimension"))
    if top["threads"] < 1:
        raise ConfigError("threads must be >= 1", key="threads", line=_locate(text, "", "threads"))
    shape_spec = _check_table(top["shape"], "shape", "shape", text)
    base = Path(path).parent if path != "<string>" else None
    if shape_spec["type"] in ("ball", "ellipse"):
        c = shape_spec["c"]
        if c is None:
            raise ConfigError("missing required key 'c'", key="shape.c", line=_locate(text, "shape", "type"))
        cs = c if isinstance(c, list) else [c]
        if any((not isinstance(v, _num)) or v >= 0.5 or v <= 0 for v in cs):
            raise ConfigError(
                f"inclusion size must satisfy 0 < c < 1/2 so K fits strictly inside the cell, got {c}",
                key="shape.c", line=_locate(text, "shape", "c"),
            )
        if shape_spec["type"] == "ellipse" and len(cs) != d:
            raise ConfigError(f"ellipse needs {d} semi-axes", key="shape.c", line=_locate(text, "shape", "c"))
    try:
        shape = shape_from_spec({k: v for k, v in shape_spec.items() if v is not None}, d, base)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc), key="shape", line=_locate(text, "shape", "type")) from None
    if shape.dimension != d:
        raise ConfigError(f"shape dimension {shape.dimension} differs from dimension={d}", key="shape")
    kspec = _check_table(top["kernel"], "kernel", "kernel", text)
    try:
        kernel = kernel_from_spec({k: v for k, v in kspec.items() if v is not None}, d, base)
    except (ValueError, OSError, KeyError) as exc:
        raise ConfigError(str(exc), key="kernel", line=_locate(text, "kernel", "type")) from None
    sections = {}
    for name in ("geometry", "energy", "cell", "sweep", "recover"):
        if top[name] is not None:
            sections[name] = _check_table(top[name], name, name, text)
    for name in ("energy", "recover"):
        sec = sections.get(name)
        if sec is not None:
            for key in ("epsilon", "delta"):
                if not sec[key] > 0:
                    raise ConfigError(f"{key} must be positive", key=f"{name}.{key}", line=_locate(text, name, key))
    if "sweep" in sections and sections["sweep"]["regime"] not in REGIMES:
        raise ConfigError(
            f"invalid regime {sections['sweep']['regime']!r}; expected one of {', '.join(REGIMES)}",
            key="sweep.regime", line=_locate(text, "sweep", "regime"),
        )
    return RunConfig(path, raw, d, shape, kernel, float(kspec["tol_tail"]), top["seed"], top["threads"],
                     sections, text)


def load_config(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, str(p))
