"""Flat ``[section]`` / ``key = value`` run configuration.

Every key has a type, a default (or is required) and a documented
precondition.  ``parse_config`` collects every violation before raising.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

REQUIRED = object()

SCHEMES = ("fv", "parabolic", "bgk")
FLUX_KINDS = ("burgers", "linear", "polynomial", "zero")
NUMERICAL = ("godunov", "engquist_osher", "lax_friedrichs")
NOISE_MODES = ("compact_support", "linear_growth", "additive")
INITIAL_KINDS = ("sine", "constant", "box")
VERIFY_TESTS = ("mass", "residual", "martingale", "contraction", "linfty", "tightness", "moments")

# section -> key -> (type, default, help)
SCHEMA = {
    "run": {
        "scheme": ("str", REQUIRED, "fv | parabolic | bgk"),
        "T": ("float", REQUIRED, "final time, > 0"),
        "cfl": ("float", 0.4, "CFL number in (0,1)"),
        "dt": ("float", None, "explicit time step (default: derived from cfl)"),
        "eta": ("float", None, "viscosity or relaxation time, > 0 (parabolic, bgk)"),
        "seed": ("int", 0, "non-negative master seed"),
        "n_samples": ("int", 1, "Monte Carlo samples, >= 1"),
        "n_snapshots": ("int", 10, "equispaced snapshot times in (0, T]"),
        "snapshot_times": ("floats", None, "explicit snapshot times (override n_snapshots)"),
        "out": ("str", "kinscl_out", "output directory"),
    },
    "grid": {
        "dim": ("int", 1, "1 or 2"),
        "cells": ("int", REQUIRED, "cells per dimension, >= 4"),
    },
    "xi": {
        "R": ("float", 2.0, "velocity truncation, > 0"),
        "M": ("int", 128, "velocity cells, even, >= 8"),
    },
    "flux": {
        "kind": ("str", "burgers", "burgers | linear | polynomial | zero"),
        "c": ("float", 1.0, "speed of linear advection"),
        "coefficients": ("floats", None, "A(u) = sum c_j u^j (polynomial)"),
        "numerical": ("str", "godunov", "godunov | engquist_osher | lax_friedrichs"),
        "interval": ("floats", [-1.0, 1.0], "invariant region lo, hi for the CFL certificate"),
    },
    "noise": {
        "K": ("int", 4, "number of modes, >= 1"),
        "decay": ("float", 1.0, "amplitude decay exponent, > 0"),
        "mode": ("str", "compact_support", "compact_support | linear_growth | additive"),
        "scale": ("float", 0.5, "amplitude scale, >= 0 (0 disables noise)"),
        "u_max": ("float", 2.0, "saturation level of linear_growth, > 0"),
    },
    "initial": {
        "kind": ("str", "sine", "sine | constant | box"),
        "amplitude": ("float", 0.8, "sine amplitude"),
        "offset": ("float", 0.0, "sine offset"),
        "value": ("float", 0.0, "constant value"),
        "lo": ("float", 0.25, "box start"),
        "hi": ("float", 0.75, "box end"),
        "inside": ("float", 1.0, "box value"),
        "outside": ("float", 0.0, "value outside the box"),
    },
    "tolerances": {
        "tol_f": ("float", 1e-10, "kinetic range tolerance, > 0"),
        "tol_m": ("float", 1e-10, "dissipation clip tolerance, > 0"),
        "linfty_factor": ("float", 3.0, "L-infinity allowance factor c in c g_max sqrt(dt), > 0"),
        "mass_floor": ("float", -1e-8, "lower bound for per-sample kinetic mass"),
        "mass_fraction": ("float", 0.99, "required fraction of samples above mass_floor"),
    },
    "verify": {
        "tests": ("strs", ["mass", "linfty"], "subset of " + ", ".join(VERIFY_TESTS)),
        "contraction_shift": ("float", 0.1, "bump height added on one half of the torus"),
        "tail_radii": ("floats", [0.25, 0.5, 0.75, 1.0], "tail radii for tightness"),
        "p_list": ("floats", [1.0, 2.0, 4.0], "moment exponents"),
        "max_ratio": ("float", 10.0, "allowed max/min ratio across resolutions"),
        "residual_tol": ("float", 1e-8, "max |residual - epsilon| for the residual test"),
    },
    "converge": {
        "ladder": ("ints", [128, 256, 512, 1024], "dyadic cells per dimension"),
        "p": ("floats", [1.0], "error exponents"),
        "min_rate": ("float", None, "minimum fitted rate (deterministic ladders)"),
        "pass_fraction": ("float", 0.95, "minimum fraction of samples passing"),
        "allowed_inversions": ("int", 1, "inversions tolerated per error sequence"),
    },
}


def _parse_value(kind, raw):
    if kind == "str":
        return raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if kind == "floats":
        return [float(s) for s in items]
    if kind == "ints":
        return [int(s) for s in items]
    return items


def _format_value(kind, value):
    if kind == "str":
        return value
    if kind == "int":
        return str(value)
    if kind == "float":
        return repr(float(value))
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "ints":
        return ", ".join(str(int(v)) for v in value)
    return ", ".join(value)


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``values[section][key]`` with defaults filled."""

    values: tuple  # ((section, ((key, value), ...)), ...); hashable and ordered

    def section(self, name) -> dict:
        for sec, items in self.values:
            if sec == name:
                return {k: (list(v) if isinstance(v, tuple) else v) for k, v in items}
        raise KeyError(name)

    def get(self, section, key):
        return self.section(section)[key]

    def replace(self, **updates) -> "RunConfig":
        """Override ``section__key=value`` entries and re-validate."""
        d = {s: self.section(s) for s, _ in self.values}
        for k, v in updates.items():
            sec, key = k.split("__", 1)
            d[sec][key] = v
        return _build(d)


def _freeze(v):
    return tuple(v) if isinstance(v, list) else v


def _build(d: dict) -> RunConfig:
    problems = validate(d)
    if problems:
        raise ConfigurationError(problems)
    return RunConfig(tuple((sec, tuple((k, _freeze(d[sec][k])) for k in SCHEMA[sec]))
                           for sec in SCHEMA))


def parse_config(text: str, overrides: dict = None) -> RunConfig:
    """Parse and validate; raises ConfigurationError listing every problem.

    ``overrides`` maps ``"section__key"`` to already-typed values that replace
    the file entries before validation (used for command line flags).
    """
    problems = []
    raw = {sec: {} for sec in SCHEMA}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            if section not in SCHEMA:
                problems.append(f"line {lineno}: unknown section [{section}]")
                section = None
                continue
            continue
        if "=" not in s:
            problems.append(f"line {lineno}: expected 'key = value', got {s!r}")
            continue
        key, val = (p.strip() for p in s.split("=", 1))
        if section is None:
            problems.append(f"line {lineno}: key {key!r} outside a known section")
            continue
        if key not in SCHEMA[section]:
            problems.append(f"unknown key {key!r} in section [{section}]")
            continue
        if key in raw[section]:
            problems.append(f"duplicate key {key!r} in section [{section}]")
            continue
        kind = SCHEMA[section][key][0]
        try:
            raw[section][key] = _parse_value(kind, val)
        except ValueError:
            problems.append(f"{section}.{key}: cannot read {val!r} as {kind}")
    for name, value in (overrides or {}).items():
        sec, key = name.split("__", 1)
        raw[sec][key] = value
    d = {}
    for sec, keys in SCHEMA.items():
        d[sec] = {}
        for key, (kind, default, _) in keys.items():
            if key in raw[sec]:
                d[sec][key] = raw[sec][key]
            elif default is REQUIRED:
                if not any(p.startswith(f"{sec}.{key}:") for p in problems):
                    problems.append(f"missing required key {key!r} in section [{sec}]")
                d[sec][key] = None
            else:
                d[sec][key] = list(default) if isinstance(default, list) else default
    if problems:
        # report value problems too when the structure is otherwise readable
        problems += [p for p in validate(d) if p not in problems]
        raise ConfigurationError(problems)
    return _build(d)


def serialize(cfg: RunConfig, include_out: bool = True) -> str:
    """Canonical text that parses back to ``cfg``.

    With ``include_out=False`` the output directory is left out, so reports
    of identical runs written to different places stay byte-identical.
    """
    lines = []
    for sec, items in cfg.values:
        lines.append(f"[{sec}]")
        for key, value in items:
            if value is None or (not include_out and (sec, key) == ("run", "out")):
                continue
            kind = SCHEMA[sec][key][0]
            lines.append(f"{key} = {_format_value(kind, value)}")
        lines.append("")
    return "\n".join(lines)


def _is_pow2(n):
    return n >= 2 and n & (n - 1) == 0


def validate(d: dict) -> list:
    """Every violated precondition of a filled section dict."""
    p = []

    def val(sec, key):
        return d.get(sec, {}).get(key)

    def check(cond, msg):
        if not cond:
            p.append(msg)

    run, grid = d["run"], d["grid"]
    scheme = run.get("scheme")
    if scheme is not None:
        check(scheme in SCHEMES, f"scheme must be one of {SCHEMES}, got {scheme!r}")
    T = run.get("T")
    if T is not None:
        check(T > 0, f"T must be positive, got {T}")
    cfl = run.get("cfl")
    check(cfl is not None and 0.0 < cfl < 1.0, f"cfl must lie in (0,1), got {cfl}")
    dt = run.get("dt")
    if dt is not None:
        check(dt > 0, f"dt must be positive, got {dt}")
    eta = run.get("eta")
    if scheme in ("parabolic", "bgk"):
        check(eta is not None and eta > 0, f"eta must be positive for scheme {scheme}, got {eta}")
    check(run["seed"] >= 0, f"seed must be non-negative, got {run['seed']}")
    check(run["n_samples"] >= 1, f"n_samples must be >= 1, got {run['n_samples']}")
    check(run["n_snapshots"] >= 1, f"n_snapshots must be >= 1, got {run['n_snapshots']}")
    if run.get("snapshot_times") and T is not None and T > 0:
        ts = run["snapshot_times"]
        check(all(0 < t <= T for t in ts), "snapshot_times must lie in (0, T]")
        check(all(b > a for a, b in zip(ts, ts[1:])), "snapshot_times must increase strictly")
    check(bool(run.get("out")), "out must be a non-empty path")

    dim, cells = grid.get("dim"), grid.get("cells")
    check(dim in (1, 2), f"dim must be 1 or 2, got {dim}")
    if cells is not None:
        check(cells >= 4, f"cells must be >= 4, got {cells}")

    R, M = val("xi", "R"), val("xi", "M")
    check(R > 0, f"xi R must be positive, got {R}")
    check(M >= 8 and M % 2 == 0, f"xi M must be an even integer >= 8, got {M}")

    fl = d["flux"]
    check(fl["kind"] in FLUX_KINDS, f"flux kind must be one of {FLUX_KINDS}, got {fl['kind']!r}")
    check(fl["numerical"] in NUMERICAL,
          f"numerical flux must be one of {NUMERICAL}, got {fl['numerical']!r}")
    if fl["kind"] == "polynomial":
        check(bool(fl.get("coefficients")), "flux coefficients are required for kind polynomial")
    iv = fl.get("interval") or []
    check(len(iv) == 2 and iv[0] <= iv[1], f"flux interval must be 'lo, hi' with lo <= hi, got {iv}")

    nz = d["noise"]
    check(nz["K"] >= 1, f"noise K must be >= 1, got {nz['K']}")
    check(nz["decay"] > 0, f"noise decay must be positive, got {nz['decay']}")
    check(nz["mode"] in NOISE_MODES, f"noise mode must be one of {NOISE_MODES}, got {nz['mode']!r}")
    check(nz["scale"] >= 0, f"noise scale must be non-negative, got {nz['scale']}")
    check(nz["u_max"] > 0, f"noise u_max must be positive, got {nz['u_max']}")
    if scheme == "bgk":
        check(nz["mode"] == "additive" or nz["scale"] == 0,
              "scheme bgk needs xi-independent noise: mode additive or scale 0")

    ini = d["initial"]
    check(ini["kind"] in INITIAL_KINDS, f"initial kind must be one of {INITIAL_KINDS}, got {ini['kind']!r}")
    if ini["kind"] == "box":
        check(0 <= ini["lo"] < ini["hi"] <= 1, "box must satisfy 0 <= lo < hi <= 1")
    if len(iv) == 2 and ini["kind"] in INITIAL_KINDS:
        lo, hi = initial_range(ini)
        check(iv[0] <= lo and hi <= iv[1],
              f"initial data range [{lo}, {hi}] must lie in the flux interval {iv}")
        if scheme == "bgk":
            check(R > max(abs(lo), abs(hi)), f"xi R={R} must exceed the initial data bound")

    tol = d["tolerances"]
    for k in ("tol_f", "tol_m", "linfty_factor"):
        check(tol[k] > 0, f"{k} must be positive, got {tol[k]}")
    check(0 < tol["mass_fraction"] <= 1, "mass_fraction must lie in (0,1]")

    ver = d["verify"]
    bad = [t for t in ver["tests"] if t not in VERIFY_TESTS]
    check(not bad, f"unknown verify tests {bad}; choose from {VERIFY_TESTS}")
    check(all(r > 0 for r in ver["tail_radii"]), "tail_radii must be positive")
    check(all(b > a for a, b in zip(ver["tail_radii"], ver["tail_radii"][1:])),
          "tail_radii must increase strictly")
    check(all(q >= 1 for q in ver["p_list"]), "p_list entries must be >= 1")
    check(ver["max_ratio"] >= 1, "max_ratio must be >= 1")
    if "martingale" in ver["tests"] or "contraction" in ver["tests"]:
        check(run["n_samples"] >= 2, "ensemble tests need n_samples >= 2")
    if "martingale" in ver["tests"]:
        check(run["n_samples"] >= 100, "the martingale test needs n_samples >= 100")

    cv = d["converge"]
    lad = cv["ladder"]
    check(bool(lad) and all(_is_pow2(n) for n in lad), f"converge ladder must be powers of two, got {lad}")
    check(all(b > a for a, b in zip(lad, lad[1:])), "converge ladder must increase strictly")
    check(all(q >= 1 for q in cv["p"]), "converge p entries must be >= 1")
    check(0 < cv["pass_fraction"] <= 1, "pass_fraction must lie in (0,1]")
    check(cv["allowed_inversions"] >= 0, "allowed_inversions must be >= 0")
    return p


def initial_range(ini: dict):
    k = ini["kind"]
    if k == "sine":
        a = abs(ini["amplitude"])
        return ini["offset"] - a, ini["offset"] + a
    if k == "constant":
        return ini["value"], ini["value"]
    return min(ini["inside"], ini["outside"]), max(ini["inside"], ini["outside"])


def initial_function(ini: dict):
    """The initial profile as a vectorised function of x (x1, x2 in 2-d use x1 + x2)."""
    k = ini["kind"]
    if k == "sine":
        a, o = ini["amplitude"], ini["offset"]
        return lambda x, *y: o + a * np.sin(2 * np.pi * (x + (y[0] if y else 0.0)))
    if k == "constant":
        c = ini["value"]
        return lambda x, *y: np.full(np.broadcast(x, *y).shape, c)
    lo, hi, vin, vout = ini["lo"], ini["hi"], ini["inside"], ini["outside"]
    return lambda x, *y: np.where((x >= lo) & (x < hi), vin, vout) + 0.0 * (y[0] if y else 0.0)
