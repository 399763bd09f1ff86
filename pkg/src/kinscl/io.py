"""Byte-stable result serialisation: CSV tables, JSON reports and a hashed manifest.

Floats are written in scientific notation with 17 significant digits, so
every value round-trips exactly and identical runs give identical bytes.
"""
import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .grid_noise import RNG_ALGORITHM


class OutputError(OSError):
    """Writing results failed; the message names the offending path."""


def fmt_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    return "%.16e" % x


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON text (sorted keys, fixed float format)."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if isinstance(obj, str):
        return _json_str(obj)
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json_str(str(k))}: {to_json(obj[k], indent, _level + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating, bool, type(None))) for v in obj):
            return "[" + ", ".join(to_json(v) for v in obj) + "]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _json_str(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ord(ch) < 0x20:
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_float(v) if isinstance(v, (float, np.floating)) else str(v)
                              for v in row))
    return "\n".join(lines) + "\n"


def field_csv(grid, values) -> str:
    """Columns: cell index, centre coordinate(s), u."""
    c = grid.centers()
    if grid.dim == 1:
        rows = ((i, float(c[i]), float(values[i])) for i in range(grid.cells_per_dim))
        return csv_text(["cell", "x", "u"], rows)
    n = grid.cells_per_dim
    rows = ((i * n + j, float(c[i, j, 0]), float(c[i, j, 1]), float(values[i, j]))
            for i in range(n) for j in range(n))
    return csv_text(["cell", "x1", "x2", "u"], rows)


def matrix_csv(grid, xigrid, values) -> str:
    """One row per spatial cell (row-major in 2-d), one column per velocity cell.

    Serves kinetic densities and Young-measure weights alike; the grids go in
    the sidecar from :func:`grids_sidecar`.
    """
    v = np.asarray(values, float).reshape(-1, xigrid.M)
    header = ["cell"] + [f"xi_{j}" for j in range(xigrid.M)]
    return csv_text(header, ((i, *map(float, row)) for i, row in enumerate(v)))


def read_matrix_csv(text: str) -> np.ndarray:
    lines = text.strip().splitlines()[1:]
    return np.array([[float(c) for c in ln.split(",")[1:]] for ln in lines])


def grids_sidecar(grid, xigrid, quantity: str) -> dict:
    return {"quantity": quantity, "dim": grid.dim, "cells_per_dim": grid.cells_per_dim,
            "h": grid.h, "xi_R": xigrid.R, "xi_M": xigrid.M, "xi_dxi": xigrid.dxi,
            "xi_centers": xigrid.centers}


@dataclass
class ReportEnvelope:
    command: str
    config_text: str
    results: list = field(default_factory=list)
    wall_clock: float = None
    tool_version: str = __version__
    rng_algorithm: str = RNG_ALGORITHM

    @property
    def passed(self) -> bool:
        return all(r.get("passed", True) for r in self.results)

    def as_dict(self) -> dict:
        return {"tool_version": self.tool_version, "command": self.command,
                "config": self.config_text, "rng_algorithm": self.rng_algorithm,
                "wall_clock_seconds": self.wall_clock, "results": self.results,
                "all_passed": self.passed}


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_outputs(files: dict, out_dir, config_text: str = "") -> dict:
    """Write ``{relative path: text}`` plus ``manifest.json`` and return the manifest.

    The manifest lists every file with its SHA-256 and echoes the configuration.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    if not os.access(out, os.W_OK):
        raise OutputError(f"output directory {out} is not writable")
    entries = {}
    for rel in sorted(files):
        if rel == "manifest.json":
            raise OutputError(f"{out / rel}: name reserved for the manifest")
        text = files[rel]
        _write(out / rel, text)
        entries[rel] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    manifest = {"tool_version": __version__, "config": config_text, "files": entries}
    _write(out / "manifest.json", to_json(manifest) + "\n")
    return manifest
