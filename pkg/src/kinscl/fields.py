"""Containers shared by the schemes, kinetic and verification modules."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, InvariantViolation
from .grid_noise import TorusGrid, XiGrid


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Field:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != self.grid.shape:
            raise ConfigurationError(
                f"field shape {v.shape} does not match grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("field values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: TorusGrid, fn, n_sub: int = 8) -> "Field":
        """Cell averages of ``fn`` by midpoint sub-sampling (``n_sub`` per axis)."""
        offs = (np.arange(n_sub) + 0.5) / n_sub * grid.h
        left = np.arange(grid.cells_per_dim) * grid.h
        pts = (left[:, None] + offs[None, :])
        if grid.dim == 1:
            vals = np.asarray(fn(pts), dtype=float)
            return cls(grid, np.broadcast_to(vals, pts.shape).mean(axis=1))
        x1 = pts[:, :, None, None]
        x2 = pts[None, None, :, :]
        vals = np.broadcast_to(np.asarray(fn(x1, x2), dtype=float),
                               (grid.cells_per_dim, n_sub, grid.cells_per_dim, n_sub))
        return cls(grid, vals.mean(axis=(1, 3)))

    @classmethod
    def constant(cls, grid: TorusGrid, c: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(c)))

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)

    def lp_norm(self, p: float = 2.0) -> float:
        return float((np.sum(np.abs(self.values) ** p) * self.grid.cell_volume) ** (1.0 / p))


@dataclass(frozen=True)
class KineticFieldState:
    """Kinetic density f(x_i, xi_j); values shape ``grid.shape + (M,)``."""

    grid: TorusGrid
    xigrid: XiGrid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != self.grid.shape + (self.xigrid.M,):
            raise ConfigurationError(
                f"kinetic state shape {v.shape} != {self.grid.shape + (self.xigrid.M,)}")
        object.__setattr__(self, "values", v)

    def check(self, tol: float = 1e-10, monotone: bool = True):
        f = self.values
        if f.min() < -tol or f.max() > 1.0 + tol:
            raise InvariantViolation(f"kinetic state leaves [0,1]: [{f.min()}, {f.max()}]")
        if monotone and f.shape[-1] > 1:
            rise = float(np.max(np.diff(f, axis=-1)))
            if rise > tol:
                raise InvariantViolation(f"kinetic state increases in xi by {rise}")
        if np.max(1.0 - f[..., 0]) > tol or np.max(f[..., -1]) > tol:
            raise InvariantViolation("kinetic state does not reach 1 at -R and 0 at +R")


@dataclass
class DissipationRecord:
    """Per-step aggregates of the scheme's kinetic-measure proxy.

    ``step_totals[n]`` is the mass produced in step n (integrated over the
    torus); ``cell_cumulative[s]`` the per-cell mass accumulated up to snapshot
    s.  ``tail_mass[r]`` is the part attributed to |xi| > ``tail_radii[r]``.
    ``full`` keeps per-cell-step densities (and xi-profiles for BGK) only when
    the run asked for it.
    """

    kind: str
    step_totals: np.ndarray
    cell_cumulative: np.ndarray
    tail_radii: tuple = ()
    tail_mass: np.ndarray = field(default_factory=lambda: np.zeros(0))
    min_raw: float = 0.0
    full: Optional[np.ndarray] = None

    @property
    def total(self) -> float:
        return float(np.sum(self.step_totals))


@dataclass
class Trajectory:
    scheme: str
    grid: TorusGrid
    times: np.ndarray
    step_indices: np.ndarray
    states: np.ndarray
    dissipation: DissipationRecord
    dt: float
    n_steps: int
    seed: int = 0
    sample: int = 0
    xigrid: Optional[XiGrid] = None
    params: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise InvariantViolation("snapshot times must start at 0 and increase strictly")

    @property
    def kinetic(self) -> bool:
        return self.xigrid is not None

    @property
    def every_step(self) -> bool:
        return len(self.step_indices) == self.n_steps + 1

    def field_values(self) -> np.ndarray:
        """u at every snapshot, shape (n_snap,) + grid.shape."""
        if not self.kinetic:
            return self.states
        xg = self.xigrid
        neg = (xg.centers < 0).astype(float)
        return np.sum(self.states - neg, axis=-1) * xg.dxi

    def field(self, i: int = -1) -> Field:
        return Field(self.grid, self.field_values()[i])

    def kinetic_state(self, i: int = -1) -> KineticFieldState:
        if not self.kinetic:
            raise ConfigurationError("trajectory carries scalar fields, not kinetic states")
        return KineticFieldState(self.grid, self.xigrid, self.states[i])
