"""Multi-resolution studies on common noise.

Every resolution of a ladder consumes the same Brownian path: the finest run
uses the sampled increments, coarser runs use block sums of them, and the
time step is tied to the cell size so the CFL number is the same everywhere.
Errors are measured against the finest run after block-averaging it onto the
coarser grid.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .fields import Field, KineticFieldState
from .grid_noise import (NoiseModel, XiGrid, aggregate_increments, make_grid, sample_wiener_path)
from .kinetic import FluxSpec, equilibrium_cell_average, equilibrium_mass
from .schemes import run_bgk, run_fv, run_parabolic


def block_average(values: np.ndarray, factor: int, dim: int = 1) -> np.ndarray:
    """Average ``factor``-wide blocks along the trailing ``dim`` axes."""
    if factor == 1:
        return np.asarray(values, float)
    v = np.asarray(values, float)
    lead = v.shape[: v.ndim - dim]
    n = v.shape[-1]
    if n % factor:
        raise ConfigurationError(f"{n} cells are not divisible by {factor}")
    if dim == 1:
        return v.reshape(lead + (n // factor, factor)).mean(axis=-1)
    return v.reshape(lead + (n // factor, factor, n // factor, factor)).mean(axis=(-3, -1))


def lp_error(u_coarse: Field, u_fine: Field, p: float = 1.0) -> float:
    """(sum h^d |u_coarse - block average of u_fine|^p)^(1/p)."""
    gc, gf = u_coarse.grid, u_fine.grid
    if gc.dim != gf.dim or gf.cells_per_dim % gc.cells_per_dim:
        raise ConfigurationError(
            f"fine resolution {gf.cells_per_dim} is not a multiple of {gc.cells_per_dim}")
    if p < 1:
        raise ConfigurationError("p must be >= 1")
    avg = block_average(u_fine.values, gf.cells_per_dim // gc.cells_per_dim, gc.dim)
    return float((np.sum(np.abs(u_coarse.values - avg) ** p) * gc.cell_volume) ** (1.0 / p))


def lp_errors(coarse: np.ndarray, fine: np.ndarray, p: float, dim: int = 1) -> np.ndarray:
    """Batched lp_error over leading axes (values only)."""
    factor = fine.shape[-1] // coarse.shape[-1]
    axes = tuple(range(coarse.ndim - dim, coarse.ndim))
    vol = (1.0 / coarse.shape[-1]) ** dim
    diff = np.abs(coarse - block_average(fine, factor, dim)) ** p
    return (np.sum(diff, axis=axes) * vol) ** (1.0 / p)


@dataclass
class RateFit:
    rate: float
    intercept: float
    residual: float
    dropped: list = field(default_factory=list)


def rate_fit(errors, h_values) -> RateFit:
    """Least-squares slope of log(error) against log(h); non-positive errors are dropped."""
    e = np.asarray(errors, float)
    h = np.asarray(h_values, float)
    if e.shape != h.shape:
        raise ConfigurationError("errors and h_values must have the same length")
    keep = e > 0
    dropped = [int(i) for i in np.flatnonzero(~keep)]
    if np.count_nonzero(keep) < 3:
        raise ConfigurationError(
            f"rate fit needs at least 3 positive errors, got {int(np.count_nonzero(keep))}")
    x, y = np.log(h[keep]), np.log(e[keep])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ np.array([slope, icpt]) - y) ** 2)))
    return RateFit(float(slope), float(icpt), res, dropped)


# --- coupled ladder -------------------------------------------------------------

@dataclass
class ConvergenceStudy:
    scheme: str
    ladder: tuple
    seed: int
    samples: tuple
    times: np.ndarray
    dt: dict  # cells -> time step
    fields: dict  # cells -> (S, n_times, *shape)
    p_list: tuple = (1.0,)

    @property
    def finest(self) -> int:
        return self.ladder[-1]

    def errors(self, p: float = 1.0) -> np.ndarray:
        """(S, n_resolutions, n_times) errors against the finest run; finest row is 0."""
        ref = self.fields[self.finest]
        dim = ref.ndim - 2
        return np.stack([lp_errors(self.fields[n], ref, p, dim) for n in self.ladder], axis=1)


def check_ladder(ladder) -> tuple:
    lad = tuple(int(n) for n in ladder)
    problems = []
    if not lad:
        problems.append("resolution ladder must not be empty")
    for n in lad:
        if n < 2 or n & (n - 1):
            problems.append(f"ladder entry {n} is not a power of two >= 2")
    if any(b <= a for a, b in zip(lad, lad[1:])):
        problems.append("ladder must be strictly increasing")
    if problems:
        raise ConfigurationError(problems)
    return lad


def ladder_steps(ladder, T: float, cfl: float, speed: float, n_times: int = 1) -> int:
    """Number of steps of the coarsest run: dt = T / n <= cfl h / speed, n divisible by n_times."""
    n0 = ladder[0]
    need = T * max(speed, 1e-300) * n0 / cfl
    n = int(np.ceil(need / n_times - 1e-9)) * n_times
    return max(n, n_times)


def coupled_run(scheme: str, grid_dim: int, ladder, flux: FluxSpec, model: NoiseModel, u0_fn,
                T: float, cfl: float, seed: int, samples, times=None, eta: float = None,
                n_times: int = 10, p_list=(1.0,)) -> ConvergenceStudy:
    """Run every resolution of ``ladder`` on the common noise of each sample.

    ``u0_fn`` is evaluated by cell averaging on each grid; ``times`` defaults
    to ``n_times`` equispaced snapshot times in (0, T].
    """
    lad = check_ladder(ladder)
    if scheme not in ("fv", "parabolic"):
        raise ConfigurationError(f"coupled runs support schemes 'fv' and 'parabolic', got {scheme!r}")
    n0 = ladder_steps(lad, T, cfl, flux.lipschitz(), n_times)
    r = lad[-1] // lad[0]
    n_fine = n0 * r
    dt_fine = T / n_fine
    if times is None:
        times = T * np.arange(1, n_times + 1) / n_times
    times = np.asarray(times, float)
    samples = tuple(int(s) for s in samples)
    fine_paths = [sample_wiener_path(model, T, dt_fine, seed, s) for s in samples]
    fields, dts = {}, {}
    for n in lad:
        grid = make_grid(grid_dim, n)
        u0 = Field.from_function(grid, u0_fn)
        factor = lad[-1] // n
        paths = [aggregate_increments(p, factor) for p in fine_paths]
        if scheme == "fv":
            trajs = run_fv(grid, flux, model, paths, u0, cfl, snapshot_times=times)
        else:
            trajs = run_parabolic(grid, flux, model, paths, u0, eta, cfl, snapshot_times=times)
        keep = [i for i, t in enumerate(trajs[0].times) if np.any(np.isclose(t, times, rtol=0, atol=1e-12))]
        fields[n] = np.stack([tr.states[keep] for tr in trajs])
        dts[n] = paths[0].dt
    return ConvergenceStudy(scheme, lad, int(seed), samples, times, dts, fields, tuple(p_list))


# --- per-time tables --------------------------------------------------------------

@dataclass
class TimeSliceReport:
    times: np.ndarray
    errors: np.ndarray  # (S, n_res, n_t)
    inversions: np.ndarray  # (S, n_t)
    sample_pass: np.ndarray  # (S,)
    allowed_inversions: int

    @property
    def pass_fraction(self) -> float:
        return float(np.mean(self.sample_pass)) if self.sample_pass.size else 1.0


def count_inversions(errs: np.ndarray) -> np.ndarray:
    """Non-decreasing steps along axis 1 (the ladder)."""
    if errs.shape[1] < 2:
        return np.zeros((errs.shape[0],) + errs.shape[2:], dtype=int)
    return np.count_nonzero(np.diff(errs, axis=1) >= 0, axis=1)


def time_slice_convergence(study: ConvergenceStudy, t_list=None, p: float = 1.0,
                           allowed_inversions: int = 1) -> TimeSliceReport:
    """Per-sample, per-time error sequences along the ladder (finest excluded)."""
    if t_list is None:
        idx = list(range(len(study.times)))
    else:
        idx = []
        for t in t_list:
            hit = np.flatnonzero(np.isclose(study.times, t, rtol=0, atol=1e-12))
            if hit.size == 0:
                raise ConfigurationError(f"time {t} is not a snapshot time of the study")
            idx.append(int(hit[0]))
    errs = study.errors(p)[:, :-1][:, :, idx]
    inv = count_inversions(errs)
    ok = np.all(inv <= allowed_inversions, axis=1) if errs.shape[1] else np.ones(errs.shape[0], bool)
    return TimeSliceReport(study.times[idx], errs, inv, ok, allowed_inversions)


# --- relaxation limit -----------------------------------------------------------------

@dataclass
class RelaxationStudy:
    """BGK runs over a decreasing ``etas`` ladder against a fine FV reference.

    ``distance[s, i]``: distance-to-equilibrium mass at T; ``errors[s, i]``:
    L1 distance between the BGK barycenter and the block-averaged reference.
    """

    etas: tuple
    samples: tuple
    distance: np.ndarray
    errors: np.ndarray
    dt: float
    dt_ref: float

    def strictly_decreasing(self, values: np.ndarray, n_sigma: float = 0.0) -> bool:
        """Mean decreases at every rung; with ``n_sigma`` > 0 each paired drop
        must also exceed that many standard errors."""
        d = np.diff(values, axis=1)
        mean = d.mean(axis=0)
        if n_sigma <= 0 or values.shape[0] < 2:
            return bool(np.all(mean < 0))
        se = d.std(axis=0, ddof=1) / np.sqrt(values.shape[0])
        return bool(np.all(mean < -n_sigma * se))


def relaxation_study(cells: int, xigrid: XiGrid, flux: FluxSpec, model: NoiseModel, u0_fn,
                     T: float, etas, seed: int, samples, ref_cells: int, cfl: float = 0.4,
                     grid_dim: int = 1) -> RelaxationStudy:
    """Common-noise comparison of BGK (``cells``) with FV at ``ref_cells``.

    The BGK step satisfies the transport CFL with margin ``cfl`` relative to
    max|a| on the velocity grid; the reference step divides it by an integer so
    the reference path aggregates exactly onto the BGK path.
    """
    if ref_cells % cells:
        raise ConfigurationError("ref_cells must be a multiple of cells")
    etas = tuple(float(e) for e in etas)
    if any(e <= 0 for e in etas) or any(b >= a for a, b in zip(etas, etas[1:])):
        raise ConfigurationError("etas must be positive and strictly decreasing")
    grid = make_grid(grid_dim, cells)
    fine = make_grid(grid_dim, ref_cells)
    speed = float(np.max(np.abs(flux.a(xigrid.centers))))
    n = max(int(np.ceil(T * speed / (cfl * grid.h))), 1)
    dt = T / n
    r = max(int(np.ceil(dt * flux.lipschitz() / (cfl * fine.h))), 1)
    samples = tuple(int(s) for s in samples)
    fine_paths = [sample_wiener_path(model, T, dt / r, seed, s) for s in samples]
    paths = [aggregate_increments(p, r) for p in fine_paths]
    ref = run_fv(fine, flux, model, fine_paths, Field.from_function(fine, u0_fn), cfl,
                 snapshot_times=[T])
    ref_T = np.stack([tr.states[-1] for tr in ref])
    u0 = Field.from_function(grid, u0_fn)
    f0 = KineticFieldState(grid, xigrid, equilibrium_cell_average(u0.values, xigrid))
    dist = np.empty((len(samples), len(etas)))
    err = np.empty_like(dist)
    for i, eta in enumerate(etas):
        trs = run_bgk(grid, xigrid, flux, model, paths, f0, eta, snapshot_times=[T])
        for j, tr in enumerate(trs):
            dist[j, i] = float(np.sum(equilibrium_mass(tr.states[-1], xigrid)) * grid.cell_volume)
        u = np.stack([tr.field_values()[-1] for tr in trs])
        err[:, i] = lp_errors(u, ref_T, 1.0, grid_dim)
    return RelaxationStudy(etas, samples, dist, err, dt, dt / r)
