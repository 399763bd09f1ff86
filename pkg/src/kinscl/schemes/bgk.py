"""Kinetic relaxation (BGK) engine on the truncated velocity grid.

One step: upwind transport per xi-slice, exact relaxation towards the
cell-averaged equilibrium of the current barycenter, then the noise as an
exact xi-translation by ``sum_k g_k(x) dbeta_k`` (xi-independent noise only).
"""
import numpy as np

from .. import _backend
from ..errors import ConfigurationError, SchemeAbort
from ..fields import DissipationRecord, KineticFieldState, Trajectory
from ..grid_noise import NoiseModel, TorusGrid, XiGrid
from ..kinetic import FluxSpec, equilibrium_cell_average
from ._common import as_paths, check_finite, check_noise, increments, noise_field, snapshot_steps


def _transport(f, axis, nu):
    moved = np.moveaxis(f, axis, -2)
    shp = moved.shape
    out = _backend.bgk_transport(moved.reshape((-1,) + shp[-2:]), nu)
    return np.moveaxis(out.reshape(shp), -2, axis)


def run_bgk(grid: TorusGrid, xigrid: XiGrid, flux: FluxSpec, model: NoiseModel, path,
            f0: KineticFieldState, eta: float, *, snapshot_times=None, every_step=False,
            record_full=False, tail_radii=(), tol_f=1e-10, tol_m=1e-10):
    """Advance kinetic states; ``path`` is one NoisePath or a list of them.

    The dissipation record stores, per cell-step, the xi-integral of
    ``m = (1 - e^{-dt/eta}) int_{-R}^{xi} (f_eq - f) dz``; with ``record_full`` the
    xi-density ``d_xi m`` of every step is kept as well (shape
    ``(n_steps,) + grid.shape + (M,)``).
    """
    paths, single = as_paths(path)
    check_noise(model, paths, grid)
    dt, n_steps = paths[0].dt, paths[0].n_steps
    problems = []
    if not (eta is not None and eta > 0):
        problems.append(f"eta must be positive, got {eta}")
    if not model.xi_independent:
        problems.append("the kinetic relaxation scheme needs xi-independent noise "
                        f"(mode 'additive' or zero amplitudes), got mode {model.mode!r}")
    if f0.grid != grid or f0.xigrid != xigrid:
        problems.append("f0 must live on the run grid and velocity grid")
    xc = xigrid.centers
    speed = float(np.max(np.abs(flux.a(xc))))
    if speed * dt > grid.h * (1.0 + 1e-12):
        problems.append(f"transport CFL violated: dt * max|a(xi)| = {speed * dt:.6g} > h = {grid.h}")
    if problems:
        raise ConfigurationError(problems)
    try:
        f0.check(tol_f)
    except AssertionError as exc:
        raise ConfigurationError(f"invalid initial kinetic state: {exc}") from None

    snaps = snapshot_steps(n_steps, dt, snapshot_times, every_step)
    S, dim, shape, M = len(paths), grid.dim, grid.shape, xigrid.M
    dxi, vol = xigrid.dxi, grid.cell_volume
    nu = np.ascontiguousarray(flux.a(xc) * dt / grid.h, dtype=float)
    relax = np.exp(-dt / eta)
    neg = (xc < 0).astype(float)
    edges_r = xigrid.edges[1:]
    radii = tuple(float(r) for r in tail_radii)
    outside = [np.abs(edges_r) > R for R in radii]
    sp_axes = tuple(range(1, dim + 1))
    xi_transport = not flux.is_zero

    inc = increments(paths)
    W = model.spatial_weights(grid)

    f = np.broadcast_to(f0.values, (S,) + f0.values.shape).copy()
    states = np.empty((S, len(snaps)) + f0.values.shape)
    states[:, 0] = f
    cell_cum = np.zeros((S, len(snaps)) + shape)
    acc = np.zeros((S,) + shape)
    step_totals = np.zeros((S, n_steps))
    tails = np.zeros((S, len(radii)))
    full = np.empty((S, n_steps) + f0.values.shape) if record_full else None
    min_raw = np.full(S, np.inf)
    rise_max = 0.0
    si = 1

    for n in range(n_steps):
        if xi_transport:
            for ax in sp_axes:
                f = _transport(f, ax, nu)

        u = np.sum(f - neg, axis=-1) * dxi
        dm = (1.0 - relax) * (equilibrium_cell_average(u, xigrid) - f)
        f = f + dm
        prof = np.cumsum(dm, axis=-1) * dxi
        cell_mass = np.sum(prof, axis=-1) * dxi
        min_raw = np.minimum(min_raw, prof.min(axis=tuple(range(1, prof.ndim))))
        cell_mass = np.maximum(cell_mass, -tol_m)
        acc += cell_mass
        step_totals[:, n] = np.sum(cell_mass, axis=sp_axes) * vol
        for r, mask in enumerate(outside):
            tails[:, r] += np.sum(np.maximum(prof, 0.0) * mask, axis=tuple(range(1, prof.ndim))) * dxi * vol
        if full is not None:
            full[:, n] = dm

        if not model.is_zero:
            shift = noise_field(inc[:, n], W)
            flat = _backend.xi_shift(f.reshape(S, -1, M), shift.reshape(S, -1), dxi)
            f = flat.reshape(f.shape)

        check_finite(f, n, "kinetic state")
        fmin, fmax = float(f.min()), float(f.max())
        if fmin < -tol_f or fmax > 1.0 + tol_f:
            raise SchemeAbort(f"kinetic state left [0,1]: range [{fmin:.3e}, {fmax:.3e}]", n)
        if float(np.max(1.0 - f[..., 0])) > tol_f or float(np.max(f[..., -1])) > tol_f:
            raise SchemeAbort("truncation exceeded: xi-mass reached the boundary of (-R, R)", n)
        rise_max = max(rise_max, float(np.max(np.diff(f, axis=-1))))

        if si < len(snaps) and snaps[si] == n + 1:
            states[:, si] = f
            cell_cum[:, si] = acc
            si += 1

    params = {"flux": flux.name, "flux_coefficients": list(flux.coefficients), "eta": eta,
              "xi_R": xigrid.R, "xi_M": M, "noise": model.config_items()}
    out = []
    for s, p in enumerate(paths):
        rec = DissipationRecord("relaxation", step_totals[s], cell_cum[s], radii, tails[s],
                                float(min_raw[s]) if n_steps else 0.0,
                                None if full is None else full[s])
        out.append(Trajectory("bgk", grid, snaps * dt, snaps, states[s], rec, dt, n_steps,
                              p.seed, p.sample, xigrid, dict(params),
                              {"monotone_violation": max(rise_max, 0.0)}))
    return out[0] if single else out
