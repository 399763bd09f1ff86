"""Finite volume and vanishing-viscosity engines for scalar fields.

Both engines advance a batch of samples at once (one noise path per sample)
and return one Trajectory per sample.  A step is

    u* = monotone flux update of u^n        (dimensional splitting in 2-d)
    u' = u* + sum_k g_k(x, u^n) dbeta_k     (Euler-Maruyama at the cell centres)
    u^{n+1} = u'                            (finite volume)
    (I - eta dt Lap_h) u^{n+1} = u'         (parabolic, periodic FFT solve)
"""
import numpy as np

from .. import _backend
from .._kernels_py import ENGQUIST_OSHER, GODUNOV, LAX_FRIEDRICHS
from ..errors import ConfigurationError, SchemeAbort
from ..fields import DissipationRecord, Field, Trajectory
from ..grid_noise import NoiseModel, TorusGrid
from ..kinetic import FluxSpec, TestFunction
from ._common import (as_paths, check_finite, check_noise, increments, noise_field,
                      outside_fraction, snapshot_steps, stencil_range)

_KIND = {"godunov": GODUNOV, "engquist_osher": ENGQUIST_OSHER, "lax_friedrichs": LAX_FRIEDRICHS}

# relative size of flux-step overshoot accepted as rounding before aborting
CLAMP_TOL = 1e-12


def _sweep(u, axis, lam, kind, A, q, crit):
    moved = np.moveaxis(u, axis, -1)
    shp = moved.shape
    unew, d = _backend.fv_sweep(moved.reshape(-1, shp[-1]), lam, kind, A, q, crit)
    return np.moveaxis(unew.reshape(shp), -1, axis), np.moveaxis(d.reshape(shp), -1, axis)


def _laplace_symbol(grid: TorusGrid, eta_dt: float) -> np.ndarray:
    n = grid.cells_per_dim
    k = np.arange(n)
    lam = 4.0 / grid.h ** 2 * np.sin(np.pi * k / n) ** 2
    if grid.dim == 1:
        return 1.0 + eta_dt * lam[: n // 2 + 1]
    return 1.0 + eta_dt * (lam[:, None] + lam[None, : n // 2 + 1])


def _implicit_heat(u, symbol, dim):
    axes = tuple(range(-dim, 0))
    n = u.shape[-1]
    if dim == 1:
        return np.fft.irfft(np.fft.rfft(u, axis=-1) / symbol, n=n, axis=-1)
    return np.fft.irfft2(np.fft.rfft2(u, axes=axes) / symbol, s=(n, n), axes=axes)


def grad_energy(u, h, dim):
    """Per-cell 1/2 (|D+ u|^2 + |D- u|^2) summed over directions."""
    out = np.zeros_like(u)
    for ax in range(-dim, 0):
        dp = (np.roll(u, -1, axis=ax) - u) / h
        dm = (u - np.roll(u, 1, axis=ax)) / h
        out += 0.5 * (dp * dp + dm * dm)
    return out


def _check_cfl(grid, flux, dt, cfl):
    problems = []
    if not 0.0 < cfl < 1.0:
        problems.append(f"cfl must lie in (0,1), got {cfl}")
    L = flux.lipschitz()
    if L * dt > cfl * grid.h * (1.0 + 1e-12):
        problems.append(
            f"CFL violated: dt * max|A'| / h = {L * dt / grid.h:.6g} exceeds cfl = {cfl} "
            f"(dt={dt}, h={grid.h}, max|A'|={L} on {flux.interval})")
    return problems


def _region_margin(model: NoiseModel, dt: float) -> float:
    return 1e-12 if model.is_zero else 3.0 * model.g_max * np.sqrt(dt)


def _scalar_engine(scheme, grid, flux, model, path, u0, cfl, eta, snapshot_times,
                   every_step, record_full, tail_radii, tol_m):
    paths, single = as_paths(path)
    check_noise(model, paths, grid)
    if not isinstance(u0, Field) or u0.grid != grid:
        raise ConfigurationError("u0 must be a Field on the run grid")
    dt, n_steps = paths[0].dt, paths[0].n_steps
    problems = _check_cfl(grid, flux, dt, cfl)
    lo_reg, hi_reg = flux.interval
    if u0.values.min() < lo_reg or u0.values.max() > hi_reg:
        problems.append(f"initial data leaves the configured invariant region {flux.interval}")
    if eta is not None and not eta > 0:
        problems.append(f"eta must be positive, got {eta}")
    if problems:
        raise ConfigurationError(problems)

    snaps = snapshot_steps(n_steps, dt, snapshot_times, every_step)
    S, dim, shape = len(paths), grid.dim, grid.shape
    vol, h, lam = grid.cell_volume, grid.h, dt / grid.h
    kind = _KIND[flux.numerical]
    A = np.ascontiguousarray(flux.coefficients, dtype=float)
    qc = np.ascontiguousarray(flux.q.coef, dtype=float)
    crit = np.ascontiguousarray(flux.critical_points(), dtype=float)
    radii = tuple(float(r) for r in tail_radii)
    margin = _region_margin(model, dt)
    sp_axes = tuple(range(1, dim + 1))

    inc = increments(paths)
    W = model.spatial_weights(grid)
    W2 = np.sum(W * W, axis=0)
    symbol = _laplace_symbol(grid, eta * dt) if eta is not None else None

    u = np.broadcast_to(u0.values, (S,) + shape).copy()
    states = np.empty((S, len(snaps)) + shape)
    states[:, 0] = u
    cell_cum = np.zeros((S, len(snaps)) + shape)
    acc = np.zeros((S,) + shape)
    step_totals = np.zeros((S, n_steps))
    tails = np.zeros((S, len(radii)))
    full = np.empty((S, n_steps) + shape) if record_full else None
    ito_gu = np.zeros((S, len(snaps)))
    ito_g2 = np.zeros((S, len(snaps)))
    gu_acc = np.zeros(S)
    g2_acc = np.zeros(S)
    min_raw = np.full(S, np.inf)
    clamp_max = 0.0
    si = 1

    for n in range(n_steps):
        # flux sub-step with invariant-region clamp
        ustar = u
        diss = np.zeros_like(u)
        for ax in sp_axes:
            lo = ustar.min(axis=sp_axes, keepdims=True)
            hi = ustar.max(axis=sp_axes, keepdims=True)
            unew, d = _sweep(ustar, ax, lam, kind, A, qc, crit)
            over = float(max(np.max(unew - hi), np.max(lo - unew), 0.0))
            scale = 1.0 + float(np.max(np.abs(ustar)))
            if over > CLAMP_TOL * scale:
                raise SchemeAbort(
                    f"flux step left [min u, max u] by {over:.3e}; monotone update violated", n)
            clamp_max = max(clamp_max, over)
            ustar = np.clip(unew, lo, hi)
            diss += d

        if not model.is_zero:
            chi_u = model.state_profile(u)
            gdb = chi_u * noise_field(inc[:, n], W)
            gu_acc += np.sum(gdb * u, axis=sp_axes) * vol
            g2_acc += 0.5 * dt * np.sum(chi_u * chi_u * W2, axis=sp_axes) * vol
            unext = ustar + gdb
        else:
            unext = ustar

        if symbol is not None:
            unext = _implicit_heat(unext, symbol, dim)
            d_rec = eta * dt * grad_energy(unext, h, dim)
            lvl = unext
        else:
            d_rec = diss
            lvl = u
        check_finite(unext, n)
        umin, umax = float(unext.min()), float(unext.max())
        if umin < lo_reg - margin or umax > hi_reg + margin:
            raise SchemeAbort(
                f"state range [{umin:.6g}, {umax:.6g}] left the invariant region "
                f"{flux.interval} beyond {margin:.3g}; the CFL certificate no longer holds", n)

        min_raw = np.minimum(min_raw, d_rec.min(axis=sp_axes))
        d_rec = np.maximum(d_rec, -tol_m)
        acc += d_rec
        step_totals[:, n] = np.sum(d_rec, axis=sp_axes) * vol
        if full is not None:
            full[:, n] = d_rec
        if radii:
            slo, shi = stencil_range(lvl, dim)
            pos = np.maximum(d_rec, 0.0)
            for r, R in enumerate(radii):
                tails[:, r] += np.sum(pos * outside_fraction(slo, shi, R), axis=sp_axes) * vol

        u = unext
        if si < len(snaps) and snaps[si] == n + 1:
            states[:, si] = u
            cell_cum[:, si] = acc
            ito_gu[:, si] = gu_acc
            ito_g2[:, si] = g2_acc
            si += 1

    params = {"flux": flux.name, "flux_coefficients": list(flux.coefficients),
              "numerical_flux": flux.numerical, "invariant_region": list(flux.interval),
              "cfl": cfl, "eta": eta, "noise": model.config_items()}
    kind_tag = "viscous" if eta is not None else "entropy"
    out = []
    for s, p in enumerate(paths):
        rec = DissipationRecord(kind_tag, step_totals[s], cell_cum[s], radii, tails[s],
                                float(min_raw[s]) if n_steps else 0.0,
                                None if full is None else full[s])
        out.append(Trajectory(scheme, grid, snaps * dt, snaps, states[s], rec, dt, n_steps,
                              p.seed, p.sample, None, dict(params),
                              {"ito_gu": ito_gu[s], "ito_g2": ito_g2[s], "clamp_max": clamp_max}))
    return out[0] if single else out


def run_fv(grid: TorusGrid, flux: FluxSpec, model: NoiseModel, path, u0: Field, cfl: float = 0.4,
           *, snapshot_times=None, every_step=False, record_full=False, tail_radii=(),
           tol_m=1e-10):
    """Monotone finite volume scheme with Euler-Maruyama noise.

    ``path`` may be one NoisePath or a list (one per sample); the return value
    mirrors it.  The time step is the path's ``dt``; it must satisfy
    ``dt * max|A'| <= cfl * h`` on ``flux.interval``.
    """
    return _scalar_engine("fv", grid, flux, model, path, u0, cfl, None, snapshot_times,
                          every_step, record_full, tail_radii, tol_m)


def run_parabolic(grid: TorusGrid, flux: FluxSpec, model: NoiseModel, path, u0: Field,
                  eta: float, cfl: float = 0.4, *, snapshot_times=None, every_step=False,
                  record_full=False, tail_radii=(), tol_m=1e-10):
    """Vanishing-viscosity scheme: explicit flux and noise, implicit periodic diffusion.

    The dissipation record holds ``eta * dt * |D u|^2`` per cell-step at the new
    state (non-negative by construction).
    """
    if eta is None:
        raise ConfigurationError("eta must be positive, got None")
    return _scalar_engine("parabolic", grid, flux, model, path, u0, cfl, float(eta),
                          snapshot_times, every_step, record_full, tail_radii, tol_m)


def epsilon_parabolic(traj: Trajectory, phi: TestFunction, eta: float) -> np.ndarray:
    """eta * int_0^t <1_{u>xi}, Lap_x phi> ds at every snapshot.

    The diffusion acts implicitly, so the time integral uses the right end of
    each step.  Requires every step to be stored.
    """
    if traj.kinetic:
        raise ConfigurationError("epsilon_parabolic expects a scalar trajectory")
    if not traj.every_step:
        raise ConfigurationError("epsilon_parabolic needs every step stored (every_step=True)")
    grid = traj.grid
    if eta == 0:
        return np.zeros(len(traj.times))
    lap = phi.lap_theta(grid.centers())
    axes = tuple(range(-grid.dim, 0))
    vals = np.sum(lap * phi.xi_primitive(traj.states), axis=axes) * grid.cell_volume
    out = np.zeros(len(traj.times))
    out[1:] = eta * traj.dt * np.cumsum(vals[1:])
    return out
