"""Statistical and deterministic checks on scheme output.

Every check returns a small report object carrying its estimate, the
threshold it was compared against and a pass flag, so reports can be
serialised without further interpretation.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .fields import Trajectory
from .grid_noise import NoiseModel, NoisePath, standard_normals
from .kinetic import FluxSpec, TestFunction, moment_from_kinetic
from .schemes.fv import grad_energy


# --- ensemble statistics --------------------------------------------------------

@dataclass(frozen=True)
class EnsembleStat:
    estimate: float
    standard_error: float
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigurationError("an ensemble statistic needs at least 2 samples")
        if not self.standard_error >= 0:
            raise ConfigurationError("standard error must be non-negative")

    @classmethod
    def from_samples(cls, x) -> "EnsembleStat":
        x = np.asarray(x, dtype=float).ravel()
        if x.size < 2:
            raise ConfigurationError("an ensemble statistic needs at least 2 samples")
        return cls(float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.size)), int(x.size))

    def as_dict(self) -> dict:
        return {"estimate": self.estimate, "standard_error": self.standard_error,
                "n_samples": self.n_samples}


def _sp_axes(grid, lead=1):
    return tuple(range(lead, lead + grid.dim))


# --- mass identity ---------------------------------------------------------------

def _ito_sums(traj: Trajectory, model: NoiseModel, path: NoisePath):
    """Cumulative sum_n int g u dbeta and 1/2 sum_n dt int G^2 at every snapshot."""
    if "ito_gu" in traj.diagnostics and path is None:
        return traj.diagnostics["ito_gu"], traj.diagnostics["ito_g2"]
    if model is None or model.is_zero:
        z = np.zeros(len(traj.times))
        return z, z
    if not traj.every_step:
        if "ito_gu" in traj.diagnostics:
            return traj.diagnostics["ito_gu"], traj.diagnostics["ito_g2"]
        raise ConfigurationError("Ito sums need every step stored or engine diagnostics")
    grid = traj.grid
    U = traj.states[:-1]
    W = model.spatial_weights(grid)
    chi_u = model.state_profile(U)
    axes = _sp_axes(grid)
    s = np.tensordot(np.asarray(path.increments), W, axes=(1, 0))
    gu = np.sum(chi_u * s * U, axis=axes) * grid.cell_volume
    g2 = 0.5 * traj.dt * np.sum(chi_u ** 2 * np.sum(W * W, axis=0), axis=axes) * grid.cell_volume
    z = np.zeros(1)
    return np.concatenate([z, np.cumsum(gu)]), np.concatenate([z, np.cumsum(g2)])


def mass_balance(traj, model: NoiseModel = None, path: NoisePath = None):
    """Total kinetic-measure mass implied by the energy identity.

    1/2 |u0|^2 - 1/2 |u(T)|^2 + sum int g u dbeta + 1/2 sum dt int G^2, with
    cell quadrature.  Accepts one trajectory or a list (returns an array).
    """
    if isinstance(traj, (list, tuple)):
        paths = path if isinstance(path, (list, tuple)) else [path] * len(traj)
        return np.array([mass_balance(t, model, p) for t, p in zip(traj, paths)])
    if traj.kinetic:
        raise ConfigurationError("mass_balance expects a scalar trajectory")
    u = traj.states
    vol = traj.grid.cell_volume
    e0 = 0.5 * np.sum(u[0] ** 2) * vol
    e1 = 0.5 * np.sum(u[-1] ** 2) * vol
    gu, g2 = _ito_sums(traj, model, path)
    return float(e0 - e1 + gu[-1] + g2[-1])


# --- kinetic residual ---------------------------------------------------------------

def _left_cumsum(v, dt):
    out = np.zeros(len(v))
    out[1:] = np.cumsum(v[:-1]) * dt
    return out


@dataclass
class ResidualParts:
    """Time series of every term of the discrete kinetic identity."""

    pairing: np.ndarray
    transport: np.ndarray
    martingale: np.ndarray
    ito: np.ndarray
    measure: np.ndarray
    h: np.ndarray  # h_{phi,k} at t_n, shape (n_steps + 1, K)

    @property
    def residual(self) -> np.ndarray:
        return (self.pairing - self.pairing[0] - self.transport - self.martingale
                - self.ito + self.measure)


def _scalar_parts(traj, flux, model, path, phi):
    grid = traj.grid
    x = grid.centers()
    vol = grid.cell_volume
    axes = _sp_axes(grid)
    U = traj.states
    th = phi.theta(x)
    pairing = np.sum(th * phi.xi_primitive(U), axis=axes) * vol
    trans = np.sum(phi.div_theta(x) * phi.xi_primitive(U, flux.a), axis=axes) * vol
    transport = _left_cumsum(trans, traj.dt)

    K = model.K
    h = np.zeros((len(U), K))
    ito = np.zeros(len(U))
    if not model.is_zero:
        W = model.spatial_weights(grid)
        chi_u = model.state_profile(U)
        tpsi = th * phi.psi(U) * chi_u
        h = np.tensordot(tpsi, W, axes=(axes, tuple(range(1, grid.dim + 1)))) * vol
        G2 = chi_u ** 2 * np.sum(W * W, axis=0)
        ito = 0.5 * _left_cumsum(np.sum(G2 * th * phi.dpsi(U), axis=axes) * vol, traj.dt)
    inc = np.asarray(path.increments) if path is not None else np.zeros((traj.n_steps, K))
    mart = np.zeros(len(U))
    mart[1:] = np.cumsum(np.sum(h[:-1] * inc, axis=1))

    rec = traj.dissipation
    if traj.scheme == "parabolic":
        eta = traj.params["eta"]
        d = rec.full if rec.full is not None else eta * traj.dt * grad_energy(U[1:], grid.h, grid.dim)
        at = U[1:]
    else:
        if rec.full is None:
            raise ConfigurationError("finite volume residual needs record_full=True")
        d, at = rec.full, U[:-1]
    meas = np.zeros(len(U))
    meas[1:] = np.cumsum(np.sum(d * th * phi.dpsi(at), axis=axes) * vol)
    return ResidualParts(pairing, transport, mart, ito, meas, h)


def _kinetic_parts(traj, flux, model, path, phi):
    grid, xg = traj.grid, traj.xigrid
    x = grid.centers()
    vol, dxi = grid.cell_volume, xg.dxi
    xc = xg.centers
    F = traj.states
    th = phi.theta(x)[..., None]
    lead = tuple(range(1, grid.dim + 2))
    pairing = np.sum(F * th * phi.psi(xc), axis=lead) * vol * dxi
    trans = np.sum(F * phi.div_theta(x)[..., None] * flux.a(xc) * phi.psi(xc), axis=lead) * vol * dxi
    transport = _left_cumsum(trans, traj.dt)

    K = model.K
    h = np.zeros((len(F), K))
    ito = np.zeros(len(F))
    if not model.is_zero:
        W = model.spatial_weights(grid)
        nu_phi = np.sum(F * th * phi.dpsi(xc), axis=-1) * dxi
        h = np.tensordot(nu_phi, W, axes=(_sp_axes(grid), tuple(range(1, grid.dim + 1)))) * vol
        G2 = np.sum(W * W, axis=0)
        ito = 0.5 * _left_cumsum(
            np.sum(G2 * np.sum(F * th * phi.d2psi(xc), axis=-1), axis=_sp_axes(grid)) * vol * dxi,
            traj.dt)
    inc = np.asarray(path.increments) if path is not None else np.zeros((traj.n_steps, K))
    mart = np.zeros(len(F))
    mart[1:] = np.cumsum(np.sum(h[:-1] * inc, axis=1))

    dm = traj.dissipation.full
    if dm is None:
        raise ConfigurationError("kinetic residual of a relaxation run needs record_full=True")
    meas = np.zeros(len(F))
    meas[1:] = -np.cumsum(np.sum(dm * th * phi.psi(xc), axis=lead) * vol * dxi)
    return ResidualParts(pairing, transport, mart, ito, meas, h)


def residual_parts(traj: Trajectory, flux: FluxSpec, model: NoiseModel, path: NoisePath,
                   phi: TestFunction) -> ResidualParts:
    if not traj.every_step:
        raise ConfigurationError("the kinetic residual needs every step stored (every_step=True)")
    if path is not None and (path.n_steps != traj.n_steps or path.dt != traj.dt):
        raise ConfigurationError("noise path does not match the trajectory's time steps")
    if traj.kinetic:
        phi.check_support(traj.xigrid)
        return _kinetic_parts(traj, flux, model, path, phi)
    return _scalar_parts(traj, flux, model, path, phi)


def kinetic_residual(traj: Trajectory, flux: FluxSpec, model: NoiseModel, path: NoisePath,
                     phi: TestFunction) -> np.ndarray:
    """Defect of the discrete kinetic identity at every step time.

    <f(t),phi> - <f0,phi> - int <f, a.grad phi> - M_phi(t)
    - 1/2 int int G^2 d_xi phi dnu dx + m(d_xi phi)([0,t]).
    """
    return residual_parts(traj, flux, model, path, phi).residual


# --- martingale identities -------------------------------------------------------------

@dataclass
class MartingaleEntry:
    identity: str
    functional: int
    s: float
    t: float
    mean: float
    standard_error: float
    statistic: float
    status: str  # "pass", "fail" or "inconclusive"

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass
class MartingaleTestReport:
    entries: list
    threshold: float
    n_samples: int

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def by_identity(self, name) -> list:
        return [e for e in self.entries if e.identity == name]

    def max_statistic(self, name=None) -> float:
        es = self.entries if name is None else self.by_identity(name)
        return max((e.statistic for e in es), default=0.0)


def _normalized(z: np.ndarray):
    m = float(np.mean(z))
    se = float(np.std(z, ddof=1) / np.sqrt(z.size))
    if se > 0:
        return m, se, abs(m) / se
    return m, se, (0.0 if m == 0 else np.inf)


def cumulative_integrals(times, h):
    """Left Riemann sums of |h|^2 and h over ``times``: (S, T) and (S, T, K)."""
    h = np.asarray(h, float)
    dt = np.diff(np.asarray(times, float))
    S = h.shape[0]
    hsq = np.concatenate([np.zeros((S, 1)),
                          np.cumsum(np.sum(h[:, :-1] ** 2, axis=2) * dt, axis=1)], axis=1)
    hint = np.concatenate([np.zeros((S, 1, h.shape[2])),
                           np.cumsum(h[:, :-1] * dt[:, None], axis=1)], axis=1)
    return hsq, hint


def martingale_test(times, M, beta, H, h=None, hsq=None, hint=None, pairs=None,
                    threshold: float = 3.0, min_samples: int = 100) -> MartingaleTestReport:
    """Check the three martingale identities on sampled processes.

    times: (T,); M: (S, T); beta: (S, T, K); H: (S, J, T) bounded past
    functionals, H[..., i] depending on the path up to times[i] only.  The
    compensators ``hsq`` (S, T) = int |h|^2 ds and ``hint`` (S, T, K) = int h ds
    are either given (accumulated on a finer grid) or built from the
    integrands ``h`` (S, T, K) by left Riemann sums over ``times``.
    ``pairs`` are index pairs (i, j), i < j.
    """
    times = np.asarray(times, float)
    M = np.asarray(M, float)
    beta = np.asarray(beta, float)
    H = np.asarray(H, float)
    S = M.shape[0]
    if S < min_samples:
        raise ConfigurationError(f"martingale test needs at least {min_samples} samples, got {S}")
    if hsq is None or hint is None:
        if h is None:
            raise ConfigurationError("give either the integrands h or both compensators")
        hsq, hint = cumulative_integrals(times, h)
    hsq = np.asarray(hsq, float)
    hint = np.asarray(hint, float)
    ids = {
        "M": M,
        "M^2 - int|h|^2": M ** 2 - hsq,
        "M beta_k - int h_k": M[:, :, None] * beta - hint,
    }
    if pairs is None:
        pairs = [(i, j) for i in range(len(times)) for j in range(i + 1, len(times))]
    entries = []
    for name, Y in ids.items():
        for (i, j) in pairs:
            dY = Y[:, j] - Y[:, i]
            for a in range(H.shape[1]):
                w = H[:, a, i]
                comps = [dY * w] if dY.ndim == 1 else [dY[:, k] * w for k in range(dY.shape[1])]
                for z in comps:
                    m, se, stat = _normalized(z)
                    if se == 0 and m != 0:
                        status = "inconclusive"
                    else:
                        status = "pass" if stat <= threshold else "fail"
                    entries.append(MartingaleEntry(name, a, float(times[i]), float(times[j]),
                                                   m, se, stat, status))
    return MartingaleTestReport(entries, threshold, S)


def past_functionals(pairings: np.ndarray, times, gain: float = 10.0) -> np.ndarray:
    """Bounded adapted functionals of running time-averages.

    pairings: (S, J, T) values of <f(t_i), phi_j>.  Returns (S, J + 1, T): the
    constant 1 and sigmoid(gain * average of the pairing over [0, t_i]).
    """
    P = np.asarray(pairings, float)
    t = np.asarray(times, float)
    S, J, T = P.shape
    avg = P.copy()
    if T > 1:
        seg = 0.5 * (P[..., 1:] + P[..., :-1]) * np.diff(t)
        integ = np.concatenate([np.zeros((S, J, 1)), np.cumsum(seg, axis=-1)], axis=-1)
        avg[..., 1:] = integ[..., 1:] / (t[1:] - t[0])
    out = np.empty((S, J + 1, T))
    out[:, 0] = 1.0
    out[:, 1:] = 1.0 / (1.0 + np.exp(-gain * avg))
    return out


@dataclass
class MartingaleInputs:
    times: np.ndarray
    M: np.ndarray
    beta: np.ndarray
    hsq: np.ndarray
    hint: np.ndarray
    H: np.ndarray

    @classmethod
    def concat(cls, parts) -> "MartingaleInputs":
        """Join per-chunk inputs along the sample axis (order preserved)."""
        parts = list(parts)
        return cls(parts[0].times, *(np.concatenate([getattr(p, f) for p in parts])
                                     for f in ("M", "beta", "hsq", "hint", "H")))

    def test(self, pairs=None, threshold: float = 3.0, min_samples: int = 100):
        return martingale_test(self.times, self.M, self.beta, self.H, hsq=self.hsq,
                               hint=self.hint, pairs=pairs, threshold=threshold,
                               min_samples=min_samples)


def martingale_inputs(trajs, flux: FluxSpec, model: NoiseModel, paths, phis, functionals,
                      every: int = 1, epsilon=None) -> list:
    """Recover M_phi from the kinetic identity of each trajectory, for each phi.

    M = residual + M_phi - epsilon(traj, phi), with epsilon the scheme's error
    functional (zero when omitted); the result depends only on the computed
    states, the dissipation record and the Ito correction.  Past functionals
    are built from running averages of the pairings with ``functionals``.
    Processes are sampled at every ``every``-th step; compensators are summed
    on the full step grid first.  Returns one MartingaleInputs per phi.
    """
    times = trajs[0].times
    sel = slice(None, None, every)
    P = np.array([[_pair_series(t, q) for q in functionals] for t in trajs])
    H = past_functionals(P, times)[..., sel]
    beta = np.array([p.brownian() for p in paths])[:, sel]
    out = []
    for phi in phis:
        Ms, hs = [], []
        for traj, path in zip(trajs, paths):
            parts = residual_parts(traj, flux, model, path, phi)
            X = parts.residual + parts.martingale
            if epsilon is not None:
                X = X - epsilon(traj, phi)
            Ms.append(X)
            hs.append(parts.h)
        hsq, hint = cumulative_integrals(times, np.array(hs))
        out.append(MartingaleInputs(times[sel], np.array(Ms)[:, sel], beta, hsq[:, sel],
                                    hint[:, sel], H))
    return out


def _pair_series(traj, phi):
    grid = traj.grid
    if traj.kinetic:
        xc = traj.xigrid.centers
        th = phi.theta(grid.centers())[..., None]
        return np.sum(traj.states * th * phi.psi(xc), axis=tuple(range(1, grid.dim + 2))) \
            * grid.cell_volume * traj.xigrid.dxi
    th = phi.theta(grid.centers())
    return np.sum(th * phi.xi_primitive(traj.states), axis=_sp_axes(grid)) * grid.cell_volume


def drift_control(n_samples: int, times, seed: int, drift: float = 1.0) -> MartingaleInputs:
    """Negative control: M = beta + drift * t with h = 1 (not a martingale when drift != 0)."""
    t = np.asarray(times, float)
    dt = np.diff(t)
    z = np.stack([standard_normals(seed, s, 1, len(dt))[:, 0] for s in range(n_samples)])
    beta = np.concatenate([np.zeros((n_samples, 1)), np.cumsum(z * np.sqrt(dt), axis=1)], axis=1)
    M = beta + drift * t
    hsq, hint = cumulative_integrals(t, np.ones((n_samples, len(t), 1)))
    return MartingaleInputs(t, M, beta[:, :, None], hsq, hint, np.ones((n_samples, 1, len(t))))


def brownian_control(n_samples: int, times, seed: int) -> MartingaleInputs:
    """Positive control: M = beta with h = 1."""
    return drift_control(n_samples, times, seed, drift=0.0)


# --- L1 contraction and comparison -------------------------------------------------------

@dataclass
class ContractionReport:
    times: np.ndarray
    series: list
    start_ok: bool
    monotone_ok: bool
    n_sigma: float

    @property
    def passed(self) -> bool:
        return self.start_ok and self.monotone_ok

    def estimates(self) -> np.ndarray:
        return np.array([s.estimate for s in self.series])


def positive_part_l1(ua: np.ndarray, ub: np.ndarray, cell_volume: float, dim: int) -> np.ndarray:
    axes = tuple(range(ua.ndim - dim, ua.ndim))
    return np.sum(np.maximum(ua - ub, 0.0), axis=axes) * cell_volume


def contraction_series(trajs_a, trajs_b, n_sigma: float = 2.0) -> ContractionReport:
    """E|(u_a - u_b)^+|_L1 at every snapshot from paired trajectories."""
    if len(trajs_a) != len(trajs_b):
        raise ConfigurationError("contraction test needs the same number of samples on both sides")
    for ta, tb in zip(trajs_a, trajs_b):
        if ta.grid != tb.grid:
            raise ConfigurationError("contraction test needs matching grids")
        if ta.seed != tb.seed or ta.sample != tb.sample or not np.array_equal(ta.times, tb.times):
            raise ConfigurationError("paired runs must share noise path and snapshot times")
    grid = trajs_a[0].grid
    vals = np.array([positive_part_l1(ta.field_values(), tb.field_values(), grid.cell_volume, grid.dim)
                     for ta, tb in zip(trajs_a, trajs_b)])  # (S, n_snap)
    return contraction_report(vals, trajs_a[0].times, n_sigma)


def contraction_report(vals: np.ndarray, times, n_sigma: float = 2.0) -> ContractionReport:
    """Judge per-sample series ``vals`` (S, n_snap): no level above the start and
    no paired increase beyond ``n_sigma`` standard errors."""
    vals = np.asarray(vals, float)
    series = [EnsembleStat.from_samples(vals[:, j]) for j in range(vals.shape[1])]
    base = series[0].estimate
    # the start value is often exact with zero spread; allow summation rounding only
    slack = vals.shape[0] * np.spacing(abs(base))
    start_ok = all(s.estimate <= base + n_sigma * s.standard_error + slack for s in series)
    monotone_ok = True
    for j in range(1, vals.shape[1]):
        d = vals[:, j] - vals[:, j - 1]
        se = float(np.std(d, ddof=1) / np.sqrt(d.size))
        if float(np.mean(d)) > n_sigma * se:
            monotone_ok = False
    return ContractionReport(np.array(times, float), series, bool(start_ok), monotone_ok, n_sigma)


def contraction_test(u0_a, u0_b, runner, paths, n_sigma: float = 2.0) -> ContractionReport:
    """Run both initial data on the same noise paths and compare.

    ``runner(u0, paths)`` returns one trajectory per path (any scheme).
    """
    if u0_a.grid != u0_b.grid:
        raise ConfigurationError("contraction test needs both initial data on the same grid")
    return contraction_series(runner(u0_a, paths), runner(u0_b, paths), n_sigma)


# --- L-infinity bound ------------------------------------------------------------------

@dataclass
class LinftyReport:
    exceedance: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.exceedance <= self.tolerance


def linfty_test(trajs, model: NoiseModel, dt_fine: float = None, bound: float = 1.0,
                u0=None, factor: float = 3.0) -> LinftyReport:
    """Largest (|u| - bound)^+ over samples, cells and snapshots against
    ``factor * g_max * sqrt(dt)``."""
    problems = []
    if not model.compact_support_flag:
        problems.append("the L-infinity check needs compactly supported noise")
    if u0 is not None and np.max(np.abs(u0.values)) > bound:
        problems.append(f"initial data must satisfy |u0| <= {bound}")
    if problems:
        raise ConfigurationError(problems)
    dt = trajs[0].dt if dt_fine is None else dt_fine
    return linfty_report([float(np.max(np.abs(t.field_values()))) for t in trajs], model, dt,
                         bound, factor)


def linfty_report(max_abs, model: NoiseModel, dt: float, bound: float = 1.0,
                  factor: float = 3.0) -> LinftyReport:
    """Same judgement from per-sample maxima of |u|."""
    exc = max(float(np.max(max_abs)) - bound, 0.0)
    return LinftyReport(exc, float(factor * model.g_max * np.sqrt(dt)))


# --- uniform bounds ------------------------------------------------------------------

def _bounded(values, ratio: float):
    v = np.asarray(values, float)
    if np.all(v == 0):
        return True, 1.0
    if np.any(v <= 0):
        return False, np.inf
    r = float(v.max() / v.min())
    return r <= ratio, r


@dataclass
class TightnessReport:
    totals: list
    total_se: list
    tail_radii: tuple
    tails: np.ndarray  # (n_res, n_radii)
    ratio: float
    tails_decreasing: bool
    max_ratio: float = 10.0

    @property
    def passed(self) -> bool:
        return self.ratio <= self.max_ratio and self.tails_decreasing


def tightness_stats(records_by_resolution, max_ratio: float = 10.0) -> TightnessReport:
    """records_by_resolution: list (per resolution) of lists of DissipationRecord."""
    totals, ses, tails = [], [], []
    radii = tuple(records_by_resolution[0][0].tail_radii)
    for recs in records_by_resolution:
        tot = np.array([r.total for r in recs])
        totals.append(float(tot.mean()))
        ses.append(float(tot.std(ddof=1) / np.sqrt(tot.size)) if tot.size > 1 else 0.0)
        if tuple(recs[0].tail_radii) != radii:
            raise ConfigurationError("all records must use the same tail radii")
        tails.append(np.mean([r.tail_mass for r in recs], axis=0) if radii else np.zeros(0))
    tails = np.array(tails)
    _, ratio = _bounded(totals, max_ratio)
    dec = bool(np.all(np.diff(tails, axis=1) <= 0)) if radii else True
    return TightnessReport(totals, ses, radii, tails, ratio, dec, max_ratio)


@dataclass
class MomentReport:
    p_list: tuple
    estimates: np.ndarray  # (n_res, n_p)
    ratios: np.ndarray
    max_ratio: float = 10.0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.ratios <= self.max_ratio))


def sup_moment(traj: Trajectory, p: float) -> float:
    """sup over snapshots of int int |xi|^p dnu dx."""
    if traj.kinetic:
        return max(moment_from_kinetic(traj.kinetic_state(i), p) for i in range(len(traj.times)))
    axes = _sp_axes(traj.grid)
    return float(np.max(np.sum(np.abs(traj.states) ** p, axis=axes) * traj.grid.cell_volume))


def moment_bound_check(trajs_by_resolution, p_list=(1, 2, 4), max_ratio: float = 10.0) -> MomentReport:
    est = np.array([[np.mean([sup_moment(t, p) for t in trajs]) for p in p_list]
                    for trajs in trajs_by_resolution])
    ratios = np.array([_bounded(est[:, j], max_ratio)[1] for j in range(len(p_list))])
    return MomentReport(tuple(p_list), est, ratios, max_ratio)
