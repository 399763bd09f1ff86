"""Subcommand pipelines: configuration -> runs -> checks -> output files.

Workers receive the configuration text and a chunk of sample indices and
return per-sample reductions, so ensembles of any size stay within memory and
results do not depend on how chunks are spread over processes.
"""
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, initial_function, parse_config, serialize
from .converge import ConvergenceStudy, lp_errors, rate_fit, time_slice_convergence, coupled_run
from .ensemble import map_chunks
from .errors import ConfigurationError
from .fields import Field, KineticFieldState
from .grid_noise import (XiGrid, aggregate_increments, make_grid, make_noise_model,
                         noise_lattice, sample_wiener_path, verify_noise_bounds)
from .io import csv_text, field_csv, grids_sidecar, matrix_csv, to_json
from .kinetic import (FluxSpec, equilibrium_cell_average, test_function_library, burgers,
                      linear_advection, polynomial_flux)
from .schemes import burgers_box_cell_averages, epsilon_parabolic, run_bgk, run_fv, run_parabolic
from . import verify as V


# --- setup -------------------------------------------------------------------------

@dataclass
class Setup:
    cfg: RunConfig
    grid: object
    flux: FluxSpec
    model: object
    xigrid: XiGrid
    u0: Field
    dt: float
    n_steps: int
    times: np.ndarray


def build_flux(cfg: RunConfig) -> FluxSpec:
    fl = cfg.section("flux")
    iv = tuple(fl["interval"])
    kind = fl["kind"]
    if kind == "burgers":
        return burgers(iv, fl["numerical"])
    if kind == "linear":
        return linear_advection(fl["c"], iv, fl["numerical"])
    if kind == "polynomial":
        return polynomial_flux(fl["coefficients"], iv, fl["numerical"])
    return FluxSpec("zero", (0.0,), iv, fl["numerical"])


def build_model(cfg: RunConfig):
    nz = cfg.section("noise")
    return make_noise_model(nz["K"], nz["decay"], nz["mode"], scale=nz["scale"],
                            dim=cfg.get("grid", "dim"), u_max=nz["u_max"])


def _steps_for_times(n_min: int, T: float, times) -> int:
    for n in range(max(n_min, 1), max(n_min, 1) * 1000 + 1):
        k = np.asarray(times) * n / T
        if np.all(np.abs(k - np.round(k)) < 1e-9):
            return n
    raise ConfigurationError("snapshot_times cannot all be placed on a common step grid")


def build(cfg: RunConfig, cells: int = None, shift=(0.0, 0.0)) -> Setup:
    """Grid, flux, noise, initial field and time step; ``shift`` adds constants
    on [0, 1/2) and [1/2, 1) in the first coordinate."""
    run = cfg.section("run")
    dim = cfg.get("grid", "dim")
    grid = make_grid(dim, cells or cfg.get("grid", "cells"))
    flux = build_flux(cfg)
    model = build_model(cfg)
    xi = cfg.section("xi")
    xigrid = XiGrid(xi["R"], xi["M"])
    T, cfl = run["T"], run["cfl"]
    if run["scheme"] == "bgk":
        speed = float(np.max(np.abs(flux.a(xigrid.centers))))
    else:
        speed = flux.lipschitz()
    times = run["snapshot_times"]
    if not times:
        k = run["n_snapshots"]
        times = [T * j / k for j in range(1, k + 1)]
    times = np.asarray(times, float)
    if run["dt"] is not None:
        dt = run["dt"]
        if speed * dt > cfl * grid.h * (1 + 1e-12):
            raise ConfigurationError(
                f"CFL violated: dt * speed / h = {speed * dt / grid.h:.6g} exceeds cfl = {cfl}")
        n = int(round(T / dt))
        if abs(n * dt - T) > 1e-9 * T:
            raise ConfigurationError(f"T={T} is not an integer multiple of dt={dt}")
        k = times / dt
        if np.any(np.abs(k - np.round(k)) > 1e-9):
            raise ConfigurationError("snapshot_times must be multiples of dt")
    else:
        ref = speed if speed > 0 else 1.0
        n_min = int(np.ceil(T * ref / (cfl * grid.h) - 1e-9))
        if not run["snapshot_times"]:
            k = run["n_snapshots"]
            n = max(int(np.ceil(n_min / k)), 1) * k
        else:
            n = _steps_for_times(n_min, T, times)
        dt = T / n
    ini = cfg.section("initial")
    fn = initial_function(ini)
    if any(shift):
        base = fn
        fn = (lambda x, *y: base(x, *y) + np.where(x < 0.5, shift[0], shift[1]))
    u0 = Field.from_function(grid, fn, n_sub=1 if ini["kind"] == "box" else 8)
    return Setup(cfg, grid, flux, model, xigrid, u0, float(dt), int(n), times)


def run_setup(s: Setup, paths, every_step=False, record_full=False, tail_radii=()):
    cfg = s.cfg
    run = cfg.section("run")
    tol = cfg.section("tolerances")
    times = None if every_step else s.times
    if run["scheme"] == "fv":
        return run_fv(s.grid, s.flux, s.model, paths, s.u0, run["cfl"], snapshot_times=times,
                      every_step=every_step, record_full=record_full, tail_radii=tail_radii,
                      tol_m=tol["tol_m"])
    if run["scheme"] == "parabolic":
        return run_parabolic(s.grid, s.flux, s.model, paths, s.u0, run["eta"], run["cfl"],
                             snapshot_times=times, every_step=every_step,
                             record_full=record_full, tail_radii=tail_radii, tol_m=tol["tol_m"])
    f0 = equilibrium_cell_average(s.u0.values, s.xigrid)
    return run_bgk(s.grid, s.xigrid, s.flux, s.model, paths, KineticFieldState(s.grid, s.xigrid, f0),
                   run["eta"], snapshot_times=times, every_step=every_step,
                   record_full=record_full, tail_radii=tail_radii, tol_f=tol["tol_f"],
                   tol_m=tol["tol_m"])


def _paths(s: Setup, samples):
    seed = s.cfg.get("run", "seed")
    return [sample_wiener_path(s.model, s.cfg.get("run", "T"), s.dt, seed, k) for k in samples]


def _snap_index(traj, times):
    return [int(np.flatnonzero(np.isclose(traj.times, t, rtol=0, atol=1e-12))[0]) for t in times]


def _result(name, passed, threshold=None, estimate=None, standard_error=None,
            provenance="identity", **details) -> dict:
    d = {"name": name, "passed": bool(passed), "threshold": threshold, "estimate": estimate,
         "standard_error": standard_error, "provenance": provenance}
    if details:
        d["details"] = details
    return d


# --- run ------------------------------------------------------------------------------

def _run_worker(text, chunk):
    s = build(parse_config(text))
    trajs = run_setup(s, _paths(s, chunk))
    out = []
    for k, tr in zip(chunk, trajs):
        idx = [0] + _snap_index(tr, s.times)
        out.append({"sample": k, "times": tr.times[idx], "fields": tr.field_values()[idx],
                    "kinetic": tr.states[idx] if tr.kinetic else None,
                    "dissipation": tr.dissipation.total,
                    "diagnostics": {kk: float(np.max(v)) if np.ndim(v) else float(v)
                                    for kk, v in tr.diagnostics.items()}})
    return out


def run_pipeline(cfg: RunConfig, jobs=None):
    text = serialize(cfg)
    s = build(cfg)
    samples = range(cfg.get("run", "n_samples"))
    rows = [r for part in map_chunks(_run_worker, text, samples, jobs) for r in part]
    files = {}
    summary = []
    for r in rows:
        for i, (t, u) in enumerate(zip(r["times"], r["fields"])):
            files[f"sample_{r['sample']:04d}/snapshot_{i:03d}.csv"] = field_csv(s.grid, u)
            if r["kinetic"] is not None:
                files[f"sample_{r['sample']:04d}/kinetic_{i:03d}.csv"] = matrix_csv(
                    s.grid, s.xigrid, r["kinetic"][i])
        summary.append({"sample": r["sample"], "times": r["times"], "dissipation_total": r["dissipation"],
                        "mass": [float(np.sum(u) * s.grid.cell_volume) for u in r["fields"]],
                        "diagnostics": r["diagnostics"]})
    if rows and rows[0]["kinetic"] is not None:
        files["kinetic_grids.json"] = to_json(grids_sidecar(s.grid, s.xigrid, "kinetic density f")) + "\n"
    results = [_result("run", True, n_samples=len(rows), dt=s.dt, n_steps=s.n_steps,
                       scheme=cfg.get("run", "scheme"), samples=summary)]
    return files, results


# --- verify ---------------------------------------------------------------------------

def _verify_worker(payload, chunk):
    text, tests, cells = payload
    cfg = parse_config(text)
    ver, run = cfg.section("verify"), cfg.section("run")
    out = {}
    if cells is not None:  # resolution sweep for the uniform bounds
        s = build(cfg, cells)
        trajs = run_setup(s, _paths(s, chunk), tail_radii=tuple(ver["tail_radii"]))
        out["records"] = [tr.dissipation for tr in trajs]
        out["moments"] = [[V.sup_moment(tr, p) for p in ver["p_list"]] for tr in trajs]
        return out
    s = build(cfg)
    paths = _paths(s, chunk)
    dense = "residual" in tests or "martingale" in tests
    trajs = run_setup(s, paths, every_step=dense, record_full=dense and run["scheme"] != "parabolic")
    lib = test_function_library(s.grid.dim)
    eps = None
    if run["scheme"] == "parabolic":
        eps = (lambda tr, phi: epsilon_parabolic(tr, phi, run["eta"]))
    if "mass" in tests:
        out["mass"] = [V.mass_balance(tr, s.model, p) for tr, p in zip(trajs, paths)]
        out["record_total"] = [tr.dissipation.total for tr in trajs]
    if "residual" in tests:
        out["residual"] = [[float(np.max(np.abs(V.kinetic_residual(tr, s.flux, s.model, p, phi)
                                                - (eps(tr, phi) if eps else 0.0))))
                            for phi in lib] for tr, p in zip(trajs, paths)]
    if "martingale" in tests:
        every = max(s.n_steps // max(len(s.times), 1), 1)
        out["martingale"] = V.martingale_inputs(trajs, s.flux, s.model, paths, lib, lib[:1],
                                                every=every, epsilon=eps)
    if "linfty" in tests:
        out["linfty"] = [float(np.max(np.abs(tr.field_values()))) for tr in trajs]
    if "contraction" in tests:
        # unordered pair (bump on either half) and ordered pair (base below bump)
        d = ver["contraction_shift"]

        def snaps(sh):
            trs = trajs if not any(sh) else run_setup(build(cfg, shift=sh), paths)
            return np.array([tr.field_values()[[0] + _snap_index(tr, s.times)] for tr in trs])

        lower, left, right = snaps((0.0, 0.0)), snaps((d, 0.0)), snaps((0.0, d))
        vol, dim = s.grid.cell_volume, s.grid.dim
        out["contraction"] = (V.positive_part_l1(left, right, vol, dim),
                              V.positive_part_l1(lower, left, vol, dim))
    return out


def _merge(parts, key):
    vals = [p[key] for p in parts if key in p]
    if not vals:
        return None
    if isinstance(vals[0], tuple):
        return tuple(np.concatenate([v[i] for v in vals]) for i in range(len(vals[0])))
    if isinstance(vals[0], list) and vals[0] and isinstance(vals[0][0], V.MartingaleInputs):
        return [V.MartingaleInputs.concat([v[i] for v in vals]) for i in range(len(vals[0]))]
    return [x for v in vals for x in v]


def verify_pipeline(cfg: RunConfig, jobs=None):
    text = serialize(cfg)
    ver, run, tol = cfg.section("verify"), cfg.section("run"), cfg.section("tolerances")
    tests = tuple(ver["tests"])
    s = build(cfg)
    if "linfty" in tests and not s.model.compact_support_flag:
        raise ConfigurationError("the linfty test needs compact_support noise or scale 0")
    if "linfty" in tests and np.max(np.abs(s.u0.values)) > 1.0:
        raise ConfigurationError("the linfty test needs |u0| <= 1")
    if "mass" in tests and run["scheme"] == "bgk":
        raise ConfigurationError("the mass test applies to scalar schemes (fv, parabolic)")
    samples = range(run["n_samples"])
    parts = map_chunks(_verify_worker, (text, tests, None), samples, jobs)
    results, files = [], {}

    if "mass" in tests:
        m = np.array(_merge(parts, "mass"))
        if s.model.is_zero and run["scheme"] == "fv":
            rec = np.array(_merge(parts, "record_total"))
            dev = float(np.max(np.abs(m - rec)))
            results.append(_result("mass_vs_entropy_record", dev <= 1e-10, 1e-10, dev))
        frac = float(np.mean(m >= tol["mass_floor"]))
        results.append(_result("mass_nonnegative_fraction", frac >= tol["mass_fraction"],
                               tol["mass_fraction"], frac, min_mass=float(m.min())))
        files["mass.csv"] = csv_text(["sample", "m_total"], ((k, float(v)) for k, v in zip(samples, m)))
    if "residual" in tests:
        r = np.array(_merge(parts, "residual"))
        est = r.mean(axis=0)
        for j, e in enumerate(est):
            results.append(_result(f"residual_phi{j + 1}", e <= ver["residual_tol"],
                                   ver["residual_tol"], float(e), provenance="calibrated"))
    if "martingale" in tests:
        ins = _merge(parts, "martingale")
        nt = len(ins[0].times) - 1
        pairs = [(0, nt // 2), (nt // 2, nt)] if nt >= 2 else [(0, nt)]
        for j, mi in enumerate(ins):
            rep = mi.test(pairs=pairs)
            results.append(_result(f"martingale_phi{j + 1}", rep.passed, rep.threshold,
                                   rep.max_statistic(), n_tests=len(rep.entries)))
        ctl = V.drift_control(run["n_samples"], ins[0].times, run["seed"]).test(pairs=pairs)
        results.append(_result("martingale_negative_control", not ctl.passed, ctl.threshold,
                               ctl.max_statistic(), note="must fail"))
    if "linfty" in tests:
        rep = V.linfty_report(_merge(parts, "linfty"), s.model, s.dt, 1.0, tol["linfty_factor"])
        results.append(_result("linfty", rep.passed, rep.tolerance, rep.exceedance))
    if "contraction" in tests:
        ab, ba = _merge(parts, "contraction")
        t = np.concatenate([[0.0], s.times])
        for name, vals, ordered in (("contraction", ab, False), ("comparison", ba, True)):
            rep = V.contraction_report(vals, t)
            est = rep.estimates()
            se = np.array([x.standard_error for x in rep.series])
            ok = bool(np.all(est <= 2 * se)) if ordered else rep.passed
            results.append(_result(name, ok, 2.0, float(est[-1]), float(se[-1]),
                                   series=est, series_se=se))
            files[f"{name}.csv"] = csv_text(["t", "estimate", "standard_error"],
                                            zip(t.tolist(), est.tolist(), se.tolist()))
    if "tightness" in tests or "moments" in tests:
        ladder = cfg.get("converge", "ladder")
        recs, moms = [], []
        for n in ladder:
            ps = map_chunks(_verify_worker, (text, tests, n), samples, jobs)
            recs.append(_merge(ps, "records"))
            moms.append(np.array(_merge(ps, "moments")))
        if "tightness" in tests:
            tr = V.tightness_stats(recs, ver["max_ratio"])
            results.append(_result("tightness", tr.passed, ver["max_ratio"], tr.ratio,
                                   totals=tr.totals, tails=tr.tails, radii=list(tr.tail_radii),
                                   tails_decreasing=tr.tails_decreasing))
        if "moments" in tests:
            est = np.array([m.mean(axis=0) for m in moms])
            ratios = [V._bounded(est[:, j], ver["max_ratio"])[1] for j in range(est.shape[1])]
            ok = all(r <= ver["max_ratio"] for r in ratios)
            results.append(_result("moments", ok, ver["max_ratio"], float(max(ratios)),
                                   p_list=ver["p_list"], estimates=est))
    return files, results


# --- converge -------------------------------------------------------------------------

def _converge_worker(text, chunk):
    cfg = parse_config(text)
    run, cv = cfg.section("run"), cfg.section("converge")
    s = build(cfg)
    st = coupled_run(run["scheme"], s.grid.dim, cv["ladder"], s.flux, s.model,
                     initial_function(cfg.section("initial")), run["T"], run["cfl"],
                     run["seed"], chunk, times=s.times, eta=run["eta"],
                     n_times=len(s.times), p_list=cv["p"])
    return st


def _oracle_applicable(cfg, s):
    ini = cfg.section("initial")
    return (s.model.is_zero and s.flux.name == "burgers" and ini["kind"] == "box"
            and cfg.get("run", "scheme") == "fv" and s.grid.dim == 1
            and ini["inside"] >= ini["outside"]
            and cfg.get("run", "T") * (ini["inside"] - ini["outside"]) < 2 * (ini["hi"] - ini["lo"]))


def converge_pipeline(cfg: RunConfig, jobs=None):
    run, cv = cfg.section("run"), cfg.section("converge")
    if run["scheme"] not in ("fv", "parabolic"):
        raise ConfigurationError("converge supports schemes fv and parabolic")
    text = serialize(cfg)
    s = build(cfg)
    samples = list(range(run["n_samples"]))
    parts = map_chunks(_converge_worker, text, samples, jobs)
    st = ConvergenceStudy(parts[0].scheme, parts[0].ladder, parts[0].seed, tuple(samples),
                          parts[0].times, parts[0].dt,
                          {n: np.concatenate([p.fields[n] for p in parts]) for n in parts[0].ladder},
                          tuple(cv["p"]))
    rows, results = [], []
    h = np.array([1.0 / n for n in st.ladder])
    for p in cv["p"]:
        E = st.errors(p)
        for si, k in enumerate(samples):
            for ri, n in enumerate(st.ladder):
                for ti, t in enumerate(st.times):
                    rows.append((k, n, float(t), float(p), float(E[si, ri, ti])))
        rep = time_slice_convergence(st, p=p, allowed_inversions=cv["allowed_inversions"])
        results.append(_result(f"time_slice_p{p:g}", rep.pass_fraction >= cv["pass_fraction"],
                               cv["pass_fraction"], rep.pass_fraction, provenance="calibrated"))
        if _oracle_applicable(cfg, s):
            ref = "exact"
            errs = []
            for n in st.ladder:
                ex = burgers_box_cell_averages(n, run["T"], *(cfg.get("initial", k) for k in
                                                                 ("lo", "hi", "inside", "outside")))
                errs.append(float(np.mean(lp_errors(st.fields[n][:, -1], ex, p))))
            hv = h
        else:
            ref = "finest"
            errs = list(E[:, :-1, -1].mean(axis=0))
            hv = h[:-1]
        rate = None
        try:
            fit = rate_fit(errs, hv)
            rate = fit.rate
        except ConfigurationError:
            fit = None
        if cv["min_rate"] is not None:
            ok = rate is not None and rate >= cv["min_rate"]
            results.append(_result(f"rate_p{p:g}", ok, cv["min_rate"], rate, provenance="calibrated",
                                   reference=ref, errors=errs, h=list(hv)))
        else:
            results.append(_result(f"rate_p{p:g}", True, None, rate, reference=ref, errors=errs,
                                   h=list(hv), note="informational"))
    summary = {"ladder": list(st.ladder), "samples": len(samples), "reference":
               "exact" if _oracle_applicable(cfg, s) else "finest",
               "rates": {r["name"]: r["estimate"] for r in results if r["name"].startswith("rate")},
               "pass_fraction": {r["name"]: r["estimate"] for r in results
                                 if r["name"].startswith("time_slice")},
               "all_passed": all(r["passed"] for r in results)}
    files = {"errors.csv": csv_text(["sample", "resolution", "time", "p", "error"], rows),
             "summary.json": to_json(summary) + "\n"}
    return files, results


# --- noise ------------------------------------------------------------------------------

def _noise_worker(text, chunk):
    s = build(parse_config(text))
    out = []
    for p in _paths(s, chunk):
        coarse = aggregate_increments(p, 2) if p.n_steps % 2 == 0 else None
        tele = True if coarse is None else bool(
            np.array_equal(coarse.increments, p.increments[0::2] + p.increments[1::2]))
        out.append((p.sample, p.brownian(), p.variance_check(), tele))
    return out


def noise_pipeline(cfg: RunConfig, jobs=None):
    text = serialize(cfg)
    s = build(cfg)
    rows = [r for part in map_chunks(_noise_worker, text, range(cfg.get("run", "n_samples")), jobs)
            for r in part]
    files = {}
    t = np.arange(s.n_steps + 1) * s.dt
    for k, beta, _, _ in rows:
        files[f"brownian_{k:04d}.csv"] = csv_text(
            ["step", "t"] + [f"beta_{j + 1}" for j in range(beta.shape[1])],
            ((i, float(t[i]), *map(float, beta[i])) for i in range(len(t))))
    if s.grid.dim == 1:
        pts = noise_lattice(24, 2.0)
    else:
        rng = np.random.Generator(np.random.Philox(cfg.get("run", "seed")))
        n = 200_000
        pts = (rng.random((n, 2)), rng.uniform(-2, 2, n), rng.random((n, 2)), rng.uniform(-2, 2, n))
    b = verify_noise_bounds(s.model, *pts)
    results = [
        _result("noise_bounds", b.passed, None, b.d1_hat,
                **{k: v for k, v in b.as_dict().items() if k != "passed"}),
        _result("variance", all(r[2] for r in rows), 5.0, float(np.mean([r[2] for r in rows])),
                provenance="calibrated"),
        _result("coupling_telescoping", all(r[3] for r in rows)),
    ]
    return files, results


PIPELINES = {"run": run_pipeline, "verify": verify_pipeline, "converge": converge_pipeline,
             "noise": noise_pipeline}
