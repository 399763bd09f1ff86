import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinscl import verify as V
from kinscl.errors import ConfigurationError
from kinscl.fields import Field, KineticFieldState
from kinscl.grid_noise import XiGrid, make_grid, make_noise_model, sample_wiener_path
from kinscl.kinetic import burgers, equilibrium_cell_average, zero_flux
from kinscl.kinetic import test_function_library as library
from kinscl.schemes import epsilon_parabolic, run_bgk, run_fv, run_parabolic

ZERO = make_noise_model(4, 1.0, scale=0.0)
NOISY = make_noise_model(4, 1.0, scale=0.5)
SINE = lambda x: 0.8 * np.sin(2 * np.pi * x)  # noqa: E731


def _paths(model, T, n, samples=(0,), seed=0):
    return [sample_wiener_path(model, T, T / n, seed, s) for s in samples]


def test_ensemble_stat():
    s = V.EnsembleStat.from_samples([1.0, 2.0, 3.0, 4.0])
    assert s.estimate == 2.5 and s.standard_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    with pytest.raises(ConfigurationError):
        V.EnsembleStat.from_samples([1.0])


# --- mass identity -------------------------------------------------------------------

def test_mass_zero_noise_energy_identity():
    g = make_grid(1, 256)
    p = _paths(ZERO, 0.5, 320)[0]
    tr = run_fv(g, burgers(), ZERO, p, Field.from_function(g, SINE), 0.4)
    e = 0.5 * g.h * (np.sum(tr.states[0] ** 2) - np.sum(tr.states[-1] ** 2))
    assert V.mass_balance(tr, ZERO, p) == pytest.approx(e, abs=1e-14)
    assert abs(V.mass_balance(tr, ZERO, p) - tr.dissipation.total) <= 1e-10


def test_mass_constant_state_zero():
    g = make_grid(1, 32)
    p = _paths(ZERO, 0.1, 10)[0]
    tr = run_fv(g, zero_flux(), ZERO, p, Field.constant(g, 0.4), 0.4)
    assert V.mass_balance(tr, ZERO, p) == 0.0


def test_mass_burgers_shock_baseline():
    g = make_grid(1, 1024)
    p = _paths(ZERO, 0.5, 1280)[0]
    tr = run_fv(g, burgers(), ZERO, p, Field.from_function(g, lambda x: np.sin(2 * np.pi * x)),
                0.4, snapshot_times=[0.5])
    m = V.mass_balance(tr, ZERO, p)
    assert m > 0
    assert m == pytest.approx(0.15703801769014905, rel=1e-9)  # first oracle run


def test_mass_with_noise_diagnostics_match_recomputation():
    g = make_grid(1, 64)
    p = _paths(NOISY, 0.2, 80, seed=4)[0]
    sparse = run_fv(g, burgers((-1.5, 1.5)), NOISY, p, Field.from_function(g, SINE), 0.4)
    dense = run_fv(g, burgers((-1.5, 1.5)), NOISY, p, Field.from_function(g, SINE), 0.4, every_step=True)
    a, b = V.mass_balance(sparse, NOISY, p), V.mass_balance(dense, NOISY, p)
    assert a == pytest.approx(b, abs=1e-13)
    assert a >= -1e-8


# --- kinetic residual ---------------------------------------------------------------

@pytest.mark.parametrize("phi", library(1))
def test_residual_vanishes_for_constant_state(phi):
    g = make_grid(1, 32)
    p = _paths(ZERO, 0.1, 20)[0]
    tr = run_fv(g, burgers(), ZERO, p, Field.constant(g, 0.3), 0.4, every_step=True, record_full=True)
    assert np.max(np.abs(V.kinetic_residual(tr, burgers(), ZERO, p, phi))) <= 1e-13


def _parabolic_gap(N, phi, model=ZERO, sample=0):
    g = make_grid(1, N)
    T, eta = 0.25, 0.05
    n = int(np.ceil(T * N * 1.5 / 0.4))  # interval (-1.5, 1.5) gives L = 1.5
    fl = burgers((-1.5, 1.5))
    p = _paths(model, T, n, (sample,))[0]
    u0 = Field.from_function(g, lambda x: 0.6 * np.sin(2 * np.pi * x) + 0.3 * np.cos(4 * np.pi * x) + 0.1)
    tr = run_parabolic(g, fl, model, p, u0, eta, 0.4, every_step=True)
    r = V.kinetic_residual(tr, fl, model, p, phi) - epsilon_parabolic(tr, phi, eta)
    return float(np.max(np.abs(r)))


@pytest.mark.parametrize("j", [0, 1, 2])
def test_parabolic_gap_shrinks_with_resolution(j):
    phi = library(1)[j]
    a, b = _parabolic_gap(128, phi), _parabolic_gap(256, phi)
    assert a / b >= 1.5


def test_bgk_residual_is_first_order_without_noise():
    xg = XiGrid(2.0, 64)
    res = []
    for N in (64, 128):
        g = make_grid(1, N)
        p = _paths(ZERO, 0.2, int(np.ceil(0.2 * N * 2.0 / 0.9)))[0]
        f0 = KineticFieldState(g, xg, equilibrium_cell_average(0.5 * np.sin(2 * np.pi * g.centers()), xg))
        tr = run_bgk(g, xg, burgers((-2, 2)), ZERO, p, f0, 0.05, every_step=True, record_full=True)
        res.append([np.max(np.abs(V.kinetic_residual(tr, burgers((-2, 2)), ZERO, p, phi))) for phi in library(1)])
    res = np.array(res)
    assert res[0, 0] <= 1e-14 and res[1, 0] <= 1e-14  # x-independent flux part of phi1 cancels
    assert np.all(res[0, 1:] / res[1, 1:] >= 1.8)


def test_residual_parts_sum():
    g = make_grid(1, 32)
    p = _paths(NOISY, 0.1, 20, seed=2)[0]
    tr = run_fv(g, burgers((-1.5, 1.5)), NOISY, p, Field.from_function(g, SINE), 0.4,
                every_step=True, record_full=True)
    parts = V.residual_parts(tr, burgers((-1.5, 1.5)), NOISY, p, library(1)[1])
    total = parts.pairing - parts.pairing[0] - parts.transport - parts.martingale - parts.ito + parts.measure
    assert np.allclose(parts.residual, total, atol=1e-15)
    assert parts.h.shape == (21, 4)


def test_residual_needs_every_step():
    g = make_grid(1, 32)
    p = _paths(ZERO, 0.1, 20)[0]
    tr = run_fv(g, burgers(), ZERO, p, Field.constant(g, 0.3), 0.4)
    with pytest.raises(ConfigurationError):
        V.kinetic_residual(tr, burgers(), ZERO, p, library(1)[0])


# --- martingale statistics ------------------------------------------------------------

def _flat_inputs(S, T=11):
    t = np.linspace(0, 1, T)
    z = np.zeros((S, T))
    return t, z


def test_zero_process_passes_with_zero_statistics():
    t, z = _flat_inputs(120)
    rep = V.martingale_test(t, z, np.zeros((120, 11, 1)), np.ones((120, 1, 11)), h=np.zeros((120, 11, 1)))
    assert rep.passed and rep.max_statistic() == 0.0


def test_constant_nonzero_increment_is_inconclusive():
    t, _ = _flat_inputs(120)
    M = np.tile(t, (120, 1))  # identical in every sample: zero spread, nonzero mean
    rep = V.martingale_test(t, M, np.zeros((120, 11, 1)), np.ones((120, 1, 11)), h=np.zeros((120, 11, 1)),
                            pairs=[(0, 5)])
    assert not rep.passed
    assert {e.status for e in rep.by_identity("M")} == {"inconclusive"}


def test_brownian_positive_control_passes():
    ctl = V.brownian_control(1000, np.linspace(0, 1, 11), seed=0)
    assert ctl.test(pairs=[(0, 5), (5, 10)]).passed


def test_drift_negative_control_fails():
    ctl = V.drift_control(1000, np.linspace(0, 1, 11), seed=0)
    rep = ctl.test(pairs=[(0, 5), (5, 10)])
    assert not rep.passed and rep.max_statistic("M") > 3.0


def test_martingale_min_samples():
    t, z = _flat_inputs(10)
    with pytest.raises(ConfigurationError):
        V.martingale_test(t, z, np.zeros((10, 11, 1)), np.ones((10, 1, 11)), h=np.zeros((10, 11, 1)))


@given(st.integers(1, 9), st.integers(0, 2 ** 16))
def test_past_functionals_are_adapted(i, seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(3, 2, 11))
    t = np.linspace(0, 1, 11)
    Q = P.copy()
    Q[..., i + 1:] = rng.normal(size=Q[..., i + 1:].shape)
    a, b = V.past_functionals(P, t), V.past_functionals(Q, t)
    assert np.array_equal(a[..., :i + 1], b[..., :i + 1])
    assert np.all((a >= 0) & (a <= 1))


def test_martingale_inputs_shapes_and_concat():
    g = make_grid(1, 32)
    fl = burgers((-1.5, 1.5))
    ps = _paths(NOISY, 0.1, 20, samples=range(4), seed=1)
    trs = run_fv(g, fl, NOISY, ps, Field.from_function(g, SINE), 0.4, every_step=True, record_full=True)
    lib = library(1)
    ins = V.martingale_inputs(trs, fl, NOISY, ps, lib, lib[:1], every=5)
    assert len(ins) == 3
    mi = ins[0]
    assert mi.M.shape == (4, 5) and mi.beta.shape == (4, 5, 4) and mi.H.shape == (4, 2, 5)
    assert np.all(mi.M[:, 0] == 0.0)
    both = V.MartingaleInputs.concat([mi, mi])
    assert both.M.shape == (8, 5)


# --- contraction, comparison, L-infinity --------------------------------------------

def _runner(model, flux=burgers((-1.5, 1.5))):
    def run(u0, paths):
        return run_fv(u0.grid, flux, model, paths, u0, 0.4, snapshot_times=[0.05, 0.1])
    return run


def test_identical_data_contract_exactly():
    g = make_grid(1, 64)
    u0 = Field.from_function(g, SINE)
    rep = V.contraction_test(u0, u0, _runner(NOISY), _paths(NOISY, 0.1, 40, range(5)))
    assert np.all(rep.estimates() == 0.0) and rep.passed


def test_ordered_data_stay_ordered():
    g = make_grid(1, 64)
    lo = Field.from_function(g, SINE)
    hi = Field(g, lo.values + 0.1 * (g.centers() < 0.5))
    rep = V.contraction_test(lo, hi, _runner(NOISY), _paths(NOISY, 0.1, 40, range(20)))
    est = rep.estimates()
    se = np.array([s.standard_error for s in rep.series])
    assert est[0] == 0.0 and np.all(est <= 2 * se + 1e-15)


def test_contraction_report_flags_growth():
    vals = np.array([[0.1, 0.2, 0.3], [0.1, 0.21, 0.32], [0.1, 0.19, 0.29]])
    assert not V.contraction_report(vals, [0, 1, 2]).passed
    assert V.contraction_report(vals[:, ::-1], [0, 1, 2]).monotone_ok


def test_linfty_zero_noise_exact():
    g = make_grid(1, 64)
    trs = _runner(ZERO)(Field.from_function(g, SINE), _paths(ZERO, 0.1, 40, range(2)))
    assert V.linfty_test(trs, ZERO).exceedance == 0.0


def test_linfty_fixed_point_at_one():
    g = make_grid(1, 64)
    u0 = Field.constant(g, 1.0)
    trs = _runner(NOISY)(u0, _paths(NOISY, 0.1, 40, range(3)))
    rep = V.linfty_test(trs, NOISY, u0=u0)
    assert rep.exceedance == 0.0 and rep.passed


def test_linfty_preconditions():
    g = make_grid(1, 16)
    lin = make_noise_model(2, 1.0, "linear_growth")
    with pytest.raises(ConfigurationError):
        V.linfty_test([], lin)
    with pytest.raises(ConfigurationError):
        V.linfty_test([], NOISY, u0=Field.constant(g, 1.5))


# --- uniform bounds --------------------------------------------------------------------

def test_tightness_zero_for_constant_data():
    recs = []
    for N in (32, 64):
        g = make_grid(1, N)
        trs = run_fv(g, burgers(), ZERO, _paths(ZERO, 0.1, N // 2, range(2)), Field.constant(g, 0.2),
                     0.4, tail_radii=(0.5, 1.0))
        recs.append([t.dissipation for t in trs])
    rep = V.tightness_stats(recs)
    assert rep.totals == [0.0, 0.0] and np.all(rep.tails == 0.0) and rep.passed


def test_tails_vanish_beyond_invariant_region():
    g = make_grid(1, 128)
    trs = run_fv(g, burgers(), ZERO, _paths(ZERO, 0.5, 160, range(2)), Field.from_function(g, SINE),
                 0.4, tail_radii=(0.5, 0.9, 1.0))
    tails = np.array([t.dissipation.tail_mass for t in trs])
    assert np.all(tails[:, 2] == 0.0) and np.all(tails[:, 0] > 0)
    assert np.all(np.diff(tails, axis=1) <= 0)


def test_sup_moment_of_constant():
    g = make_grid(1, 16)
    tr = run_fv(g, burgers(), ZERO, _paths(ZERO, 0.1, 10)[0], Field.constant(g, -0.6), 0.4)
    for p in (1, 2, 4):
        assert V.sup_moment(tr, p) == pytest.approx(0.6 ** p, rel=1e-14)


def test_moment_check_over_resolutions():
    by_res = []
    for N in (32, 64, 128):
        g = make_grid(1, N)
        by_res.append(run_fv(g, burgers((-1.5, 1.5)), NOISY, _paths(NOISY, 0.1, N, range(3)),
                             Field.from_function(g, SINE), 0.4))
    rep = V.moment_bound_check(by_res, (1, 2, 4))
    assert rep.passed
    # p = 1 with |u0| <= 1 and compact noise stays below 1 + the L-infinity allowance
    assert np.all(rep.estimates[:, 0] <= 1.0 + 3 * NOISY.g_max * np.sqrt(0.1 / 32))


def test_contraction_start_robust_to_summation_rounding():
    # a column mean over axis 0 of a 2-d array rounds differently from the 1-d mean
    vals = np.column_stack([np.full(75, 0.04999999999999999), np.full(75, 0.03)])
    assert V.contraction_report(vals, [0.0, 1.0]).passed
