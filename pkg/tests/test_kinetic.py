import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinscl.errors import ConfigurationError, InvariantViolation
from kinscl.fields import Field, KineticFieldState
from kinscl.grid_noise import XiGrid, make_grid
from kinscl.kinetic import (DiscreteYoungMeasure, FluxSpec, TestFunction, barycenter, burgers,
                            check_equilibrium_convergence, chi, distance_profile,
                            distance_to_equilibrium, equilibrium_cell_average, kinetic_barycenter,
                            kinetic_from_young, kinetic_function, linear_advection, moment,
                            moment_from_kinetic, pair, pair_equilibrium, polynomial_flux,
                            young_from_kinetic, zero_flux)
from kinscl.kinetic import test_function_library as library

# centres at +-1 and an edge at 0
XG_UNIT = XiGrid(1.6, 8)


# --- flux ----------------------------------------------------------------------------

def test_flux_lipschitz():
    assert burgers().lipschitz() == pytest.approx(1.0)
    assert polynomial_flux([0, 0, 0, 1], (-1.0, 2.0)).lipschitz() == pytest.approx(12.0)
    assert linear_advection(-0.7).lipschitz() == pytest.approx(0.7)
    assert zero_flux().is_zero


def test_flux_validation_and_variants():
    with pytest.raises(ConfigurationError):
        FluxSpec("x", (1.0,), (1.0, 0.0))
    with pytest.raises(ConfigurationError):
        burgers(numerical="roe")
    f = burgers(numerical="lax_friedrichs").with_interval(-2, 2)
    assert f.numerical == "lax_friedrichs" and f.interval == (-2, 2)
    assert f.with_numerical("engquist_osher").numerical == "engquist_osher"


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=4), st.floats(-1.5, 1.5))
def test_flux_derivative_consistent(coeffs, u):
    f = polynomial_flux(coeffs, (-2.0, 2.0))
    eps = 1e-6
    fd = (f.A(u + eps) - f.A(u - eps)) / (2 * eps)
    assert f.a(u) == pytest.approx(fd, abs=1e-6)
    assert abs(f.a(u)) <= f.lipschitz() + 1e-12


# --- test functions ------------------------------------------------------------------------

@pytest.mark.parametrize("phi", library(1))
def test_theta_derivatives_match_differences(phi):
    x = np.linspace(0.01, 0.99, 37)
    e = 1e-5
    fd1 = (phi.theta(x + e) - phi.theta(x - e)) / (2 * e)
    fd2 = (phi.theta(x + e) - 2 * phi.theta(x) + phi.theta(x - e)) / e ** 2
    assert np.allclose(phi.grad_theta(x), fd1, atol=1e-7)
    assert np.allclose(phi.lap_theta(x), fd2, atol=1e-3)


@pytest.mark.parametrize("phi", library(1))
def test_psi_primitives_match_quadrature(phi):
    lo, _ = phi.support
    for u in (-2.0, -0.4, 0.1, 0.9, 3.0):
        z = np.linspace(lo - 0.5, u, 200001)
        ref = np.trapezoid(phi.psi(z), z) if u > lo - 0.5 else 0.0
        assert phi.xi_primitive(u) == pytest.approx(ref, abs=1e-8)
        ref_d = np.trapezoid(phi.dpsi(z), z) if u > lo - 0.5 else 0.0
        assert phi.dpsi_primitive(u) == pytest.approx(ref_d, abs=1e-7)


def test_2d_library_shapes():
    g = make_grid(2, 8)
    for phi in library(2):
        assert phi.theta(g.centers()).shape == (8, 8)
        assert phi.grad_theta(g.centers()).shape == (8, 8, 2)
        assert phi.lap_theta(g.centers()).shape == (8, 8)


def test_support_check():
    phi = TestFunction(((1.0, "cos", 1),), center=0.0, radius=1.5)
    phi.check_support(XiGrid(2.0, 16))
    with pytest.raises(ConfigurationError):
        phi.check_support(XiGrid(1.5, 16))


# --- kinetic functions -----------------------------------------------------------------

def test_kinetic_function_of_zero():
    g = make_grid(1, 4)
    xg = XiGrid(1.0, 8)
    f = kinetic_function(Field.constant(g, 0.0), xg)
    assert np.array_equal(f.values[0], (xg.centers < 0).astype(float))
    assert np.all(chi(f) == 0.0)


@given(st.floats(-1.9, 1.9))
def test_equilibrium_barycenter_is_exact(c):
    xg = XiGrid(2.0, 40)
    f = equilibrium_cell_average(np.array([c]), xg)
    u = np.sum(f - (xg.centers < 0), axis=-1) * xg.dxi
    assert u[0] == pytest.approx(c, abs=1e-13)
    assert np.all(np.diff(f[0]) <= 0)


def test_equilibrium_chi_for_positive_state():
    g = make_grid(1, 2)
    xg = XiGrid(2.0, 16)
    f = kinetic_function(Field.constant(g, 0.75), xg)
    ch = chi(f)[0]
    assert np.array_equal(ch, ((xg.centers > 0) & (xg.centers < 0.75)).astype(float))
    assert kinetic_barycenter(f).values[0] == pytest.approx(0.75, abs=xg.dxi)


def test_two_valued_state_mean_at_zero():
    g = make_grid(1, 8)
    xg = XiGrid(1.0, 8)
    u = Field(g, np.where(np.arange(8) % 2 == 0, 0.5, -0.5))
    f = kinetic_function(u, xg)
    j = int(np.searchsorted(xg.centers, 0.0)) - 1  # last centre below 0
    assert f.values[:, j].mean() == pytest.approx(0.5)


def test_mixture_chi_by_hand():
    g = make_grid(1, 3)
    nu = DiscreteYoungMeasure.mixture([(0.5, DiscreteYoungMeasure.dirac(g, XG_UNIT, -1.0)),
                                       (0.5, DiscreteYoungMeasure.dirac(g, XG_UNIT, 1.0))])
    ch = chi(kinetic_from_young(nu))[0]
    xc = XG_UNIT.centers
    inner = (np.abs(xc) < 1.0)
    assert np.allclose(ch[inner], np.where(xc[inner] < 0, -0.5, 0.5))
    assert np.sum(ch) * XG_UNIT.dxi == pytest.approx(0.0, abs=1e-15)


def test_young_roundtrip_constant():
    g = make_grid(1, 4)
    xg = XiGrid(2.0, 32)
    for c in (-0.8, 0.0, 0.33):
        nu = young_from_kinetic(kinetic_function(Field.constant(g, c), xg))
        assert np.allclose(barycenter(nu).values, c, atol=xg.dxi)


def test_invalid_kinetic_states():
    g = make_grid(1, 2)
    xg = XiGrid(1.0, 8)
    with pytest.raises(ConfigurationError):
        KineticFieldState(g, xg, np.zeros((3, 8)))
    bad = np.tile(np.linspace(0, 1, 8), (2, 1))
    with pytest.raises(InvariantViolation):
        KineticFieldState(g, xg, bad).check()


# --- pairings and moments ---------------------------------------------------------------

def test_pairing_zero_state():
    g = make_grid(1, 4)
    xg = XiGrid(2.0, 16)
    f = KineticFieldState(g, xg, np.zeros((4, 16)))
    assert pair(f, library(1)[0]) == 0.0


def test_pairing_mean_free_psi_on_flat_f():
    g = make_grid(1, 16)
    xg = XiGrid(2.0, 400)
    phi = TestFunction(((1.0, "const", 0),), center=0.0, radius=1.0, weight=(0.0, 1.0))  # odd psi
    f = KineticFieldState(g, xg, np.full((16, 400), 0.3))
    assert pair(f, phi) == pytest.approx(0.0, abs=1e-12)


def test_pairing_against_equilibrium_oracle():
    g = make_grid(1, 64)
    xg = XiGrid(2.0, 800)
    phi = TestFunction(((1.0, "const", 0), (0.4, "cos", 1)), center=0.1, radius=1.2)
    f = KineticFieldState(g, xg, np.broadcast_to(equilibrium_cell_average(np.array(0.5), xg), (64, 800)))
    z = np.linspace(-2.0, 0.5, 250001)
    ref = 1.0 * np.trapezoid(phi.psi(z), z)  # int theta = 1
    assert pair(f, phi) == pytest.approx(ref, abs=1e-5)
    assert pair_equilibrium(np.full(64, 0.5), g, phi) == pytest.approx(ref, abs=1e-8)


def test_moments():
    g = make_grid(1, 3)
    c = np.array([-0.6, 0.2, 1.0])
    xg = XiGrid(1.6, 8)
    nu = DiscreteYoungMeasure.dirac(g, xg, c)
    for p in (1, 2, 3):
        # linear split between centres: exact only for p = 1, else within dxi p |c|^{p-1}
        assert moment(nu, p) == pytest.approx(np.mean(np.abs(c) ** p),
                                              abs=xg.dxi * p * np.max(np.abs(c)) ** (p - 1))
    sym = DiscreteYoungMeasure.mixture([(0.5, DiscreteYoungMeasure.dirac(g, XG_UNIT, -1.0)),
                                        (0.5, DiscreteYoungMeasure.dirac(g, XG_UNIT, 1.0))])
    assert moment(sym, 2) == pytest.approx(1.0, abs=1e-15)


def test_moment_random_measure_brute_force():
    g = make_grid(1, 5)
    xg = XiGrid(1.0, 8)
    rng = np.random.default_rng(3)
    w = rng.random((5, 8))
    w /= w.sum(axis=1, keepdims=True)
    nu = DiscreteYoungMeasure(g, xg, w)
    brute = sum(w[i, j] * abs(xg.centers[j]) ** 3 for i in range(5) for j in range(8)) / 5
    assert moment(nu, 3) == pytest.approx(brute, rel=1e-14)


def test_moment_from_kinetic_of_constant():
    g = make_grid(1, 2)
    xg = XiGrid(2.0, 64)
    for c in (0.5, -1.25):
        f = KineticFieldState(g, xg, np.broadcast_to(equilibrium_cell_average(np.array(c), xg), (2, 64)))
        assert moment_from_kinetic(f, 1) == pytest.approx(abs(c), abs=1e-14)
        assert moment_from_kinetic(f, 2) == pytest.approx(c * c, abs=xg.dxi ** 2)


def test_barycenters():
    g = make_grid(1, 2)
    assert np.allclose(barycenter(DiscreteYoungMeasure.dirac(g, XG_UNIT, 0.3)).values, 0.3)
    uni = DiscreteYoungMeasure(g, XG_UNIT, np.full((2, 8), 1 / 8))
    assert np.allclose(barycenter(uni).values, 0.0, atol=1e-12)


# --- distance to equilibrium -----------------------------------------------------------

def test_distance_at_equilibrium_is_zero():
    g = make_grid(1, 4)
    xg = XiGrid(2.0, 32)
    f = KineticFieldState(g, xg, equilibrium_cell_average(np.array([-0.7, 0.0, 0.2, 1.3]), xg))
    d = distance_to_equilibrium(f)
    assert d.mass == pytest.approx(0.0, abs=1e-15) and d.kinetic_ok


def test_distance_of_symmetric_mixture():
    xg = XiGrid(1.6, 64)
    f = np.where(xg.centers < -1, 1.0, np.where(xg.centers < 1, 0.5, 0.0))[None]
    prof = distance_profile(f, xg)[0]
    assert prof.max() == pytest.approx(0.5, abs=xg.dxi)
    assert prof[31] == pytest.approx(0.5, abs=xg.dxi)  # right edge of the cell ending at 0
    assert prof[-1] == pytest.approx(0.0, abs=xg.dxi)
    assert np.all(prof >= -1e-14)


@given(st.lists(st.floats(0, 1), min_size=6, max_size=6))
def test_distance_nonnegative_for_values_in_unit_interval(mid):
    # for f in [0, 1] the profile is >= 0 whatever its xi-monotonicity
    xg = XiGrid(1.0, 8)
    f = np.array([[1.0] + mid + [0.0]])
    assert distance_profile(f, xg).min() >= -1e-14


def test_distance_flags_values_outside_unit_interval():
    g = make_grid(1, 2)
    xg = XiGrid(1.0, 8)
    f = np.array([[1, 1, 1, 1, -0.5, 0, 0, 0]] * 2, float)
    assert not distance_to_equilibrium(KineticFieldState(g, xg, f)).kinetic_ok


def test_equilibrium_convergence_helpers():
    g = make_grid(1, 4)
    xg = XiGrid(2.0, 64)
    u = Field.constant(g, 0.3)
    same = [DiscreteYoungMeasure.dirac(g, xg, 0.3)] * 3
    r = check_equilibrium_convergence(same, u)
    assert r.errors == [pytest.approx(0.0, abs=1e-15)] * 3
    spread = [DiscreteYoungMeasure.mixture([(0.5, DiscreteYoungMeasure.dirac(g, xg, 0.3 - 1 / n)),
                                            (0.5, DiscreteYoungMeasure.dirac(g, xg, 0.3 + 1 / n))])
              for n in (2, 4, 8)]
    # barycenters are exact, so measure spreading is invisible to this check
    assert max(check_equilibrium_convergence(spread, u).errors) < 1e-14
