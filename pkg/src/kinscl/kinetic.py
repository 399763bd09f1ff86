"""Kinetic functions, Young measures, moments and distance to equilibrium.

Quadrature in xi is the midpoint rule on the ``XiGrid`` cells.  Fluxes and the
xi-part of test functions are polynomials, so every integral of the form
``int_{-inf}^{u} w(xi) psi(xi) dxi`` with polynomial ``w`` has a closed form;
the scalar schemes use these exact pairings, the kinetic states use midpoint
sums.
"""
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ConfigurationError, InvariantViolation
from .fields import Field, KineticFieldState
from .grid_noise import TorusGrid, XiGrid


# --- flux ---------------------------------------------------------------------

NUMERICAL_FLUXES = ("godunov", "engquist_osher", "lax_friedrichs")

@dataclass(frozen=True)
class FluxSpec:
    """Polynomial flux A(u) = sum c_j u^j (same scalar flux in every direction).

    ``interval`` is the state interval on which ``lipschitz`` certifies max|A'|;
    ``numerical`` picks the two-point flux used by the finite volume schemes.
    """

    name: str
    coefficients: tuple
    interval: tuple = (-1.0, 1.0)
    numerical: str = "godunov"

    def __post_init__(self):
        c = tuple(float(x) for x in self.coefficients) or (0.0,)
        object.__setattr__(self, "coefficients", c)
        lo, hi = self.interval
        if not lo <= hi:
            raise ConfigurationError(f"flux interval must satisfy lo <= hi, got {self.interval}")
        if self.numerical not in NUMERICAL_FLUXES:
            raise ConfigurationError(
                f"numerical flux must be one of {NUMERICAL_FLUXES}, got {self.numerical!r}")

    @property
    def A(self) -> Polynomial:
        return Polynomial(self.coefficients)

    @property
    def a(self) -> Polynomial:
        return self.A.deriv()

    @property
    def q(self) -> Polynomial:
        """Entropy flux of the square entropy: q(u) = int_0^u s a(s) ds."""
        return (Polynomial([0.0, 1.0]) * self.a).integ(lbnd=0.0)

    def critical_points(self) -> np.ndarray:
        """Sorted real roots of A' (where A changes monotonicity)."""
        a = self.a.trim()
        if a.degree() < 1:
            return np.zeros(0)
        r = a.roots()
        r = np.real(r[np.abs(np.imag(r)) < 1e-12])
        return np.unique(r)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coefficients[1:])

    def lipschitz(self, lo: float = None, hi: float = None) -> float:
        """max |A'| on [lo, hi] (default: the certificate interval)."""
        if lo is None:
            lo, hi = self.interval
        a = self.a
        pts = [lo, hi]
        da = a.deriv().trim()
        if da.degree() >= 1:
            r = da.roots()
            pts += [float(np.real(z)) for z in r if abs(np.imag(z)) < 1e-12 and lo < np.real(z) < hi]
        return float(np.max(np.abs(a(np.array(pts)))))

    def spot_check(self, n: int = 1001) -> bool:
        lo, hi = self.interval
        s = np.linspace(lo, hi, n)
        return bool(np.max(np.abs(self.a(s))) <= self.lipschitz() * (1 + 1e-12) + 1e-15)

    def with_interval(self, lo: float, hi: float) -> "FluxSpec":
        return FluxSpec(self.name, self.coefficients, (float(lo), float(hi)), self.numerical)

    def with_numerical(self, kind: str) -> "FluxSpec":
        return FluxSpec(self.name, self.coefficients, self.interval, kind)


def burgers(interval=(-1.0, 1.0), numerical="godunov") -> FluxSpec:
    return FluxSpec("burgers", (0.0, 0.0, 0.5), interval, numerical)


def linear_advection(c: float, interval=(-1.0, 1.0), numerical="godunov") -> FluxSpec:
    return FluxSpec("linear", (0.0, float(c)), interval, numerical)


def polynomial_flux(coefficients, interval=(-1.0, 1.0), numerical="godunov") -> FluxSpec:
    return FluxSpec("polynomial", tuple(coefficients), interval, numerical)


def zero_flux() -> FluxSpec:
    return FluxSpec("zero", (0.0,))


# --- test functions -----------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """phi(x, xi) = theta(x) * psi(xi).

    theta: sum of ``(amplitude, kind, wavevector)`` terms, kind in
    {"const", "cos", "sin"}, each ``amplitude * cos(2 pi k.x)`` etc.
    psi: ``weight(xi) * (1 - ((xi - center)/radius)^2)^4`` on |xi - center| < radius.
    """

    __test__ = False  # keep pytest from collecting this class

    theta_terms: tuple
    center: float = 0.0
    radius: float = 1.0
    weight: tuple = (1.0,)
    dim: int = 1

    # theta --------------------------------------------------------------
    def _phase(self, x, k):
        x = np.asarray(x, float)
        if self.dim == 1:
            return 2.0 * np.pi * k * x
        k = np.broadcast_to(np.asarray(k, float), (2,))
        return 2.0 * np.pi * (k[0] * x[..., 0] + k[1] * x[..., 1])

    def _k2(self, k):
        return float(np.sum(np.asarray(k, float) ** 2))

    def theta(self, x):
        x = np.asarray(x, float)
        shape = x.shape if self.dim == 1 else x.shape[:-1]
        out = np.zeros(shape)
        for amp, kind, k in self.theta_terms:
            if kind == "const":
                out = out + amp
            elif kind == "cos":
                out = out + amp * np.cos(self._phase(x, k))
            else:
                out = out + amp * np.sin(self._phase(x, k))
        return out

    def grad_theta(self, x):
        """Gradient; shape of x (dim 1) or x.shape (dim 2, last axis = direction)."""
        x = np.asarray(x, float)
        out = np.zeros(x.shape)
        for amp, kind, k in self.theta_terms:
            if kind == "const":
                continue
            kv = np.broadcast_to(np.asarray(k, float), (self.dim,)) if self.dim == 2 else float(k)
            d = (-np.sin(self._phase(x, k)) if kind == "cos" else np.cos(self._phase(x, k)))
            if self.dim == 1:
                out = out + amp * 2.0 * np.pi * kv * d
            else:
                out = out + amp * 2.0 * np.pi * d[..., None] * kv
        return out

    def div_theta(self, x):
        """Sum of partial derivatives (pairs with the scalar flux in every direction)."""
        g = self.grad_theta(x)
        return g if self.dim == 1 else np.sum(g, axis=-1)

    def lap_theta(self, x):
        x = np.asarray(x, float)
        shape = x.shape if self.dim == 1 else x.shape[:-1]
        out = np.zeros(shape)
        for amp, kind, k in self.theta_terms:
            if kind == "const":
                continue
            f = np.cos if kind == "cos" else np.sin
            out = out - amp * (2.0 * np.pi) ** 2 * self._k2(k) * f(self._phase(x, k))
        return out

    def theta_l1(self, n: int = 4096) -> float:
        xs = (np.arange(n) + 0.5) / n
        if self.dim == 1:
            return float(np.mean(np.abs(self.theta(xs))))
        X = np.stack(np.meshgrid(xs[::16], xs[::16], indexing="ij"), axis=-1)
        return float(np.mean(np.abs(self.theta(X))))

    # psi ------------------------------------------------------------------
    @property
    def support(self) -> tuple:
        return (self.center - self.radius, self.center + self.radius)

    @property
    def psi_poly(self) -> Polynomial:
        s = Polynomial([-self.center / self.radius, 1.0 / self.radius])
        return Polynomial(self.weight) * (1.0 - s * s) ** 4

    def _on_support(self, poly: Polynomial, xi):
        xi = np.asarray(xi, float)
        lo, hi = self.support
        return np.where((xi > lo) & (xi < hi), poly(xi), 0.0)

    def psi(self, xi):
        return self._on_support(self.psi_poly, xi)

    def dpsi(self, xi):
        return self._on_support(self.psi_poly.deriv(), xi)

    def d2psi(self, xi):
        return self._on_support(self.psi_poly.deriv(2), xi)

    def xi_primitive(self, u, w: Polynomial = None):
        """int_{-inf}^{u} w(xi) psi(xi) dxi in closed form (w defaults to 1)."""
        p = self.psi_poly if w is None else w * self.psi_poly
        lo, hi = self.support
        P = p.integ(lbnd=lo)
        uc = np.clip(np.asarray(u, float), lo, hi)
        return P(uc)

    def dpsi_primitive(self, u, w: Polynomial = None):
        """int_{-inf}^{u} w(xi) psi'(xi) dxi."""
        p = self.psi_poly.deriv() if w is None else w * self.psi_poly.deriv()
        lo, hi = self.support
        uc = np.clip(np.asarray(u, float), lo, hi)
        return p.integ(lbnd=lo)(uc)

    def phi(self, x, xi):
        """phi on a tensor grid: shape theta(x).shape + xi.shape."""
        th = self.theta(x)
        ps = self.psi(xi)
        return th[..., None] * ps

    def check_support(self, xigrid: XiGrid):
        lo, hi = self.support
        if not (lo > -xigrid.R and hi < xigrid.R):
            raise ConfigurationError(
                f"test function support {self.support} must lie strictly inside (-R, R)")


def test_function_library(dim: int = 1) -> list:
    """Three tensor-product test functions used by residual and martingale checks."""
    if dim == 1:
        return [
            TestFunction(((1.0, "cos", 1),), center=0.0, radius=1.5),
            TestFunction(((1.0, "sin", 1),), center=0.2, radius=1.2, weight=(0.0, 1.0)),
            TestFunction(((1.0, "const", 0), (0.5, "cos", 2)), center=-0.3, radius=1.0),
        ]
    return [
        TestFunction(((1.0, "cos", (1, 0)),), center=0.0, radius=1.5, dim=2),
        TestFunction(((1.0, "sin", (1, 1)),), center=0.2, radius=1.2, weight=(0.0, 1.0), dim=2),
        TestFunction(((1.0, "const", 0), (0.5, "cos", (0, 2))), center=-0.3, radius=1.0, dim=2),
    ]


# --- kinetic functions and Young measures -------------------------------------

@dataclass(frozen=True)
class DiscreteYoungMeasure:
    grid: TorusGrid
    xigrid: XiGrid
    weights: np.ndarray
    tol: float = field(default=1e-12, compare=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != self.grid.shape + (self.xigrid.M,):
            raise ConfigurationError("young measure weights have the wrong shape")
        if np.any(w < -self.tol):
            raise InvariantViolation("young measure weights must be non-negative")
        if np.max(np.abs(w.sum(axis=-1) - 1.0)) > self.tol:
            raise InvariantViolation("young measure weights must sum to 1 per cell")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, grid: TorusGrid, xigrid: XiGrid, c) -> "DiscreteYoungMeasure":
        """delta_c per cell, split linearly between neighbouring centers (exact barycenter)."""
        c = np.broadcast_to(np.asarray(c, float), grid.shape)
        xc = xigrid.centers
        if np.any(c < xc[0]) or np.any(c > xc[-1]):
            raise ConfigurationError("dirac location outside the xi-cell centers")
        pos = (c - xc[0]) / xigrid.dxi
        j = np.minimum(np.floor(pos).astype(int), xigrid.M - 2)
        theta = pos - j
        w = np.zeros(grid.shape + (xigrid.M,))
        np.put_along_axis(w, j[..., None], (1.0 - theta)[..., None], axis=-1)
        np.put_along_axis(w, (j + 1)[..., None], theta[..., None], axis=-1)
        return cls(grid, xigrid, w)

    @classmethod
    def mixture(cls, parts) -> "DiscreteYoungMeasure":
        """Convex combination of ``(weight, measure)`` pairs."""
        parts = list(parts)
        first = parts[0][1]
        w = sum(lam * nu.weights for lam, nu in parts)
        return cls(first.grid, first.xigrid, w)


def kinetic_function(u: Field, xigrid: XiGrid) -> KineticFieldState:
    """Sharp equilibrium f = 1_{u > xi_j} at the xi-cell centers."""
    vals = u.values
    if np.any(np.abs(vals) >= xigrid.R):
        raise ConfigurationError(
            f"field values must lie in (-R, R) = ({-xigrid.R}, {xigrid.R})")
    f = (vals[..., None] > xigrid.centers).astype(float)
    return KineticFieldState(u.grid, xigrid, f)


def equilibrium_cell_average(u, xigrid: XiGrid) -> np.ndarray:
    """Cell averages of 1_{u > xi} over each xi-cell; its xi-integral is u exactly."""
    left = xigrid.edges[:-1]
    return np.clip((np.asarray(u, float)[..., None] - left) / xigrid.dxi, 0.0, 1.0)


def chi(f: KineticFieldState) -> np.ndarray:
    return f.values - (f.xigrid.centers < 0).astype(float)


def kinetic_barycenter(f: KineticFieldState) -> Field:
    """u = int (f - 1_{0>xi}) dxi by midpoint quadrature."""
    return Field(f.grid, np.sum(chi(f), axis=-1) * f.xigrid.dxi)


def young_from_kinetic(f: KineticFieldState, tol: float = 1e-10) -> DiscreteYoungMeasure:
    """nu = -d_xi f by centred differences with ghosts f(-R) = 1, f(R) = 0."""
    v = f.values
    pad = np.concatenate([np.ones(v.shape[:-1] + (1,)), v, np.zeros(v.shape[:-1] + (1,))], axis=-1)
    w = 0.5 * (pad[..., :-2] - pad[..., 2:])
    return DiscreteYoungMeasure(f.grid, f.xigrid, w, tol=tol)


def kinetic_from_young(nu: DiscreteYoungMeasure) -> KineticFieldState:
    """f(xi_j) = nu(xi > xi_j) + nu({xi_j}) / 2."""
    w = nu.weights
    above = np.cumsum(w[..., ::-1], axis=-1)[..., ::-1] - w
    return KineticFieldState(nu.grid, nu.xigrid, above + 0.5 * w)


def pair(f, phi: TestFunction) -> float:
    """Midpoint quadrature of the double integral of f * phi over torus x (-R, R)."""
    vals = f.values
    xg = f.xigrid
    phi_vals = phi.phi(f.grid.centers(), xg.centers)
    return float(np.sum(vals * phi_vals) * f.grid.cell_volume * xg.dxi)


def pair_equilibrium(u, grid: TorusGrid, phi: TestFunction) -> np.ndarray:
    """<1_{u>xi}, phi> with the xi-integral in closed form; leading axes of u are batch."""
    th = phi.theta(grid.centers())
    axes = tuple(range(-grid.dim, 0))
    return np.sum(th * phi.xi_primitive(u), axis=axes) * grid.cell_volume


def moment(nu: DiscreteYoungMeasure, p: float) -> float:
    if p < 1:
        raise ConfigurationError("moment order p must be >= 1")
    per_cell = np.sum(np.abs(nu.xigrid.centers) ** p * nu.weights, axis=-1)
    return float(np.mean(per_cell))


def moment_from_kinetic(f: KineticFieldState, p: float) -> float:
    """Spatial mean of int [f 1_{xi>0} + (1-f) 1_{xi<0}] p |xi|^{p-1} dxi."""
    if p < 1:
        raise ConfigurationError("moment order p must be >= 1")
    xc = f.xigrid.centers
    integrand = np.where(xc > 0, f.values, 1.0 - f.values) * p * np.abs(xc) ** (p - 1)
    return float(np.mean(np.sum(integrand, axis=-1) * f.xigrid.dxi))


def barycenter(nu: DiscreteYoungMeasure) -> Field:
    return Field(nu.grid, np.sum(nu.xigrid.centers * nu.weights, axis=-1))


@dataclass
class EquilibriumDistance:
    profile: np.ndarray
    max: float
    min: float
    mass: float
    kinetic_ok: bool


def distance_profile(fvals: np.ndarray, xigrid: XiGrid) -> np.ndarray:
    """m at the right edge of each xi-cell: int_{-R}^{edge} (1_{u>z} - f) dz."""
    u = np.sum(fvals - (xigrid.centers < 0), axis=-1) * xigrid.dxi
    feq = equilibrium_cell_average(u, xigrid)
    return np.cumsum(feq - fvals, axis=-1) * xigrid.dxi


def distance_to_equilibrium(f: KineticFieldState, tol: float = 1e-10) -> EquilibriumDistance:
    """Distance-to-equilibrium profile; negativity flags a non-kinetic f.

    The indicator of the barycenter is integrated exactly over each xi-cell,
    so for any xi-nonincreasing f the profile is non-negative up to rounding.
    """
    prof = distance_profile(f.values, f.xigrid)
    mass = float(np.sum(prof) * f.xigrid.dxi * f.grid.cell_volume)
    mn = float(prof.min())
    return EquilibriumDistance(prof, float(prof.max()), mn, mass, mn >= -tol)


def equilibrium_mass(fvals: np.ndarray, xigrid: XiGrid) -> np.ndarray:
    """Per-cell xi-integral of the distance profile (all leading axes kept)."""
    prof = distance_profile(fvals, xigrid)
    return prof.sum(axis=-1) * xigrid.dxi


@dataclass
class EquilibriumConvergence:
    errors: list
    inversions: int
    strictly_decreasing: bool


def check_equilibrium_convergence(nus, u_ref: Field, q: float = 1.0) -> EquilibriumConvergence:
    if q < 1:
        raise ConfigurationError("q must be >= 1")
    errs = []
    for nu in nus:
        diff = barycenter(nu).values - u_ref.values
        errs.append(float((np.sum(np.abs(diff) ** q) * u_ref.grid.cell_volume) ** (1.0 / q)))
    return _trend(errs)


def _trend(errs) -> EquilibriumConvergence:
    d = np.diff(np.asarray(errs, float))
    inv = int(np.count_nonzero(d >= 0)) if len(errs) > 1 else 0
    return EquilibriumConvergence(list(errs), inv, inv == 0)


def check_error_trend(errs) -> EquilibriumConvergence:
    return _trend(errs)
