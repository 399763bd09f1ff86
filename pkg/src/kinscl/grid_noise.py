"""Periodic grids, the truncated multiplicative noise model and Brownian paths.

Noise coefficients are separable::

    g_k(x, u) = alpha_k * P_k(x) * chi(u),    alpha_k = scale * 2**(-decay * k)

with ``P_k`` alternating cos/sin modes of increasing frequency and ``chi`` a
Lipschitz state profile.  This makes the growth constant ``D0`` and the
modulus constant ``D1`` (with ``h(z) = min(z, 1)``) available in closed form.

Brownian increments come from a counter-based generator: Philox-4x64 keyed by
``SeedSequence(seed, spawn_key=(sample, mode))``; time step ``j`` reads counter
block ``j`` and maps its first two 64-bit words through Box-Muller (cosine
branch).  The value at ``(seed, sample, mode, step)`` never depends on the
order in which anything else was generated.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError

RNG_ALGORITHM = "philox4x64-boxmuller-cos/seedsequence(seed,(sample,mode))/block=step"

NOISE_MODES = ("compact_support", "linear_growth", "additive")


@dataclass(frozen=True)
class TorusGrid:
    dim: int
    cells_per_dim: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {self.dim}")
        if int(self.cells_per_dim) != self.cells_per_dim or self.cells_per_dim < 2:
            raise ConfigurationError(
                f"cells_per_dim must be an integer >= 2, got {self.cells_per_dim}")

    @property
    def h(self) -> float:
        return 1.0 / self.cells_per_dim

    @property
    def shape(self) -> tuple:
        return (self.cells_per_dim,) * self.dim

    @property
    def n_cells(self) -> int:
        return self.cells_per_dim ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    def centers_1d(self) -> np.ndarray:
        return (np.arange(self.cells_per_dim) + 0.5) * self.h

    def centers(self) -> np.ndarray:
        """Cell centers, shape ``grid.shape`` (dim 1) or ``grid.shape + (2,)``."""
        c = self.centers_1d()
        if self.dim == 1:
            return c
        x1, x2 = np.meshgrid(c, c, indexing="ij")
        return np.stack([x1, x2], axis=-1)

    def wrap(self, index):
        return np.mod(index, self.cells_per_dim)


@dataclass(frozen=True)
class XiGrid:
    """Truncated velocity grid on (-R, R) with M midpoint cells."""

    R: float
    M: int

    def __post_init__(self):
        problems = []
        if not self.R > 0:
            problems.append(f"xi truncation R must be positive, got {self.R}")
        if int(self.M) != self.M or self.M < 8 or self.M % 2:
            problems.append(f"xi cells M must be an even integer >= 8, got {self.M}")
        if problems:
            raise ConfigurationError(problems)

    @property
    def dxi(self) -> float:
        return 2.0 * self.R / self.M

    @property
    def centers(self) -> np.ndarray:
        return -self.R + (np.arange(self.M) + 0.5) * self.dxi

    @property
    def edges(self) -> np.ndarray:
        return -self.R + np.arange(self.M + 1) * self.dxi

    def check_covers(self, bound: float):
        if not self.R > bound:
            raise ConfigurationError(
                f"xi truncation R={self.R} must exceed the invariant-region bound {bound}")


def make_grid(dim: int, cells_per_dim: int) -> TorusGrid:
    return TorusGrid(int(dim), int(cells_per_dim))


# --- state profiles -------------------------------------------------------

def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, max slope 2 at t = 1/2."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        a = np.exp(-1.0 / t)
        b = np.exp(-1.0 / (1.0 - t))
    return a / (a + b)


def bump(u):
    """Smooth bump: 1 on [-1/2, 1/2], 0 for |u| >= 1, Lipschitz constant 4."""
    u = np.asarray(u, dtype=float)
    return smoothstep((1.0 - np.abs(u)) / 0.5)


@dataclass(frozen=True)
class NoiseModel:
    K: int
    amplitudes: np.ndarray
    mode: str = "compact_support"
    dim: int = 1
    u_max: float = 2.0
    decay: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def compact_support_flag(self) -> bool:
        return self.mode == "compact_support" or self.is_zero

    @property
    def xi_independent(self) -> bool:
        return self.mode == "additive" or self.is_zero

    @property
    def is_zero(self) -> bool:
        return not np.any(self.amplitudes)

    # frequency pairs: k=1 cos(2pi x), k=2 sin(2pi x), k=3 cos(4pi x), ...
    def frequencies(self) -> np.ndarray:
        return (np.arange(self.K) // 2 + 1).astype(float)

    def spatial_profiles(self, x) -> np.ndarray:
        """Unscaled profiles P_k(x), shape ``(K,) + point_shape``."""
        x = np.asarray(x, dtype=float)
        phase = x if self.dim == 1 else x[..., 0] + x[..., 1]
        out = np.empty((self.K,) + phase.shape)
        for k, m in enumerate(self.frequencies()):
            arg = 2.0 * np.pi * m * phase
            out[k] = np.cos(arg) if k % 2 == 0 else np.sin(arg)
        return out

    def spatial_weights(self, grid: TorusGrid) -> np.ndarray:
        """alpha_k * P_k at the cell centers, shape ``(K,) + grid.shape``."""
        prof = self.spatial_profiles(grid.centers())
        return self.amplitudes.reshape((-1,) + (1,) * grid.dim) * prof

    def state_profile(self, u):
        u = np.asarray(u, dtype=float)
        if self.mode == "compact_support":
            return bump(u)
        if self.mode == "linear_growth":
            return self.u_max * np.tanh(u / self.u_max)
        return np.ones_like(u)

    def g(self, x, u) -> np.ndarray:
        return (self.amplitudes.reshape((-1,) + (1,) * np.ndim(u))
                * self.spatial_profiles(x) * self.state_profile(u))

    def G2(self, x, u):
        return np.sum(self.g(x, u) ** 2, axis=0)

    # --- closed-form certificates -------------------------------------------
    def _chi_constants(self):
        """(sup|chi|, Lipschitz(chi), sup chi^2 / (1 + u^2))."""
        if self.mode == "compact_support":
            return 1.0, 4.0, 1.0
        if self.mode == "linear_growth":
            return self.u_max, 1.0, 1.0
        return 1.0, 0.0, 1.0

    def profile_lipschitz(self) -> np.ndarray:
        factor = 1.0 if self.dim == 1 else np.sqrt(2.0)
        return 2.0 * np.pi * self.frequencies() * factor

    @property
    def d0_certificate(self) -> float:
        _, _, growth = self._chi_constants()
        return float(growth * np.sum(self.amplitudes ** 2))

    @property
    def d1_certificate(self) -> float:
        chi_max, chi_lip, _ = self._chi_constants()
        state_part = max(chi_lip ** 2, 4.0 * chi_max ** 2)
        per_mode = np.maximum(self.profile_lipschitz() ** 2 * chi_max ** 2, state_part)
        return float(2.0 * np.sum(self.amplitudes ** 2 * per_mode))

    @property
    def g_max(self) -> float:
        """Upper bound of sum_k |g_k| over the torus and all states."""
        chi_max, _, _ = self._chi_constants()
        return float(np.sum(np.abs(self.amplitudes)) * chi_max)

    def config_items(self) -> dict:
        return {"K": self.K, "decay": self.decay, "mode": self.mode,
                "scale": self.scale, "u_max": self.u_max, "dim": self.dim}


def make_noise_model(K: int, decay: float, mode: str = "compact_support", *,
                     scale: float = 1.0, dim: int = 1, u_max: float = 2.0) -> NoiseModel:
    problems = []
    if int(K) != K or K < 1:
        problems.append(f"noise K must be an integer >= 1, got {K}")
    if not decay > 0:
        problems.append(f"noise decay must be positive, got {decay}")
    if mode not in NOISE_MODES:
        problems.append(f"noise mode must be one of {NOISE_MODES}, got {mode!r}")
    if not scale >= 0:
        problems.append(f"noise scale must be non-negative, got {scale}")
    if not u_max > 0:
        problems.append(f"noise u_max must be positive, got {u_max}")
    if problems:
        raise ConfigurationError(problems)
    k = np.arange(1, int(K) + 1)
    amps = scale * 2.0 ** (-decay * k)
    return NoiseModel(int(K), amps, mode, int(dim), float(u_max), float(decay), float(scale))


# --- Brownian paths ---------------------------------------------------------

def _mode_normals(seed: int, sample: int, mode: int, start: int, count: int) -> np.ndarray:
    bitgen = np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(sample), int(mode))))
    if start:
        bitgen.advance(start)
    raw = bitgen.random_raw(4 * count).reshape(count, 4)
    u1 = ((raw[:, 0] >> np.uint64(11)).astype(float) + 1.0) * 2.0 ** -53
    u2 = (raw[:, 1] >> np.uint64(11)).astype(float) * 2.0 ** -53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def standard_normals(seed: int, sample: int, K: int, n_steps: int, start: int = 0) -> np.ndarray:
    """Standard normal draws for steps ``start .. start+n_steps-1``, shape (n_steps, K)."""
    if seed < 0:
        raise ConfigurationError(f"seed must be non-negative, got {seed}")
    out = np.empty((n_steps, K))
    for k in range(K):
        out[:, k] = _mode_normals(seed, sample, k, start, n_steps)
    return out


@dataclass(frozen=True)
class NoisePath:
    seed: int
    dt: float
    n_steps: int
    increments: np.ndarray
    sample: int = 0

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape[0] != self.n_steps:
            raise ConfigurationError("increments must have n_steps rows")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def K(self) -> int:
        return self.increments.shape[1]

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    def brownian(self) -> np.ndarray:
        """beta_k at t_0..t_n, shape (n_steps + 1, K)."""
        return np.vstack([np.zeros((1, self.K)), np.cumsum(self.increments, axis=0)])

    def variance_check(self, n_se: float = 5.0) -> bool:
        """Per-mode sample variance within ``n_se`` standard errors of dt."""
        if self.n_steps < 2:
            return True
        var = np.mean(self.increments ** 2, axis=0)
        se = self.dt * np.sqrt(2.0 / self.n_steps)
        return bool(np.all(np.abs(var - self.dt) <= n_se * se))


def n_steps_for(T: float, dt: float) -> int:
    problems = []
    if not T > 0:
        problems.append(f"T must be positive, got {T}")
    if not dt > 0:
        problems.append(f"dt must be positive, got {dt}")
    if problems:
        raise ConfigurationError(problems)
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ConfigurationError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def sample_wiener_path(model: NoiseModel, T: float, dt_fine: float, seed: int,
                       sample: int = 0) -> NoisePath:
    n = n_steps_for(T, dt_fine)
    inc = np.sqrt(dt_fine) * standard_normals(seed, sample, model.K, n)
    return NoisePath(int(seed), float(dt_fine), n, inc, int(sample))


def sample_wiener_paths(model: NoiseModel, T: float, dt_fine: float, seed: int,
                        n_samples: int, first_sample: int = 0) -> list:
    return [sample_wiener_path(model, T, dt_fine, seed, s)
            for s in range(first_sample, first_sample + n_samples)]


def _block_sum(inc: np.ndarray, factor: int) -> np.ndarray:
    # powers of two reduce by repeated pairwise halving so nested aggregation is exact
    if factor & (factor - 1) == 0:
        out = inc
        while factor > 1:
            out = out[0::2] + out[1::2]
            factor //= 2
        return out
    n = inc.shape[0] // factor
    blocks = inc.reshape(n, factor, -1)
    out = blocks[:, 0].copy()
    for j in range(1, factor):
        out += blocks[:, j]
    return out


def aggregate_increments(path: NoisePath, factor: int) -> NoisePath:
    if int(factor) != factor or factor < 1 or path.n_steps % factor:
        raise ConfigurationError(
            f"aggregation factor {factor} must divide n_steps={path.n_steps}")
    factor = int(factor)
    if factor == 1:
        return path
    return NoisePath(path.seed, path.dt * factor, path.n_steps // factor,
                     _block_sum(np.asarray(path.increments), factor), path.sample)


# --- bound verification -------------------------------------------------------

@dataclass
class BoundReport:
    d0_hat: float
    d1_hat: float
    d0_certificate: float
    d1_certificate: float
    n_samples: int
    n_skipped: int = 0
    passed: bool = field(default=False)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def torus_distance(x, y, dim: int):
    d = np.abs(np.asarray(x, float) - np.asarray(y, float)) % 1.0
    d = np.minimum(d, 1.0 - d)
    if dim == 1:
        return d
    return np.sqrt(np.sum(d ** 2, axis=-1))


def verify_noise_bounds(model: NoiseModel, x, u, y, v, chunk: int = 200_000,
                        rtol: float = 1e-12) -> BoundReport:
    """Empirical D0/D1 over sample points, compared with the model certificates.

    ``x``/``y`` have shape (n,) in dim 1 and (n, 2) in dim 2.
    """
    u = np.asarray(u, float).ravel()
    v = np.asarray(v, float).ravel()
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = u.size
    if n == 0:
        raise ConfigurationError("verify_noise_bounds needs at least one sample point")
    d0_hat = 0.0
    d1_hat = 0.0
    skipped = 0
    for lo in range(0, n, chunk):
        sl = slice(lo, lo + chunk)
        gx = model.g(x[sl], u[sl])
        gy = model.g(y[sl], v[sl])
        d0_hat = max(d0_hat, float(np.max(np.sum(gx ** 2, axis=0) / (1.0 + u[sl] ** 2))))
        dxy = torus_distance(x[sl], y[sl], model.dim)
        duv = np.abs(u[sl] - v[sl])
        denom = dxy ** 2 + duv * np.minimum(duv, 1.0)
        ok = denom > 0
        skipped += int(np.count_nonzero(~ok))
        if np.any(ok):
            num = np.sum((gx - gy) ** 2, axis=0)
            d1_hat = max(d1_hat, float(np.max(num[ok] / denom[ok])))
    c0, c1 = model.d0_certificate, model.d1_certificate
    passed = (np.isfinite(d0_hat) and np.isfinite(d1_hat)
              and d0_hat <= c0 * (1 + rtol) + 1e-300 and d1_hat <= c1 * (1 + rtol) + 1e-300)
    return BoundReport(d0_hat, d1_hat, c0, c1, n, skipped, bool(passed))


def noise_lattice(n: int, u_range: float = 2.0, dim: int = 1):
    """Dense (x, u, y, v) lattice with ``n`` points per axis (dim 1 only)."""
    if dim != 1:
        raise ConfigurationError("lattice sampling is implemented for dim 1")
    xs = (np.arange(n) + 0.5) / n
    us = np.linspace(-u_range, u_range, n)
    X, U, Y, V = np.meshgrid(xs, us, xs, us, indexing="ij")
    return X.ravel(), U.ravel(), Y.ravel(), V.ravel()
