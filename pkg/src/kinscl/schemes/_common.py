"""Plumbing shared by the time-stepping engines."""
import numpy as np

from ..errors import ConfigurationError, SchemeAbort
from ..grid_noise import NoiseModel, NoisePath, TorusGrid


def as_paths(path):
    """Normalise a single NoisePath or a sequence of them; returns (list, single?)."""
    if isinstance(path, NoisePath):
        return [path], True
    paths = list(path)
    if not paths:
        raise ConfigurationError("at least one noise path is required")
    p0 = paths[0]
    for p in paths[1:]:
        if p.n_steps != p0.n_steps or p.dt != p0.dt or p.K != p0.K:
            raise ConfigurationError("all noise paths of a batch must share dt, n_steps and K")
    return paths, False


def check_noise(model: NoiseModel, paths, grid: TorusGrid):
    if paths[0].K != model.K:
        raise ConfigurationError(f"noise path has {paths[0].K} modes, model has {model.K}")
    if model.dim != grid.dim:
        raise ConfigurationError(f"noise model dimension {model.dim} != grid dimension {grid.dim}")


def snapshot_steps(n_steps: int, dt: float, snapshot_times=None, every_step=False) -> np.ndarray:
    """Step indices of the stored states; always contains 0 and n_steps."""
    if every_step:
        return np.arange(n_steps + 1)
    steps = {0, n_steps}
    problems = []
    for t in (() if snapshot_times is None else snapshot_times):
        k = int(round(t / dt))
        if k < 0 or k > n_steps or abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
            problems.append(f"snapshot time {t} is not a step time in [0, {n_steps * dt}]")
        steps.add(k)
    if problems:
        raise ConfigurationError(problems)
    return np.array(sorted(steps))


def increments(paths) -> np.ndarray:
    """Stacked increments, shape (S, n_steps, K)."""
    return np.stack([np.asarray(p.increments) for p in paths])


def noise_field(inc_n: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_k alpha_k P_k(x) dbeta_k for every sample: (S, K) x (K, *shape) -> (S, *shape).

    Summed mode by mode in a fixed order so a sample's value never depends on
    the batch it is computed in.
    """
    ext = (slice(None),) + (None,) * (weights.ndim - 1)
    out = inc_n[:, 0][ext] * weights[0]
    for k in range(1, weights.shape[0]):
        out = out + inc_n[:, k][ext] * weights[k]
    return out


def check_finite(arr, step: int, what: str = "state"):
    if not np.all(np.isfinite(arr)):
        raise SchemeAbort(f"non-finite {what} produced", step)


def stencil_range(u: np.ndarray, dim: int):
    """Per-cell min and max over the cell and its nearest neighbours (spatial axes last)."""
    lo = u.copy()
    hi = u.copy()
    for ax in range(-dim, 0):
        for sh in (1, -1):
            r = np.roll(u, sh, axis=ax)
            np.minimum(lo, r, out=lo)
            np.maximum(hi, r, out=hi)
    return lo, hi


def outside_fraction(lo, hi, R: float):
    """Fraction of [lo, hi] with |xi| > R; degenerate intervals count as points."""
    width = hi - lo
    out_len = np.maximum(0.0, hi - np.maximum(lo, R)) + np.maximum(0.0, np.minimum(hi, -R) - lo)
    point = (np.abs(lo) > R).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(width > 0, out_len / np.where(width > 0, width, 1.0), point)
    return frac
