import numpy as np


def exact_burgers_riemann(left: float, right: float, x, t: float):
    """Entropy solution of u_t + (u^2/2)_x = 0 with a jump at x = 0."""
    x = np.asarray(x, dtype=float)
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return np.where(x < 0, left, right)
    if left > right:
        s = 0.5 * (left + right)
        return np.where(x < s * t, left, right)
    return np.clip(x / t, left, right)


def burgers_box_cell_averages(n_cells: int, t: float, lo: float = 0.25, hi: float = 0.75,
                              inside: float = 1.0, outside: float = 0.0) -> np.ndarray:
    """Exact cell averages on the unit torus for box data ``inside`` on [lo, hi).

    Valid while the rarefaction from ``lo`` and the shock from ``hi`` have not
    met (``inside > outside``). The caller keeps t inside that window.
    """
    if inside < outside:
        raise ValueError("box oracle expects inside >= outside")
    edges = np.arange(n_cells + 1) / n_cells
    a, b = edges[:-1], edges[1:]
    # pieces of (u - outside): (start, end, slope, intercept) with value slope*x + intercept
    s = 0.5 * (inside + outside)
    pieces = []
    if t > 0:
        pieces.append((lo + outside * t, lo + inside * t, 1.0 / t, -lo / t - outside))
    pieces.append((lo + inside * t, hi + s * t, 0.0, inside - outside))
    total = np.zeros(n_cells)
    for p0, p1, beta, alpha in pieces:
        for shift in (-1.0, 0.0, 1.0):
            q0, q1 = p0 + shift, p1 + shift
            l = np.clip(a, q0, q1)
            r = np.clip(b, q0, q1)
            # integral of beta*(x - shift) + alpha over [l, r]
            total += (alpha - beta * shift) * (r - l) + 0.5 * beta * (r * r - l * l)
    return outside + total * n_cells
