"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--cells 512]

For each workload the best wall time over ``--repeat`` runs is reported per
backend, together with the largest absolute difference between the two
backends' outputs.
"""
import argparse
import timeit

import numpy as np

from kinscl import _backend
from kinscl.fields import Field, KineticFieldState
from kinscl.grid_noise import XiGrid, make_grid, make_noise_model, sample_wiener_paths
from kinscl.kinetic import burgers, equilibrium_cell_average
from kinscl.schemes import run_bgk, run_fv


def workloads(cells, samples):
    rng = np.random.default_rng(0)
    flux = burgers((-1.5, 1.5))
    A = np.ascontiguousarray(flux.coefficients, dtype=float)
    q = np.ascontiguousarray(flux.q.coef, dtype=float)
    crit = np.ascontiguousarray(flux.critical_points(), dtype=float)
    u = rng.uniform(-1, 1, size=(samples, cells))
    xg = XiGrid(2.5, 128)
    f = np.clip(rng.uniform(-0.2, 1.2, size=(samples, cells, xg.M)), 0, 1)
    nu = np.clip(flux.a(xg.centers) * 0.4 / 2.5, -1, 1)
    s = rng.normal(scale=0.01, size=(samples, cells))

    grid = make_grid(1, cells)
    model = make_noise_model(4, 1.0, scale=0.5)
    add = make_noise_model(4, 1.0, "additive", scale=0.1)
    T = 0.1
    paths = sample_wiener_paths(model, T, T / int(np.ceil(T * 1.5 * cells / 0.4)), 1, samples)
    bgk_paths = sample_wiener_paths(add, T, T / int(np.ceil(T * 2.5 * cells / 0.9)), 1, samples)
    u0 = Field.from_function(grid, lambda x: 0.8 * np.sin(2 * np.pi * x))
    f0 = KineticFieldState(grid, xg, equilibrium_cell_average(u0.values, xg))

    return {
        "fv_sweep (godunov)": lambda: _backend.fv_sweep(u, 0.3, 0, A, q, crit),
        "bgk_transport": lambda: _backend.bgk_transport(f, nu),
        "xi_shift": lambda: _backend.xi_shift(f, s, xg.dxi),
        "run_fv (noisy)": lambda: np.stack([t.states[-1] for t in
                                            run_fv(grid, flux, model, paths, u0, 0.4)]),
        "run_bgk (additive)": lambda: np.stack([t.states[-1] for t in
                                                run_bgk(grid, xg, burgers((-2.5, 2.5)), add, bgk_paths,
                                                        f0, 0.05)]),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--cells", type=int, default=512)
    ap.add_argument("--samples", type=int, default=8)
    args = ap.parse_args(argv)

    backends = _backend.available()
    if "cython" not in backends:
        print("compiled kernels are not built; only the Python backend is timed")
    jobs = workloads(args.cells, args.samples)
    print(f"{'workload':<22}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'max|diff|':>12}")
    for label, fn in jobs.items():
        times, outs = {}, {}
        for b in backends:
            _backend.use(b)
            outs[b] = np.asarray(fn())
            times[b] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        row = f"{label:<22}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            diff = float(np.max(np.abs(outs["cython"] - outs["python"])))
            row += f"{times['python'] / times['cython']:>9.1f}x{diff:>12.1e}"
        print(row)
    _backend.use(backends[0])


if __name__ == "__main__":
    main()
