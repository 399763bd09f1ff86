"""Kernel backend selection.

The compiled module is used when importable; ``KINSCL_PURE_PYTHON=1`` forces
the numpy fallback.  ``use(name)`` switches at runtime (tests, benchmarks).
"""
import os

import numpy as np

from . import _kernels_py

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_active = None


def available() -> tuple:
    return ("cython", "python") if _ckernels is not None else ("python",)


def use(name: str):
    global _active
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        _active = "cython"
    elif name == "python":
        _active = "python"
    else:
        raise ValueError(f"unknown backend {name!r}")


def name() -> str:
    return _active


def _module():
    return _ckernels if _active == "cython" else _kernels_py


def fv_sweep(u, lam, kind, A, q, crit):
    return _module().fv_sweep(np.ascontiguousarray(u, dtype=float), float(lam), int(kind),
                              A, q, crit)


def bgk_transport(f, nu):
    return _module().bgk_transport(np.ascontiguousarray(f, dtype=float),
                                   np.ascontiguousarray(nu, dtype=float))


def xi_shift(f, s, dxi):
    return _module().xi_shift(np.ascontiguousarray(f, dtype=float),
                              np.ascontiguousarray(s, dtype=float), float(dxi))


use("python" if os.environ.get("KINSCL_PURE_PYTHON") == "1" or _ckernels is None else "cython")
