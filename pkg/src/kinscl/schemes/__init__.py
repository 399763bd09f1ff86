"""Time-stepping engines: finite volume, vanishing viscosity and kinetic relaxation."""
from ..fields import DissipationRecord, Field, KineticFieldState, Trajectory
from .bgk import run_bgk
from .fv import epsilon_parabolic, grad_energy, run_fv, run_parabolic
from .riemann import burgers_box_cell_averages, exact_burgers_riemann

__all__ = [
    "DissipationRecord", "Field", "KineticFieldState", "Trajectory",
    "run_fv", "run_parabolic", "epsilon_parabolic", "grad_energy", "run_bgk",
    "exact_burgers_riemann", "burgers_box_cell_averages",
]
