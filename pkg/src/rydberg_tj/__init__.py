"""Hard-core bosonic t-J simulations on Rydberg tweezer geometries.

Modules: ``geometry``, ``hilbert``, ``hamiltonian``, ``spectra``,
``dynamics``, ``observables``, ``measurement``, ``reconstruction``,
``initmodel``, ``toymodel`` and the configuration runner behind ``cli``.
"""
__version__ = "0.1.0"

from .geometry import LatticeGeometry, build_ladder, build_triangular2d, brillouin_grid  # noqa: E402
from .hilbert import DOWN, GROUND, HOLE, LOST, UP, SectorBasis  # noqa: E402
from .hamiltonian import CouplingSet, LightShiftProgram, RampProfile, build_tJ, mhz  # noqa: E402
from .spectra import binding_energy, binding_sweep, lowest_eigenpairs  # noqa: E402
from .dynamics import EvolutionSchedule, RampedHamiltonian, StateVector, evolve, product_state  # noqa: E402
from .measurement import ErrorChannel, derive_error_matrix, sample_shots  # noqa: E402

__all__ = [
    "__version__",
    "LatticeGeometry", "build_ladder", "build_triangular2d", "brillouin_grid",
    "DOWN", "UP", "HOLE", "GROUND", "LOST", "SectorBasis",
    "CouplingSet", "LightShiftProgram", "RampProfile", "build_tJ", "mhz",
    "binding_energy", "binding_sweep", "lowest_eigenpairs",
    "EvolutionSchedule", "RampedHamiltonian", "StateVector", "evolve", "product_state",
    "ErrorChannel", "derive_error_matrix", "sample_shots",
]
