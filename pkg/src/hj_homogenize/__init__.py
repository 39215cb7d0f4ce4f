"""Periodic homogenization of Hamilton-Jacobi equations at desk scale.

Effective Hamiltonians from discounted cell problems, monotone Lax-Friedrichs
solvers for oscillatory and homogenized Cauchy problems, and symmetric
N-particle discretizations of mean-field Hamiltonians.
"""

from .cell import (CellSolution, EffectiveTable, check_constant_uniqueness, solve_discounted,
                   solve_large_time, tabulate_effective)
from .errors import (ConfigurationError, InvariantViolation, NonConvergenceError,
                     OutOfRangeError, SolverDivergenceError)
from .grid import BoxGrid, GridFunction, PeriodicGrid, interpolate, make_grid, one_sided_gradients
from .hamiltonians import HamiltonianSpec, TrigPotential, eval_hamiltonian, reduced_hamiltonian
from .reduction import (MeanDecomposition, ParticleConfiguration, lattice_decompose,
                        mean_closeness_report, mean_projection, symmetrize,
                        y_eps_invariance_check)
from .scheme import (CauchySolution, SchemeConfig, lf_numerical_hamiltonian, solve_cauchy,
                     solve_effective_cauchy, step)

__all__ = [
    "BoxGrid", "CauchySolution", "CellSolution", "ConfigurationError", "EffectiveTable",
    "GridFunction", "HamiltonianSpec", "InvariantViolation", "MeanDecomposition",
    "NonConvergenceError", "OutOfRangeError", "ParticleConfiguration", "PeriodicGrid",
    "SchemeConfig", "SolverDivergenceError", "TrigPotential", "check_constant_uniqueness",
    "eval_hamiltonian", "interpolate", "lattice_decompose", "lf_numerical_hamiltonian",
    "make_grid", "mean_closeness_report", "mean_projection", "one_sided_gradients",
    "reduced_hamiltonian", "solve_cauchy", "solve_discounted", "solve_effective_cauchy",
    "solve_large_time", "step", "symmetrize", "tabulate_effective", "y_eps_invariance_check",
]
