"""Fractional (s,p)-torsion functions, first eigenpairs and s-Cheeger constants
on uniform grids, with the p -> 1 continuation linking them."""
from .checks import CheckReport
from .cheeger import (CavalieriProfile, CheegerEstimates, ContinuationConfig, cheeger_quotient,
                      check_levelset_linfty_bound, continuation_estimates, exact_min_oracle,
                      level_set_search, s_perimeter)
from .dirichlet import (ConvergenceError, SolverConfig, TorsionResult, energy, gradient,
                        solve_dirichlet, torsion_function)
from .eigen import EigenConfig, EigenResult, first_eigenpair, inverse_power_step, rayleigh_quotient
from .experiment import ExperimentConfig, emit_plot_data, load_config, run_experiment
from .grid import (DomainGrid, FracParams, SubsetCandidate, build_grid, measure, orbit_spread,
                   subset)
from .kernel import KernelWeights, assemble_kernel, assemble_weights, seminorm_p, weak_action

__version__ = "0.1.0"
