"""Sign-changing solutions of -u'' = c+ (u+)^p - c- (u-)^p + w by cellwise
Nehari minimization and breakpoint optimization, with independent checks."""

from .assemble import (GluedSolution, ViolatedLocalization, ZeroReport, glue, interior_zeros,
                       residual_norms, stationarity_defect, zero_localization_check)
from .cellsolve import (CellGrid, CellSolution, CellSolveError, CellTooLarge, DiscreteEnergy,
                        cell_flux, constrained_infimum, discretize_cell, ray_maximize, solve_cell,
                        solve_cell_nehari, solve_tilde)
from .config import RunConfig, emit_config, parse_config
from .model import (DeformationMetrics, ForcingSpec, ForcingTerm, InfeasiblePartition, Partition,
                    ProblemSpec, deformation_distance, is_interior, lipschitz_constant, sigma,
                    uniform_partition)
from .oracle import (AsymmetrySplit, EigenData, ShootingOverflow, ShootingResult, adversarial_forcing,
                     compute_split, eigen_data, shoot, shooting_match, verify_sign_conditions)
from .partition import (OuterOptions, OuterSolveError, OuterState, breakpoint_gradient,
                        flux_gradient, optimize_partition, total_energy)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
