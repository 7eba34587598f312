"""Simulation and cross-validation toolkit for a killed mean-field
particle system and its associated non-conservative nonlocal PDE."""

__version__ = "0.1.0"

from .coefficients import (ModelParams, ParamBounds, concentration_c, drift_b,
                           killing_rate, validate_params)
from .errors import (CFLViolation, MassAtBoundary, MkvError,
                     NonpositiveDenominator, ParseError, PositionOutOfGrid,
                     UnequalSupportSizes, ValidationError)
from .history_field import GridSpec, HistoryField, HistoryOracle, kde_on_grid
from .kernel import (KernelConstants, KernelSpec, check_normalization, eval_K,
                     eval_gradK, eval_hessK, kernel_constants)
from .metrics import (ComparisonReport, GaussianBump, compare_runs, l1_gap,
                      w1_empirical, w2_empirical, weak_form_residual_particles,
                      weak_form_residual_pde)
from .particles import (ExplicitInit, GaussianInit, Mode, ParticleSystem,
                        PointMassInit, SimConfig, SimOutput, empirical_density,
                        fk_expectation, init_particles, run, step)
from .pde import (DensitySolution, check_cfl, gaussian_profile, pde_mass,
                  solve_pde)
from .experiment_io import (RunConfig, RunManifest, config_to_text, emit_csv,
                            parse_config)
