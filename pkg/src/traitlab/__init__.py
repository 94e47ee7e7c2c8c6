"""Trait-distribution dynamics under the infinitesimal model.

A numerical laboratory for one-dimensional trait densities evolving
under sexual (infinitesimal-model) or asexual (mutation kernel)
reproduction, selection, and competition.  The package simulates the
scaled equations, measures how fast the sexual model concentrates on
its moving Gaussian profile as the segregational scale epsilon shrinks,
and contrasts the variance behavior of the two reproduction modes.

Layout:

* ``grid`` / ``operators``: trait grids, densities, and the offspring
  and mutation convolution operators;
* ``mortality``: selection profiles and their admissibility checks;
* ``moments`` / ``transport``: moment algebra, moment-ODE residuals,
  and Wasserstein distances;
* ``limits``: the limiting mean ODE and Gaussian ansatz;
* ``dynamics``: time integration of the three population models;
* ``harness`` / ``config`` / ``cli``: epsilon sweeps, rate fits, the
  validation suite, and the command-line front end.
"""

from .errors import (BlowUpError, ConfigError, GridMismatchError,
                     GridTooLargeError, InsufficientSamplesError,
                     InvalidBoundsError, NegativityError,
                     NonpositiveValuesError, NotNormalizedError,
                     OrderExceededError, OutOfTableError, TraitLabError,
                     UnderResolvedError, ZeroMassError)
from .grid import Density, TraitGrid, integrate, make_grid, normalize
from .mortality import (HypothesisReport, MortalitySpec, double_well,
                        eval_m, eval_m_prime, eval_m_second, quadratic,
                        quartic_well, tabulated, validate_hypotheses)
from .operators import (MutationKernel, SegregationKernel, apply_T_fast,
                        apply_T_full, apply_T_reference, apply_mutation,
                        make_mutation_kernel, make_segregation_kernel)
from .moments import (DecompositionMismatchError, KernelMoments,
                      MomentVector, ResidualReport, TailTruncationWarning,
                      asexual_moment_residuals, extract_moments,
                      kernel_even_moment, make_kernel_moments,
                      moment_ode_residuals, predict_T_moment,
                      selection_average, selection_fluxes,
                      taylor_remainder)
from .transport import (ContractionResult, contraction_check, wasserstein1,
                        wasserstein2)
from .limits import (MeanPath, RhoLimit, WindowExitWarning,
                     gaussian_density, gaussian_profile,
                     integrate_mean_ode, rho_limit)
from .dynamics import (RunConfig, SimulationState, StepContext, Trajectory,
                       make_context, simulate, step_asexual,
                       step_sexual_full, step_sexual_renormalized)
from .harness import (ContrastReport, ContrastSettings, RateFit,
                      SuiteCheck, SuiteReport, SweepPointFailure,
                      SweepRecord, fit_rate, random_mixture, run_contrast,
                      run_sweep, run_validation_suite, sweep_csv)
from .config import HarnessConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "BlowUpError", "ConfigError", "GridMismatchError", "GridTooLargeError",
    "InsufficientSamplesError", "InvalidBoundsError", "NegativityError",
    "NonpositiveValuesError", "NotNormalizedError", "OrderExceededError",
    "OutOfTableError", "TraitLabError", "UnderResolvedError",
    "ZeroMassError",
    "Density", "TraitGrid", "integrate", "make_grid", "normalize",
    "HypothesisReport", "MortalitySpec", "double_well", "eval_m",
    "eval_m_prime", "eval_m_second", "quadratic", "quartic_well",
    "tabulated", "validate_hypotheses",
    "MutationKernel", "SegregationKernel", "apply_T_fast", "apply_T_full",
    "apply_T_reference", "apply_mutation", "make_mutation_kernel",
    "make_segregation_kernel",
    "DecompositionMismatchError", "KernelMoments", "MomentVector",
    "ResidualReport", "TailTruncationWarning", "asexual_moment_residuals",
    "extract_moments", "kernel_even_moment", "make_kernel_moments",
    "moment_ode_residuals", "predict_T_moment", "selection_average",
    "selection_fluxes", "taylor_remainder",
    "ContractionResult", "contraction_check", "wasserstein1",
    "wasserstein2",
    "MeanPath", "RhoLimit", "WindowExitWarning", "gaussian_density",
    "gaussian_profile", "integrate_mean_ode", "rho_limit",
    "RunConfig", "SimulationState", "StepContext", "Trajectory",
    "make_context", "simulate", "step_asexual", "step_sexual_full",
    "step_sexual_renormalized",
    "ContrastReport", "ContrastSettings", "RateFit", "SuiteCheck",
    "SuiteReport", "SweepPointFailure", "SweepRecord", "fit_rate",
    "random_mixture", "run_contrast", "run_sweep", "run_validation_suite",
    "sweep_csv",
    "HarnessConfig", "load_config",
    "__version__",
]
