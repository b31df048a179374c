"""Cost-weighted multi-objective knowledge-gradient Bayesian optimization."""

from .acquisition import AcquisitionResult, OptimizerConfig, maximize_acquisition, maximize_posterior_mean
from .gp import (FactorizationError, InvalidParameterError, KernelSpec, NoiseModel, ObservationRecord,
                 PosteriorState, condition, fantasy_affine, matern52, posterior_mean_cov, standardize)
from .hyperfit import FitConfig, GammaPrior, family_priors, fit_map, gamma_log_pdf
from .kg import (cmokg, cmokg_expectation, epigraph, expected_max_affine, mokg_discrete, mokg_joint_benchmark,
                 residual_uncertainty_mc)
from .loop import RunConfig, RunSeeds, RunTrace, initial_design, run_bo, run_experiment
from .metrics import RegretReport, bayesian_regret, r2_indicator
from .pareto import Nsga2Config, ParetoArchive, crowding_distance, non_dominated_filter, nsga2_maximize
from .problems import SyntheticProblem, evaluate, generate_problem
from .scalarize import SobolStream, linear_scalarize, simplex_from_cube, sobol_next

__version__ = "0.1.0"
