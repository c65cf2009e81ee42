"""Rough-volatility toolkit: Volterra blow-up bounds, exact Gaussian paths and Monte Carlo diagnostics."""

__version__ = "0.1.0"

from .errors import DataError, DomainError, FracVolError, InfeasibleError, NumericalError
from .model_core import (Constant, Exponential, ModelParams, Power, PowerKernel, Zeta,
                         continuity_modulus, covariance_matrix_YY, covariance_YY, cross_cov_YW,
                         dudley_diagnostic, eval_kernel, eval_sigma, osgood_check,
                         variance_Y, variance_Y_quadrature)
from .volterra import (AffineForcing, SampledForcing, VolterraProblem, blowup_refinement,
                       check_comparison, explosion_bound, explosion_bound_geometric,
                       solve_volterra)
from .gauss_path import (Grid, build_joint_factor, cameron_martin_map, convolve_drift,
                         corridor_probability, sample_joint_paths)
from .stats import MCResult, wilson_interval
from .sde_mc import (ControlConfig, MCConfig, boue_dupuis_lower_bound, boue_dupuis_payoffs,
                     choose_gamma, conditional_price_estimator, drifted_volterra_paths,
                     hit_probabilities, martingale_defect, price_estimator,
                     simulate_price_paths, truncated_moment)
