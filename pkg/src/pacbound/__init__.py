"""PAC-Bayes generalisation bounds for losses with hypothesis-dependent envelopes."""

__version__ = "0.1.0"

from .core import Dataset, LossKind, LossSpec, empirical_risk, envelope, loss, losses, self_bounding_witness
from .gaussian import IsotropicGaussian, McEstimate, kl_isotropic, mc_expect, sample, sample_truncated
from .bounds import (
    BoundInputs,
    BoundReport,
    GaussianPriorConfig,
    SofteningFn,
    bounded_case_bound,
    gaussian_regression_bound,
    optimal_alpha,
    self_bounding_pac_bayes_bound,
    softened_bound,
    split_prior_bound,
    xi_closed_form_bound,
)
from .optimize import GridSpec, OptimResult, minimize_bound, two_stage_optimize
from .errors import PacBoundError

__all__ = [
    "Dataset", "LossKind", "LossSpec", "empirical_risk", "envelope", "loss", "losses",
    "self_bounding_witness", "IsotropicGaussian", "McEstimate", "kl_isotropic", "mc_expect",
    "sample", "sample_truncated", "BoundInputs", "BoundReport", "GaussianPriorConfig",
    "SofteningFn", "bounded_case_bound", "gaussian_regression_bound", "optimal_alpha",
    "self_bounding_pac_bayes_bound", "softened_bound", "split_prior_bound",
    "xi_closed_form_bound", "GridSpec", "OptimResult", "minimize_bound", "two_stage_optimize",
    "PacBoundError",
]
