"""Model-robust linear regression.

Estimates the least-squares linear trend of an unknown mean function with
classical OLS standard errors, the HC0 sandwich, and Bayesian robust
posteriors for discrete and continuous covariates under random or fixed
covariate sampling.
"""

from .classic import (
    FitResult,
    ci95,
    cov_model_based,
    cov_sandwich_fixed_groups,
    cov_sandwich_hc0,
    fit_classic,
    fit_ols,
)
from .continuous import posterior_beta_continuous
from .dataset import Dataset
from .discrete import (
    GroupedData,
    group_by_covariate,
    posterior_beta_fixed_x_closed,
    posterior_beta_fixed_x_mc,
    posterior_beta_random_x,
)
from .mcmc import MCMCConfig, SplineChain, mcmc_fit
from .posterior import PosteriorSummary
from .splines import BasisSpec, build_basis
from .stochastics import RngStream

__all__ = [
    "BasisSpec",
    "Dataset",
    "FitResult",
    "GroupedData",
    "MCMCConfig",
    "PosteriorSummary",
    "RngStream",
    "SplineChain",
    "build_basis",
    "ci95",
    "cov_model_based",
    "cov_sandwich_fixed_groups",
    "cov_sandwich_hc0",
    "fit_classic",
    "fit_ols",
    "group_by_covariate",
    "mcmc_fit",
    "posterior_beta_continuous",
    "posterior_beta_fixed_x_closed",
    "posterior_beta_fixed_x_mc",
    "posterior_beta_random_x",
]
