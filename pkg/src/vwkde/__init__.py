"""Variationally weighted kernel density estimation.

Density-ratio, posterior, and KL divergence estimation with weighted KDEs
whose per-sample weights are optimized to cancel the leading-order ratio
bias, plus a seeded benchmark harness and an unsupervised surface-inspection
pipeline built on the KL detector.
"""

from .core import (
    Dataset,
    GaussianModel,
    SeedSpec,
    fit_gaussian,
    gaussian_kl_closed_form,
    load_dataset_csv,
    make_gaussian,
    sample_gaussian,
    sample_mixture,
    save_dataset_csv,
)
from .estimators import (
    KlResult,
    RatioEstimator,
    kl_estimate,
    kl_estimate_grid,
    lpdr_at,
    posterior_at,
)
from .kde import (
    KernelSpec,
    WeightedKde,
    default_bandwidth_grid,
    kde_eval,
    kde_loo_eval,
    kernel_eval,
    loo_log_likelihood,
    select_bandwidth,
)
from .scores import (
    GaussianScoreField,
    PairScores,
    ScoreField,
    gaussian_laplacian_ratio,
    gaussian_score,
    pair_g,
    pair_h,
)
from .weight import (
    AlphaFunction,
    AnalyticHomoscedasticAlpha,
    ConstantAlpha,
    RkhsLogAlpha,
    alpha_grad_log,
    analytic_alpha,
    el_residual,
    fit_rkhs_alpha,
    load_rkhs_alpha,
    pointwise_bias,
    save_rkhs_alpha,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "GaussianModel",
    "SeedSpec",
    "fit_gaussian",
    "gaussian_kl_closed_form",
    "load_dataset_csv",
    "make_gaussian",
    "sample_gaussian",
    "sample_mixture",
    "save_dataset_csv",
    "KernelSpec",
    "WeightedKde",
    "default_bandwidth_grid",
    "kde_eval",
    "kde_loo_eval",
    "kernel_eval",
    "loo_log_likelihood",
    "select_bandwidth",
    "GaussianScoreField",
    "PairScores",
    "ScoreField",
    "gaussian_laplacian_ratio",
    "gaussian_score",
    "pair_g",
    "pair_h",
    "AlphaFunction",
    "AnalyticHomoscedasticAlpha",
    "ConstantAlpha",
    "RkhsLogAlpha",
    "alpha_grad_log",
    "analytic_alpha",
    "el_residual",
    "fit_rkhs_alpha",
    "load_rkhs_alpha",
    "pointwise_bias",
    "save_rkhs_alpha",
    "KlResult",
    "RatioEstimator",
    "kl_estimate",
    "kl_estimate_grid",
    "lpdr_at",
    "posterior_at",
]
