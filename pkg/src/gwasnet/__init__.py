"""Sparse genetic networks from GWAS summary statistics.

Estimates the precision matrix of true per-variant effect sizes across
traits, correcting the covariance for correlated estimation error (from
overlapping cohorts) and resisting contaminated variants through rank-based
estimation, then selects stable edges via penalized fitting with
cross-validation and stability selection.
"""

__version__ = "0.1.0"

from .covariance import (
    ErrorCovariance,
    GeneticCovariance,
    NullPanel,
    SummaryPanel,
    estimate_error_covariance,
    genetic_correlation,
    mad_scale,
    pearson_covariance,
    reliability_ratio,
    spearman_correlation,
    spearman_covariance,
    spearman_to_pearson,
)
from .matrices import clip_eigenvalues, cov2cor, eigendecompose, spectral_map
from .selection import (
    CovarianceSource,
    SelectionConfig,
    StabilityResult,
    cross_validate_lambda,
    stability_select,
)
from .solver import (
    Penalty,
    PrecisionFit,
    SolverConfig,
    bic_score,
    entropy_loss,
    mcp_prox,
    quadratic_loss,
    soft_threshold,
    solve_penalized_entropy,
)
from .simulation import (
    SimulationDesign,
    build_ar_precision,
    build_overlap_matrix,
    edge_error_rates,
    inject_pleiotropy,
    run_replication,
    simulate_summary_panel,
)
from .stats import chi_square_survival, normal_two_sided_p

__all__ = [
    "__version__",
    "SummaryPanel",
    "NullPanel",
    "ErrorCovariance",
    "GeneticCovariance",
    "estimate_error_covariance",
    "pearson_covariance",
    "spearman_covariance",
    "spearman_correlation",
    "spearman_to_pearson",
    "mad_scale",
    "genetic_correlation",
    "reliability_ratio",
    "clip_eigenvalues",
    "cov2cor",
    "eigendecompose",
    "spectral_map",
    "Penalty",
    "SolverConfig",
    "PrecisionFit",
    "solve_penalized_entropy",
    "entropy_loss",
    "quadratic_loss",
    "mcp_prox",
    "soft_threshold",
    "bic_score",
    "SelectionConfig",
    "CovarianceSource",
    "StabilityResult",
    "cross_validate_lambda",
    "stability_select",
    "SimulationDesign",
    "build_ar_precision",
    "build_overlap_matrix",
    "simulate_summary_panel",
    "inject_pleiotropy",
    "edge_error_rates",
    "run_replication",
    "chi_square_survival",
    "normal_two_sided_p",
]
