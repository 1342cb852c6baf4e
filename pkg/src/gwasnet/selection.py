"""Two-stage tuning: subsampled cross-validation, then stability selection.

Both stages resample variant rows (the exchangeable units of the covariance
estimators) and re-run the full covariance pipeline, error subtraction and
flooring included, on every subsample. The error covariance itself comes
from the null panel, which is not subsampled, so it is estimated once and
reused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .covariance import (
    ErrorCovariance,
    SummaryPanel,
    genetic_correlation,
    pearson_covariance,
    spearman_covariance,
)
from .matrices import clip_eigenvalues, min_eigenvalue
from .solver import (
    Penalty,
    PrecisionFit,
    SolverConfig,
    entropy_loss,
    penalized_objective,
    solve_penalized_entropy,
    support_of,
)

__all__ = [
    "SelectionConfig",
    "CovarianceSource",
    "StabilityResult",
    "cross_validate_lambda",
    "prune_by_frequency",
    "stability_select",
]

# Stream tags keep the cross-validation and stability subsample index draws
# on disjoint generator streams derived from the one user seed.
_CV_STREAM = 101
_STABILITY_STREAM = 202


@dataclass(frozen=True)
class SelectionConfig:
    """Tuning controls shared by both stages.

    lambda_grid must be ascending, all values inside (0, 2). subsamples is
    the stability-stage count H; cv_splits optionally uses a different count
    for the cross-validation stage (defaults to H). The seed is mandatory:
    all subsample draws derive from it.
    """

    lambda_grid: tuple
    seed: int
    subsamples: int = 100
    subsample_fraction: float = 0.5
    stability_threshold: float = 0.95
    cv_splits: int = None

    def __post_init__(self):
        grid = tuple(float(v) for v in self.lambda_grid)
        if len(grid) == 0:
            raise ValueError("lambda grid must be non-empty")
        if any(not 0 < v < 2 for v in grid):
            raise ValueError("lambda grid values must lie in (0, 2)")
        if any(a >= b for a, b in zip(grid, grid[1:])):
            raise ValueError("lambda grid must be strictly ascending")
        if self.subsamples < 1:
            raise ValueError("subsamples must be at least 1")
        if not 0 < self.subsample_fraction < 1:
            raise ValueError("subsample fraction must lie in (0, 1)")
        if not 0.5 <= self.stability_threshold < 1:
            raise ValueError("stability threshold must lie in [0.5, 1)")
        splits = self.subsamples if self.cv_splits is None else int(self.cv_splits)
        if splits < 1:
            raise ValueError("cv_splits must be at least 1")
        object.__setattr__(self, "lambda_grid", grid)
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "cv_splits", splits)


@dataclass(frozen=True)
class CovarianceSource:
    """Floored genetic correlation recomputed from any subset of variant rows.

    estimator_kind selects the second-moment estimator; the stored error
    covariance is subtracted as-is (pass a zero matrix for an uncorrected
    baseline). floor is the spectral floor applied before rescaling.
    """

    panel: SummaryPanel
    error: ErrorCovariance
    estimator_kind: str
    floor: float = 0.05

    def __post_init__(self):
        kind = str(self.estimator_kind).lower()
        if kind not in ("pearson", "spearman"):
            raise ValueError(f"unknown estimator kind {self.estimator_kind!r}")
        if self.error.p != self.panel.p:
            raise ValueError("panel and error covariance disagree on p")
        if not self.floor > 0:
            raise ValueError("floor must be positive")
        object.__setattr__(self, "estimator_kind", kind)

    @property
    def m(self) -> int:
        return self.panel.m

    @property
    def p(self) -> int:
        return self.panel.p

    def sigma(self, rows=None) -> np.ndarray:
        """Correlation matrix from the given rows (all rows when None)."""
        panel = self.panel if rows is None else self.panel.subset(rows)
        if self.estimator_kind == "pearson":
            cov = pearson_covariance(panel, self.error)
        else:
            cov = spearman_covariance(panel, self.error)
        return genetic_correlation(cov, self.floor).matrix


def _subsample_indices(m: int, k: int, seed: int, stream: int, h: int):
    rng = np.random.default_rng([seed, stream, h])
    idx = rng.choice(m, size=k, replace=False)
    idx.sort()
    return idx


def cross_validate_lambda(
    source: CovarianceSource,
    config: SelectionConfig,
    penalty_family: str = "mcp",
    penalty_gamma: float = 3.0,
    admm: SolverConfig = SolverConfig(),
    split_hook=None,
):
    """Pick the penalty level by subsampled cross-validation.

    For each split, a fraction of the variant rows forms the train set and
    the complement the test set; the training fit at each grid value is
    scored by the entropy loss against the test-set correlation matrix.
    Scores are averaged over splits and the argmin returned, ties resolved
    to the smallest grid value.

    Parameters
    ----------
    split_hook : callable, optional
        Diagnostics override mapping a split index to (train_rows,
        test_rows); replaces the seeded subsample draw.

    Returns
    -------
    (float, numpy.ndarray)
        The chosen penalty level and the score table, one row per grid
        value: (lambda, mean_cve, sd_cve).
    """
    m = source.m
    if m < 10:
        raise ValueError(f"need at least 10 variant rows to cross-validate, got {m}")
    grid = config.lambda_grid
    splits = config.cv_splits
    k = int(math.floor(config.subsample_fraction * m))
    scores = np.empty((splits, len(grid)))
    all_rows = np.arange(m)
    for h in range(splits):
        if split_hook is None:
            train = _subsample_indices(m, k, config.seed, _CV_STREAM, h)
            test = np.setdiff1d(all_rows, train, assume_unique=True)
        else:
            train, test = split_hook(h)
        sigma_train = source.sigma(train)
        sigma_test = source.sigma(test)
        warm = None
        for i, lam in enumerate(grid):
            fit = solve_penalized_entropy(
                sigma_train,
                Penalty(penalty_family, lam, penalty_gamma),
                admm,
                warm_start=warm,
            )
            warm = clip_eigenvalues(fit.precision, admm.delta)
            try:
                scores[h, i] = entropy_loss(sigma_test, fit.precision)
            except ValueError:
                # Estimate not positive definite on this split; treat the
                # grid value as unusable rather than aborting the stage.
                scores[h, i] = math.inf
    mean = scores.mean(axis=0)
    if splits > 1:
        sd = scores.std(axis=0, ddof=1)
        sd = np.where(np.isfinite(sd), sd, math.inf)
    else:
        sd = np.zeros(len(grid))
    table = np.column_stack([np.asarray(grid), mean, sd])
    best = int(np.argmin(mean))
    return float(grid[best]), table


def prune_by_frequency(
    fit: PrecisionFit,
    frequencies: np.ndarray,
    threshold: float,
    delta: float,
) -> np.ndarray:
    """Zero the off-diagonal entries whose selection frequency is below threshold.

    If zeroing breaks positive definiteness, the spectrum is floored at
    ``delta`` and the zeros re-imposed, alternating until both hold; the
    final step is always a zeroing, so the returned support never exceeds
    the frequency threshold.
    """
    pruned = fit.precision.copy()
    p = pruned.shape[0]
    low = (frequencies < threshold) & ~np.eye(p, dtype=bool)
    for _ in range(50):
        pruned[low] = 0.0
        if min_eigenvalue(pruned) > 0:
            return pruned
        pruned = clip_eigenvalues(pruned, delta)
    raise RuntimeError("pruned estimate could not be restored to positive definite")


@dataclass(frozen=True)
class StabilityResult:
    """Outcome of stability selection.

    frequencies holds the fraction of subsample fits selecting each edge
    (diagonal fixed at 1); pvalues is exactly 1 - frequencies. pruned_fit is
    the full-data fit with unstable edges zeroed.
    """

    lambda_cv: float
    frequencies: np.ndarray
    pruned_fit: PrecisionFit
    pvalues: np.ndarray


def stability_select(
    source: CovarianceSource,
    lambda_cv: float,
    config: SelectionConfig,
    penalty_family: str = "mcp",
    penalty_gamma: float = 3.0,
    admm: SolverConfig = SolverConfig(),
) -> StabilityResult:
    """Prune edges that are unstable across subsample refits.

    Fits the chosen penalty level on H seeded subsamples (streams disjoint
    from the cross-validation draws), counts how often each off-diagonal
    entry is nonzero, and zeroes full-data entries selected less often than
    the configured threshold.
    """
    m, p = source.m, source.p
    k = int(math.floor(config.subsample_fraction * m))
    penalty = Penalty(penalty_family, lambda_cv, penalty_gamma)
    counts = np.zeros((p, p))
    for h in range(config.subsamples):
        rows = _subsample_indices(m, k, config.seed, _STABILITY_STREAM, h)
        fit = solve_penalized_entropy(source.sigma(rows), penalty, admm)
        counts += fit.precision != 0.0
    frequencies = counts / config.subsamples
    np.fill_diagonal(frequencies, 1.0)
    full_fit = solve_penalized_entropy(source.sigma(None), penalty, admm)
    pruned = prune_by_frequency(
        full_fit, frequencies, config.stability_threshold, admm.delta
    )
    pruned_fit = PrecisionFit(
        precision=pruned,
        support=support_of(pruned),
        converged=full_fit.converged,
        iterations=full_fit.iterations,
        objective=penalized_objective(source.sigma(None), pruned, penalty),
        primal_history=full_fit.primal_history,
    )
    return StabilityResult(
        lambda_cv=float(lambda_cv),
        frequencies=frequencies,
        pruned_fit=pruned_fit,
        pvalues=1.0 - frequencies,
    )
