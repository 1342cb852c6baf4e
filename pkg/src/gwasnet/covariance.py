"""Genetic covariance and correlation estimation from Z-score panels.

Effect-size covariance is estimated on the Z-score scale by subtracting the
estimation-error covariance (learned from null variants) from a second-moment
estimate. Two second-moment estimators are provided: a plain moment (Pearson)
form, and a rank-plus-MAD (Spearman) form that resists rows contaminated by
outlying effects. Effect sizes are modeled as zero mean, so second moments
are uncentered throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .matrices import as_symmetric, clip_eigenvalues, cov2cor, min_eigenvalue

__all__ = [
    "SummaryPanel",
    "NullPanel",
    "ErrorCovariance",
    "GeneticCovariance",
    "estimate_error_covariance",
    "pearson_covariance",
    "spearman_correlation",
    "spearman_to_pearson",
    "mad_scale",
    "spearman_covariance",
    "genetic_correlation",
    "reliability_ratio",
]

# MAD-to-standard-deviation calibration for normal data, fixed at this
# truncation on purpose so printed results can be checked by hand.
MAD_CONSTANT = 1.483

# Sanity band for error-covariance diagonals estimated from genuine null
# Z-scores (theoretical value 1).
_DIAG_BAND = (0.5, 1.5)

# Iteration cap for the flooring/rescaling alternation in
# genetic_correlation; in practice two passes suffice.
_FLOOR_MAX_PASSES = 50


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SummaryPanel:
    """Z-scores for m independent variants across p traits.

    Parameters
    ----------
    z : numpy.ndarray
        m x p matrix, one row per variant, entries are effect estimate
        divided by its standard error.
    traits : tuple of str
        Trait labels, length p.
    sample_sizes : tuple of int
        Per-trait GWAS sample sizes, length p, all positive.
    """

    z: np.ndarray
    traits: tuple
    sample_sizes: tuple

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 2:
            raise ValueError(f"z must be 2-D, got shape {z.shape}")
        m, p = z.shape
        if m < 2 or p < 2:
            raise ValueError(f"panel needs m >= 2 and p >= 2, got {m} x {p}")
        if not np.all(np.isfinite(z)):
            raise ValueError("panel contains non-finite Z-scores")
        traits = tuple(str(t) for t in self.traits)
        if len(traits) != p:
            raise ValueError(f"expected {p} trait labels, got {len(traits)}")
        sizes = tuple(int(n) for n in self.sample_sizes)
        if len(sizes) != p:
            raise ValueError(f"expected {p} sample sizes, got {len(sizes)}")
        if any(n <= 0 for n in sizes):
            raise ValueError("sample sizes must be positive")
        object.__setattr__(self, "z", _readonly(z))
        object.__setattr__(self, "traits", traits)
        object.__setattr__(self, "sample_sizes", sizes)

    @property
    def m(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    def subset(self, rows) -> "SummaryPanel":
        """Panel restricted to the given variant rows (indices or mask)."""
        return SummaryPanel(self.z[np.asarray(rows)], self.traits, self.sample_sizes)


@dataclass(frozen=True)
class NullPanel:
    """Z-scores of variants insignificant for every trait, M x p with M >= p."""

    b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 2:
            raise ValueError(f"null panel must be 2-D, got shape {b.shape}")
        big_m, p = b.shape
        if big_m < p:
            raise ValueError(
                f"insufficient null variants: need at least p={p} rows, got M={big_m}"
            )
        if not np.all(np.isfinite(b)):
            raise ValueError("null panel contains non-finite entries")
        object.__setattr__(self, "b", _readonly(b))

    @property
    def count(self) -> int:
        return self.b.shape[0]

    @property
    def p(self) -> int:
        return self.b.shape[1]


@dataclass(frozen=True)
class ErrorCovariance:
    """Estimation-error covariance on the Z-score scale (theoretical unit diagonal)."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "matrix", _readonly(as_symmetric(self.matrix, "error covariance"))
        )

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class GeneticCovariance:
    """Genetic covariance (or correlation, once floored and rescaled).

    ``estimator_kind`` records which second-moment estimator produced the
    matrix; ``floor_applied`` is set once eigenvalue flooring and correlation
    rescaling have run.
    """

    matrix: np.ndarray
    estimator_kind: str
    floor_applied: bool = False

    def __post_init__(self):
        kind = str(self.estimator_kind).lower()
        if kind not in ("pearson", "spearman"):
            raise ValueError(f"unknown estimator kind {self.estimator_kind!r}")
        object.__setattr__(
            self, "matrix", _readonly(as_symmetric(self.matrix, "genetic covariance"))
        )
        object.__setattr__(self, "estimator_kind", kind)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


def estimate_error_covariance(nulls: NullPanel) -> ErrorCovariance:
    """Average outer product of null-variant Z-score rows.

    The result estimates the covariance of the estimation errors, including
    the cross-trait correlation induced by overlapping cohorts. Warns when a
    diagonal entry falls outside the (0.5, 1.5) sanity band expected of
    genuine null Z-scores.
    """
    b = nulls.b
    mat = b.T @ b / nulls.count
    mat = 0.5 * (mat + mat.T)
    d = np.diag(mat)
    if (d <= _DIAG_BAND[0]).any() or (d >= _DIAG_BAND[1]).any():
        k = int(np.nonzero((d <= _DIAG_BAND[0]) | (d >= _DIAG_BAND[1]))[0][0])
        warnings.warn(
            f"error-covariance diagonal entry {k} is {d[k]:.3g}, outside the "
            f"null sanity band {_DIAG_BAND}; check the null screen",
            stacklevel=2,
        )
    return ErrorCovariance(mat)


def _canonical_row_order(z: np.ndarray) -> np.ndarray:
    # Sort rows lexicographically so accumulation order, and therefore the
    # floating-point result, is independent of input row order.
    return np.lexsort(z.T)


def pearson_covariance(panel: SummaryPanel, err: ErrorCovariance) -> GeneticCovariance:
    """Moment estimate of genetic covariance: mean outer product minus error.

    Uses uncentered second moments (effects are modeled as zero mean). Rows
    are accumulated in a canonical order, making the output exactly invariant
    to row permutations of the panel. The result may be indefinite; flooring
    happens in :func:`genetic_correlation`.
    """
    if err.p != panel.p:
        raise ValueError(f"panel has p={panel.p} but error covariance has p={err.p}")
    zs = panel.z[_canonical_row_order(panel.z)]
    second = zs.T @ zs / panel.m
    mat = 0.5 * (second + second.T) - err.matrix
    return GeneticCovariance(0.5 * (mat + mat.T), "pearson", floor_applied=False)


def _column_ranks(z: np.ndarray) -> np.ndarray:
    # Midranks within each column; ties get the average rank.
    return rankdata(z, method="average", axis=0)


def spearman_to_pearson(rho):
    """Map rank correlation to the linear correlation of a bivariate normal.

    Applies 2*sin(pi*rho/6) elementwise. The endpoints are pinned so that
    rho = +-1 maps to exactly +-1.0 despite the rounding of sin(pi/6).
    """
    arr = np.asarray(rho, dtype=float)
    if (np.abs(arr) > 1.0 + 1e-9).any():
        raise ValueError("rank correlations must lie in [-1, 1]")
    arr = np.clip(arr, -1.0, 1.0)
    out = 2.0 * np.sin(np.pi * arr / 6.0)
    out = np.where(arr == 1.0, 1.0, out)
    out = np.where(arr == -1.0, -1.0, out)
    if np.isscalar(rho) or np.ndim(rho) == 0:
        return float(out)
    return out


def _rank_correlation(z: np.ndarray, traits) -> np.ndarray:
    ranks = _column_ranks(z)
    m = z.shape[0]
    centered = ranks - 0.5 * (m + 1)
    norms_sq = (centered * centered).sum(axis=0)
    degenerate = norms_sq == 0.0
    if degenerate.any():
        k = int(np.nonzero(degenerate)[0][0])
        raise ValueError(
            f"column for trait {traits[k]!r} is constant; rank correlation undefined"
        )
    norms = np.sqrt(norms_sq)
    rho = (centered.T @ centered) / np.outer(norms, norms)
    rho = np.clip(0.5 * (rho + rho.T), -1.0, 1.0)
    # Pin monotone-identical and monotone-reversed columns to exact +-1, which
    # the normalized dot product can miss by one ulp.
    p = z.shape[1]
    for k in range(p):
        for s in range(k + 1, p):
            if np.array_equal(centered[:, k], centered[:, s]):
                rho[k, s] = rho[s, k] = 1.0
            elif np.array_equal(centered[:, k], -centered[:, s]):
                rho[k, s] = rho[s, k] = -1.0
    np.fill_diagonal(rho, 1.0)
    return rho


def spearman_correlation(panel: SummaryPanel) -> np.ndarray:
    """Rank-based correlation matrix mapped back to the linear scale.

    Computes midrank (Spearman) correlations between all trait columns and
    applies the 2*sin(pi*rho/6) transform. Requires m >= 3 rows; a constant
    column raises with the offending trait named.
    """
    if panel.m < 3:
        raise ValueError(f"rank correlation needs m >= 3 rows, got {panel.m}")
    rho = _rank_correlation(panel.z, panel.traits)
    out = spearman_to_pearson(rho)
    np.fill_diagonal(out, 1.0)
    return out


def mad_scale(x) -> float:
    """Robust scale estimate: 1.483 times the median absolute deviation.

    The median of an even-length vector is the midpoint of the two central
    order statistics. Returns 0.0 for a constant vector.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("mad_scale expects a 1-D vector with at least 2 entries")
    if not np.all(np.isfinite(x)):
        raise ValueError("mad_scale input contains non-finite entries")
    med = np.median(x)
    return MAD_CONSTANT * float(np.median(np.abs(x - med)))


def spearman_covariance(panel: SummaryPanel, err: ErrorCovariance) -> GeneticCovariance:
    """Robust covariance estimate: MAD scales around rank correlations.

    Forms D * R * D - err where R is :func:`spearman_correlation` and D is
    the diagonal of per-trait MAD scales, so outlying rows influence neither
    the correlation nor the scale estimates.
    """
    if err.p != panel.p:
        raise ValueError(f"panel has p={panel.p} but error covariance has p={err.p}")
    corr = spearman_correlation(panel)
    scales = np.array([mad_scale(panel.z[:, k]) for k in range(panel.p)])
    mat = corr * np.outer(scales, scales) - err.matrix
    return GeneticCovariance(0.5 * (mat + mat.T), "spearman", floor_applied=False)


def genetic_correlation(cov: GeneticCovariance, floor: float) -> GeneticCovariance:
    """Floor the spectrum and rescale to a correlation matrix.

    Eigenvalues are raised to at least ``floor`` and the result converted to
    a correlation matrix. Because rescaling can push the smallest eigenvalue
    back below the floor, the two steps alternate until both the unit
    diagonal and the spectral floor hold; the first pass is the common case.
    """
    if not floor > 0:
        raise ValueError(f"floor must be positive, got {floor!r}")
    out = cov2cor(clip_eigenvalues(cov.matrix, floor))
    for _ in range(_FLOOR_MAX_PASSES):
        if min_eigenvalue(out) >= floor - 1e-10:
            return GeneticCovariance(out, cov.estimator_kind, floor_applied=True)
        out = cov2cor(clip_eigenvalues(out, floor))
    raise RuntimeError(
        "could not reach a correlation matrix with the requested spectral floor"
    )


def reliability_ratio(panel: SummaryPanel) -> np.ndarray:
    """Per-trait fraction of Z-score variation beyond the null expectation.

    Computes sum(z^2 - 1) / sum(z^2) for each trait column. Always at most 1;
    negative values indicate less variation than pure noise would give.
    """
    totals = (panel.z ** 2).sum(axis=0)
    if (totals == 0.0).any():
        k = int(np.nonzero(totals == 0.0)[0][0])
        raise ValueError(
            f"trait {panel.traits[k]!r} has all-zero Z-scores; ratio undefined"
        )
    return (totals - panel.m) / totals
