"""End-to-end analysis: screens, estimation, tuning, and report files.

Stages run in a fixed order: parse, align, null screening, error-covariance
estimation, joint significance screening, distance pruning, covariance
estimation, cross-validation, stability selection, output writing. Every
stage logs its variant counts. Outputs contain no timestamps or machine
state, so identical inputs, configuration and seed reproduce identical
bytes.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .covariance import (
    ErrorCovariance,
    NullPanel,
    SummaryPanel,
    estimate_error_covariance,
    reliability_ratio,
)
from .gwasio import AlignedStudy, DataError, align_traits, parse_gwas_file
from .matrices import clip_eigenvalues, cov2cor
from .selection import (
    CovarianceSource,
    SelectionConfig,
    StabilityResult,
    cross_validate_lambda,
    stability_select,
)
from .solver import PrecisionFit, SolverConfig
from .stats import chi_square_survival, normal_two_sided_p

__all__ = [
    "AnalysisConfig",
    "ValidationError",
    "PipelineResult",
    "screen_null_variants",
    "joint_chisq_screen",
    "distance_prune",
    "run_pipeline",
    "run_cv_table",
    "compute_reliability",
    "emit_network",
    "read_matrix_document",
]

logger = logging.getLogger(__name__)

_DEFAULT_LAMBDA_GRID = (0.02, 0.04, 0.07, 0.12, 0.2, 0.32, 0.5, 0.8, 1.2, 1.8)


class ValidationError(Exception):
    """Raised for unusable configuration, before any data is read."""


@dataclass(frozen=True)
class AnalysisConfig:
    """Settings for one analysis run; flags and config-file keys mirror these names."""

    trait_files: tuple
    output_dir: str
    seed: int
    trait_labels: tuple = None
    null_p_threshold: float = 0.05
    joint_p_threshold: float = 5e-8
    prune_window_bp: int = 1_000_000
    estimator: str = "spearman"
    penalty_family: str = "mcp"
    penalty_gamma: float = 3.0
    lambda_grid: tuple = _DEFAULT_LAMBDA_GRID
    sigma_floor: float = 0.05
    psi: float = 0.1
    delta: float = 0.01
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    max_iter: int = 5000
    gamma_update_scaling: str = "div-psi"
    subsamples: int = 100
    cv_splits: int = None
    subsample_fraction: float = 0.5
    stability_threshold: float = 0.95
    strict: bool = False

    def __post_init__(self):
        files = tuple(str(f) for f in self.trait_files)
        if len(files) < 2:
            raise ValidationError("at least two trait files are required")
        object.__setattr__(self, "trait_files", files)
        if self.trait_labels is None:
            labels = tuple(
                os.path.splitext(os.path.basename(f))[0] for f in files
            )
        else:
            labels = tuple(str(t) for t in self.trait_labels)
        if len(labels) != len(files):
            raise ValidationError("one label per trait file is required")
        if len(set(labels)) != len(labels):
            raise ValidationError("trait labels must be unique")
        object.__setattr__(self, "trait_labels", labels)
        for name in ("null_p_threshold", "joint_p_threshold"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValidationError(f"{name} must lie in (0, 1), got {v!r}")
        if not self.prune_window_bp > 0:
            raise ValidationError("prune_window_bp must be positive")
        if self.estimator not in ("pearson", "spearman"):
            raise ValidationError(f"unknown estimator {self.estimator!r}")
        if not self.sigma_floor > 0:
            raise ValidationError("sigma_floor must be positive")
        try:
            self.solver_config()
            self.selection_config()
        except ValueError as exc:
            raise ValidationError(str(exc)) from None

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            psi=self.psi,
            delta=self.delta,
            tol_primal=self.tol_primal,
            tol_dual=self.tol_dual,
            max_iter=self.max_iter,
            gamma_update_scaling=self.gamma_update_scaling,
        )

    def selection_config(self) -> SelectionConfig:
        return SelectionConfig(
            lambda_grid=tuple(self.lambda_grid),
            seed=self.seed,
            subsamples=self.subsamples,
            subsample_fraction=self.subsample_fraction,
            stability_threshold=self.stability_threshold,
            cv_splits=self.cv_splits,
        )


@dataclass(frozen=True)
class PipelineResult:
    """Everything a caller needs after a run, including output paths."""

    stability: StabilityResult
    correlation: np.ndarray
    labels: tuple
    counts: dict
    cve_table: np.ndarray
    converged: bool
    output_paths: dict


def screen_null_variants(study: AlignedStudy, threshold: float):
    """Split aligned variants into a null panel and analysis candidates.

    A variant is null when its two-sided p-value exceeds the threshold for
    every trait. Returns the null panel and the integer indices of the
    remaining candidate rows; the two sets partition the aligned panel.
    """
    pvals = normal_two_sided_p(study.panel.z)
    null_mask = (pvals > threshold).all(axis=1)
    null_idx = np.nonzero(null_mask)[0]
    candidate_idx = np.nonzero(~null_mask)[0]
    if len(null_idx) < study.panel.p:
        raise DataError(
            f"only {len(null_idx)} null variants for p={study.panel.p} traits; "
            "cannot estimate the error covariance"
        )
    if np.intersect1d(null_idx, candidate_idx).size:
        raise AssertionError("null and candidate variant sets overlap")
    return NullPanel(study.panel.z[null_idx]), candidate_idx


def joint_chisq_screen(panel: SummaryPanel, err: ErrorCovariance, threshold: float):
    """Score each variant jointly across traits and keep the significant ones.

    The statistic is z' R^{-1} z with R the correlation form of the error
    covariance (spectrum floored first so the solve is defined); p-values
    come from the chi-square distribution with p degrees of freedom. Returns
    (statistics, pvalues, keep_mask) with keep_mask true where the p-value
    is below the threshold.
    """
    corr = cov2cor(clip_eigenvalues(err.matrix, 1e-8))
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        raise DataError("error-correlation matrix is singular after flooring") from None
    half = np.linalg.solve(chol, panel.z.T)
    stats = (half * half).sum(axis=0)
    pvals = chi_square_survival(stats, df=panel.p)
    return stats, pvals, pvals < threshold


def distance_prune(chromosomes, positions, pvalues, window_bp: int) -> np.ndarray:
    """Greedy position-based pruning toward independent variants.

    Visits variants by ascending p-value (ties keep input order) and keeps
    one only when no already-kept variant on the same chromosome lies within
    window_bp. Returns kept indices in ascending input order.
    """
    positions = np.asarray(positions, dtype=np.int64)
    pvalues = np.asarray(pvalues, dtype=float)
    kept = []
    kept_by_chrom = {}
    for idx in np.argsort(pvalues, kind="stable"):
        chrom = chromosomes[idx]
        taken = kept_by_chrom.setdefault(chrom, [])
        pos = positions[idx]
        if all(abs(pos - q) > window_bp for q in taken):
            taken.append(pos)
            kept.append(idx)
    return np.array(sorted(kept), dtype=int)


def _stage(counts: dict, name: str, value: int) -> None:
    counts[name] = int(value)
    logger.info("%s: %d", name, value)


def _prepare_study(config: AnalysisConfig) -> AlignedStudy:
    record_lists = []
    for path in config.trait_files:
        try:
            records = parse_gwas_file(path)
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from None
        record_lists.append(records)
    return align_traits(record_lists, config.trait_labels), record_lists


def _screened_source(config: AnalysisConfig, counts: dict):
    study, record_lists = _prepare_study(config)
    for label, records in zip(config.trait_labels, record_lists):
        _stage(counts, f"parsed_{label}", len(records))
    _stage(counts, "aligned", study.panel.m)
    _stage(counts, "dropped_alleles", study.dropped_alleles)

    nulls, candidate_idx = screen_null_variants(study, config.null_p_threshold)
    _stage(counts, "null_variants", nulls.count)
    _stage(counts, "candidates", len(candidate_idx))
    err = estimate_error_covariance(nulls)

    if len(candidate_idx) < 2:
        raise DataError("fewer than 2 variants are significant for any trait")
    candidates = study.panel.subset(candidate_idx)
    stats, pvals, keep = joint_chisq_screen(candidates, err, config.joint_p_threshold)
    sig_idx = candidate_idx[keep]
    _stage(counts, "joint_significant", len(sig_idx))
    if len(sig_idx) < 2:
        raise DataError("fewer than 2 variants pass the joint significance screen")

    sig_pvals = pvals[keep]
    chroms = [study.chromosomes[i] for i in sig_idx]
    pos = [study.positions[i] for i in sig_idx]
    kept_local = distance_prune(chroms, pos, sig_pvals, config.prune_window_bp)
    final_idx = sig_idx[kept_local]
    _stage(counts, "pruned", len(sig_idx) - len(final_idx))
    _stage(counts, "final_variants", len(final_idx))
    if len(final_idx) < 10:
        raise DataError(
            f"only {len(final_idx)} variants survive screening; "
            "at least 10 are needed for cross-validation"
        )
    panel = study.panel.subset(final_idx)
    source = CovarianceSource(panel, err, config.estimator, floor=config.sigma_floor)
    return source


def run_cv_table(config: AnalysisConfig):
    """Run the pipeline through cross-validation and return (lambda, table)."""
    counts = {}
    source = _screened_source(config, counts)
    lam, table = cross_validate_lambda(
        source,
        config.selection_config(),
        config.penalty_family,
        config.penalty_gamma,
        config.solver_config(),
    )
    return lam, table, counts


def compute_reliability(config: AnalysisConfig):
    """Per-trait reliability ratios over the full aligned panel."""
    study, _ = _prepare_study(config)
    return config.trait_labels, reliability_ratio(study.panel)


def run_pipeline(config: AnalysisConfig) -> PipelineResult:
    """Execute every stage and write the report files.

    Returns the in-memory results alongside the output paths. Solver
    non-convergence is reported through the ``converged`` flag (the caller
    decides whether that is fatal); outputs are written either way.
    """
    counts = {}
    source = _screened_source(config, counts)
    selection = config.selection_config()
    solver = config.solver_config()
    lam, table = cross_validate_lambda(
        source, selection, config.penalty_family, config.penalty_gamma, solver
    )
    logger.info("cross-validated penalty level: %g", lam)
    result = stability_select(
        source, lam, selection, config.penalty_family, config.penalty_gamma, solver
    )
    correlation = source.sigma(None)
    if not result.pruned_fit.converged:
        logger.warning("solver did not converge on the full data")
    paths = emit_network(
        result,
        result.pruned_fit,
        correlation,
        config.trait_labels,
        config.output_dir,
        counts=counts,
        config=config,
        cve_table=table,
    )
    return PipelineResult(
        stability=result,
        correlation=correlation,
        labels=config.trait_labels,
        counts=counts,
        cve_table=table,
        converged=result.pruned_fit.converged,
        output_paths=paths,
    )


def _format_full(value: float) -> str:
    return f"{value:.17g}"


def _format_short(value: float) -> str:
    return f"{value:.6g}"


def _write_matrix(fh, name: str, matrix: np.ndarray) -> None:
    fh.write(f"# {name}\n")
    for row in matrix:
        fh.write("\t".join(_format_full(v) for v in row) + "\n")


def read_matrix_document(path) -> dict:
    """Parse a matrix document back into named sections.

    Numeric sections come back as float arrays at full precision; the
    leading trait-label section comes back as a list of strings.
    """
    out = {}

    def flush(name, rows):
        if name is None:
            return
        try:
            out[name] = np.array(
                [[float(v) for v in row] for row in rows], dtype=float
            )
        except ValueError:
            out[name] = [v for row in rows for v in row]

    name = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# "):
                flush(name, rows)
                name = line[2:]
                rows = []
            else:
                rows.append(line.split("\t"))
    flush(name, rows)
    return out


def emit_network(
    result: StabilityResult,
    fit: PrecisionFit,
    correlation: np.ndarray,
    labels,
    output_dir,
    *,
    counts=None,
    config: AnalysisConfig = None,
    cve_table: np.ndarray = None,
) -> dict:
    """Write the edge list, matrix document, run metadata, and score table.

    Edge rows cover the unordered pairs in the pruned support, each with the
    partial correlation -theta_ks / sqrt(theta_kk * theta_ss), the precision
    entry (full precision, matching the matrix document exactly), the
    selection frequency, and the empirical p-value. Short numeric columns
    use 6 significant digits.
    """
    os.makedirs(output_dir, exist_ok=True)
    prec = fit.precision
    paths = {
        "edges": os.path.join(output_dir, "edges.tsv"),
        "matrices": os.path.join(output_dir, "matrices.txt"),
        "metadata": os.path.join(output_dir, "run_metadata.txt"),
        "cve": os.path.join(output_dir, "cve.tsv"),
    }

    with open(paths["edges"], "w", encoding="utf-8") as fh:
        fh.write(
            "trait_a\ttrait_b\tpartial_corr\tprecision_entry\t"
            "selection_freq\tempirical_p\n"
        )
        for k, s in sorted(fit.support):
            partial = -prec[k, s] / math.sqrt(prec[k, k] * prec[s, s])
            fh.write(
                "\t".join(
                    [
                        labels[k],
                        labels[s],
                        _format_short(partial),
                        _format_full(prec[k, s]),
                        _format_short(result.frequencies[k, s]),
                        _format_short(result.pvalues[k, s]),
                    ]
                )
                + "\n"
            )

    with open(paths["matrices"], "w", encoding="utf-8") as fh:
        fh.write("# traits\n")
        fh.write("\t".join(labels) + "\n")
        _write_matrix(fh, "genetic_correlation", correlation)
        _write_matrix(fh, "precision", prec)
        _write_matrix(fh, "frequencies", result.frequencies)

    with open(paths["metadata"], "w", encoding="utf-8") as fh:
        fh.write(f"tool=gwasnet {__version__}\n")
        if config is not None:
            for f in fields(config):
                value = getattr(config, f.name)
                if isinstance(value, tuple):
                    value = ",".join(str(v) for v in value)
                fh.write(f"config_{f.name}={value}\n")
        if counts:
            for key, value in counts.items():
                fh.write(f"count_{key}={value}\n")
        fh.write(f"lambda_cv={_format_full(result.lambda_cv)}\n")
        fh.write(f"edges={len(fit.support)}\n")
        fh.write(f"converged={int(fit.converged)}\n")
        fh.write(f"iterations={fit.iterations}\n")

    if cve_table is not None:
        with open(paths["cve"], "w", encoding="utf-8") as fh:
            fh.write("lambda\tmean_cve\tsd_cve\n")
            for lam, mean, sd in cve_table:
                fh.write(
                    f"{_format_full(lam)}\t{_format_full(mean)}\t{_format_full(sd)}\n"
                )
    return paths
