"""Synthetic summary-statistic studies with known network ground truth.

Panels are drawn from the sampling distribution of GWAS effect estimates:
true effects from a banded-precision Gaussian scaled to a target per-trait
heritability, estimation errors with the cross-trait covariance induced by
overlapping cohorts, plus an optional contamination step that shifts a
fraction of variant rows across every trait. Estimators are scored against
the known correlation-scale precision matrix.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np

from .covariance import ErrorCovariance, NullPanel, SummaryPanel, estimate_error_covariance
from .matrices import as_symmetric, min_eigenvalue, symmetric_inverse
from .selection import CovarianceSource, SelectionConfig, cross_validate_lambda, stability_select
from .solver import Penalty, SolverConfig, bic_score, entropy_loss, quadratic_loss, solve_penalized_entropy

__all__ = [
    "SimulationDesign",
    "ReplicationRecord",
    "build_ar_precision",
    "build_overlap_matrix",
    "genetic_covariance_matrix",
    "error_covariance_matrix",
    "error_correlation_matrix",
    "simulate_summary_panel",
    "inject_pleiotropy",
    "edge_error_rates",
    "run_replication",
    "summarize_records",
    "write_results_table",
    "write_demo_gwas_files",
    "METHOD_NAMES",
]

logger = logging.getLogger(__name__)

_DEFAULT_COEFFICIENTS = {"ar1": (0.5,), "ar3": (0.4, 0.2, 0.1)}
_AR_ORDER = {"ar1": 1, "ar3": 3}

# Smallest eigenvalue allowed for a generated precision matrix; bands are
# rescaled to meet it so every design yields a usable covariance.
_MIN_SPECTRUM = 0.05

_DEFAULT_LAMBDA_GRID = (0.02, 0.04, 0.07, 0.12, 0.2, 0.32, 0.5, 0.8, 1.2, 1.8)

# estimator kind, whether the error covariance is subtracted, penalty family,
# and whether tuning runs cross-validation plus stability selection (True) or
# the information criterion (False).
METHOD_NAMES = {
    "corrected-pearson": ("pearson", True, "mcp", True),
    "corrected-spearman": ("spearman", True, "mcp", True),
    "glasso-pearson": ("pearson", False, "lasso", False),
    "glasso-spearman": ("spearman", False, "lasso", False),
}

# RNG stream tags: effects, errors, nulls, contamination, file shuffling.
_BETA_STREAM = 1
_ERROR_STREAM = 2
_NULL_STREAM = 3
_PLEIOTROPY_STREAM = 4
_SHUFFLE_STREAM = 5


@dataclass(frozen=True)
class SimulationDesign:
    """Complete description of one synthetic study.

    sample_size and heritability accept either a scalar (shared by all
    traits) or a per-trait sequence. The overlap matrix defaults to two
    near-equal trait blocks with the given within/between fractions; an
    explicit matrix overrides the fractions. precision_override replaces the
    banded ground-truth precision with a custom positive definite matrix.
    """

    seed: int
    p: int = 10
    structure: str = "ar1"
    band_coefficients: tuple = None
    m: int = 1000
    null_count: int = None
    sample_size: object = 200_000
    heritability: object = 0.2
    overlap_within: float = 0.9
    overlap_between: float = 0.3
    overlap: np.ndarray = None
    phenotypic_cov: float = 0.5
    pleiotropy_fraction: float = 0.0
    pleiotropy_multiplier: float = 5.0
    precision_override: np.ndarray = None

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"need at least 2 traits, got {self.p!r}")
        if self.m < 2:
            raise ValueError(f"need at least 2 causal variants, got {self.m!r}")
        structure = str(self.structure).lower()
        if structure not in _AR_ORDER:
            raise ValueError(f"unknown structure {self.structure!r}")
        object.__setattr__(self, "structure", structure)
        if self.band_coefficients is not None:
            coeffs = tuple(float(c) for c in self.band_coefficients)
            if len(coeffs) != _AR_ORDER[structure]:
                raise ValueError(
                    f"{structure} takes {_AR_ORDER[structure]} band coefficients, "
                    f"got {len(coeffs)}"
                )
            object.__setattr__(self, "band_coefficients", coeffs)
        if self.null_count is not None and self.null_count < self.p:
            raise ValueError("null_count must be at least p")
        sizes = self.sample_sizes()
        if any(n <= 0 for n in sizes):
            raise ValueError("sample sizes must be positive")
        herit = self.heritabilities()
        if ((herit <= 0) | (herit >= 1)).any():
            raise ValueError("heritability values must lie in (0, 1)")
        if not 0 <= self.pleiotropy_fraction <= 1:
            raise ValueError("pleiotropy fraction must lie in [0, 1]")
        if self.overlap is not None:
            ov = as_symmetric(self.overlap, "overlap")
            if ov.shape[0] != self.p:
                raise ValueError("overlap matrix dimension must equal p")
            if ((ov < 0) | (ov > 1)).any():
                raise ValueError("overlap fractions must lie in [0, 1]")
            if np.abs(np.diag(ov) - 1.0).max() > 1e-12:
                raise ValueError("overlap matrix must have a unit diagonal")
            ov.setflags(write=False)
            object.__setattr__(self, "overlap", ov)
        else:
            for name in ("overlap_within", "overlap_between"):
                v = getattr(self, name)
                if not 0 <= v <= 1:
                    raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.precision_override is not None:
            theta = as_symmetric(self.precision_override, "precision_override")
            if theta.shape[0] != self.p:
                raise ValueError("precision_override dimension must equal p")
            if min_eigenvalue(theta) <= 0:
                raise ValueError("precision_override must be positive definite")
            theta.setflags(write=False)
            object.__setattr__(self, "precision_override", theta)

    def coefficients(self) -> tuple:
        if self.band_coefficients is not None:
            return self.band_coefficients
        return _DEFAULT_COEFFICIENTS[self.structure]

    def sample_sizes(self) -> tuple:
        if np.ndim(self.sample_size) == 0:
            return (int(self.sample_size),) * self.p
        sizes = tuple(int(n) for n in self.sample_size)
        if len(sizes) != self.p:
            raise ValueError(f"expected {self.p} sample sizes, got {len(sizes)}")
        return sizes

    def heritabilities(self) -> np.ndarray:
        if np.ndim(self.heritability) == 0:
            return np.full(self.p, float(self.heritability))
        h = np.asarray(self.heritability, dtype=float)
        if h.shape != (self.p,):
            raise ValueError(f"expected {self.p} heritability values")
        return h

    def overlap_matrix(self) -> np.ndarray:
        if self.overlap is not None:
            return np.array(self.overlap)
        first = (self.p + 1) // 2
        return build_overlap_matrix(
            (first, self.p - first), self.overlap_within, self.overlap_between
        )

    def nulls(self) -> int:
        return self.null_count if self.null_count is not None else 5 * self.m


def build_ar_precision(p: int, structure: str, band_coefficients=None) -> np.ndarray:
    """Banded ground-truth precision matrix with a guarded spectrum.

    Unit diagonal with constant bands: entry (k, s) is coefficient
    |k - s| - 1 within the band order, zero beyond. If the smallest
    eigenvalue falls below 0.05, all bands are rescaled by one common factor
    until it does not (the factor is logged); band support is unchanged.
    """
    structure = str(structure).lower()
    if structure not in _AR_ORDER:
        raise ValueError(f"unknown structure {structure!r}")
    order = _AR_ORDER[structure]
    coeffs = (
        tuple(float(c) for c in band_coefficients)
        if band_coefficients is not None
        else _DEFAULT_COEFFICIENTS[structure]
    )
    if len(coeffs) != order:
        raise ValueError(f"{structure} takes {order} coefficients, got {len(coeffs)}")
    if any(abs(c) >= 1 for c in coeffs):
        raise ValueError("band coefficients must have magnitude below 1")
    if p < 2:
        raise ValueError(f"need p >= 2, got {p}")
    band = np.zeros((p, p))
    for lag, c in enumerate(coeffs, start=1):
        if lag < p and c != 0.0:
            idx = np.arange(p - lag)
            band[idx, idx + lag] = c
            band[idx + lag, idx] = c
    # Eigenvalues of I + c*B are 1 + c*eig(B), so one factor fixes the floor.
    band_min = float(np.linalg.eigvalsh(band)[0])
    scale = 1.0
    if 1.0 + band_min < _MIN_SPECTRUM:
        scale = (1.0 - _MIN_SPECTRUM) / (-band_min)
        logger.info(
            "rescaled %s band coefficients by %.6f to keep the smallest "
            "eigenvalue at %.2f",
            structure,
            scale,
            _MIN_SPECTRUM,
        )
    return np.eye(p) + scale * band


def build_overlap_matrix(block_sizes, within_block: float, between_block: float) -> np.ndarray:
    """Block-constant sample-overlap fractions with a unit diagonal."""
    for name, v in (("within_block", within_block), ("between_block", between_block)):
        if not 0 <= v <= 1:
            raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
    sizes = tuple(int(s) for s in block_sizes)
    if len(sizes) == 0 or any(s < 1 for s in sizes):
        raise ValueError("block sizes must be positive integers")
    labels = np.repeat(np.arange(len(sizes)), sizes)
    same = labels[:, None] == labels[None, :]
    out = np.where(same, float(within_block), float(between_block))
    np.fill_diagonal(out, 1.0)
    return out


def _ground_truth_precision(design: SimulationDesign) -> np.ndarray:
    if design.precision_override is not None:
        return np.array(design.precision_override)
    return build_ar_precision(design.p, design.structure, design.coefficients())


def genetic_covariance_matrix(design: SimulationDesign) -> np.ndarray:
    """Effect-size covariance implied by the design.

    The inverse of the ground-truth precision is rescaled per trait so that
    m times each diagonal entry equals that trait's heritability; the banded
    inverse has a non-constant diagonal, so the scaling is diagonal rather
    than scalar.
    """
    theta = _ground_truth_precision(design)
    v = symmetric_inverse(theta)
    herit = design.heritabilities()
    d = np.sqrt(herit / (design.m * np.diag(v)))
    logger.debug("per-trait effect scales: %s", d)
    return v * np.outer(d, d)


def error_covariance_matrix(design: SimulationDesign) -> np.ndarray:
    """Estimation-error covariance on the effect-size scale.

    Diagonal 1/n_k; off-diagonal overlap fraction times the phenotypic
    covariance divided by sqrt(n_k * n_s).
    """
    n = np.array(design.sample_sizes(), dtype=float)
    out = design.overlap_matrix() * design.phenotypic_cov / np.sqrt(np.outer(n, n))
    np.fill_diagonal(out, 1.0 / n)
    return out


def error_correlation_matrix(design: SimulationDesign) -> np.ndarray:
    """Estimation-error covariance on the Z-score scale (unit diagonal)."""
    out = design.overlap_matrix() * design.phenotypic_cov
    np.fill_diagonal(out, 1.0)
    return out


def truth_precision_correlation_scale(design: SimulationDesign) -> np.ndarray:
    """Ground-truth precision of the genetic correlation matrix.

    Equals sqrt(diag(V)) * Theta * sqrt(diag(V)) with V the inverse of the
    banded precision; diagonal rescaling preserves the exact zero pattern.
    """
    theta = _ground_truth_precision(design)
    dv = np.sqrt(np.diag(symmetric_inverse(theta)))
    return theta * np.outer(dv, dv)


def simulate_summary_panel(design: SimulationDesign):
    """Draw one study: signal panel, null panel, and the ground truth.

    Returns
    -------
    (SummaryPanel, NullPanel, numpy.ndarray)
        Z-score panel of m causal variants, a null panel of error-only
        variants on the same Z-score scale, and the correlation-scale
        ground-truth precision matrix the estimators target.
    """
    sigma_beta = genetic_covariance_matrix(design)
    sigma_err = error_covariance_matrix(design)
    truth = truth_precision_correlation_scale(design)
    n = np.array(design.sample_sizes(), dtype=float)
    root = np.sqrt(n)

    chol_beta = np.linalg.cholesky(sigma_beta)
    chol_err = np.linalg.cholesky(sigma_err)
    rng_beta = np.random.default_rng([design.seed, _BETA_STREAM])
    rng_err = np.random.default_rng([design.seed, _ERROR_STREAM])
    betas = rng_beta.standard_normal((design.m, design.p)) @ chol_beta.T
    errors = rng_err.standard_normal((design.m, design.p)) @ chol_err.T
    z = (betas + errors) * root[None, :]

    corr_err = error_correlation_matrix(design)
    chol_null = np.linalg.cholesky(corr_err)
    rng_null = np.random.default_rng([design.seed, _NULL_STREAM])
    nulls = rng_null.standard_normal((design.nulls(), design.p)) @ chol_null.T

    traits = tuple(f"trait{k + 1}" for k in range(design.p))
    panel = SummaryPanel(z, traits, design.sample_sizes())
    return panel, NullPanel(nulls), truth


def inject_pleiotropy(panel: SummaryPanel, design: SimulationDesign) -> SummaryPanel:
    """Shift a seeded fraction of variant rows across every trait.

    floor(fraction * m) rows are chosen uniformly; each receives one random
    sign and a shift of multiplier times the generating effect-size standard
    deviation (on the Z-score scale) in every trait column. Returns a new
    panel; fraction 0 or multiplier 0 reproduce the input bit for bit.
    """
    z = np.array(panel.z)
    count = int(math.floor(design.pleiotropy_fraction * panel.m))
    if count > 0 and design.pleiotropy_multiplier != 0.0:
        herit = design.heritabilities()
        n = np.array(design.sample_sizes(), dtype=float)
        shift = design.pleiotropy_multiplier * np.sqrt(herit / design.m) * np.sqrt(n)
        rng = np.random.default_rng([design.seed, _PLEIOTROPY_STREAM])
        rows = rng.choice(panel.m, size=count, replace=False)
        signs = rng.integers(0, 2, size=count) * 2 - 1
        z[rows] += signs[:, None] * shift[None, :]
    return SummaryPanel(z, panel.traits, panel.sample_sizes)


def edge_error_rates(estimate, truth) -> tuple:
    """False-edge and missed-edge proportions over ordered off-diagonal pairs.

    estimate may be a PrecisionFit or a matrix; supports are read with an
    exact-zero test and the diagonal is excluded from both counts. Both
    rates are normalized by p squared.
    """
    est = np.asarray(getattr(estimate, "precision", estimate), dtype=float)
    truth = as_symmetric(truth, "truth")
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    p = est.shape[0]
    off = ~np.eye(p, dtype=bool)
    est_nz = est != 0.0
    truth_nz = truth != 0.0
    t1 = int(np.count_nonzero(est_nz & ~truth_nz & off)) / p**2
    t2 = int(np.count_nonzero(~est_nz & truth_nz & off)) / p**2
    return t1, t2


@dataclass(frozen=True)
class ReplicationRecord:
    """One method evaluated on one replicate."""

    method: str
    rep: int
    m: int
    n: int
    pleiotropy: float
    entropy: float
    quadratic: float
    t1: float
    t2: float
    converged: bool


def _replicate_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(rep)]).generate_state(1)[0])


def _fit_by_information_criterion(sigma, lambda_grid, solver, m):
    best = None
    best_score = math.inf
    warm = None
    for lam in lambda_grid:
        fit = solve_penalized_entropy(sigma, Penalty("lasso", lam), solver, warm_start=warm)
        warm = fit.precision if min_eigenvalue(fit.precision) > 0 else None
        try:
            score = bic_score(sigma, fit, m)
        except ValueError:
            continue
        if score < best_score:
            best, best_score = fit, score
    if best is None:
        raise RuntimeError("no grid value produced a positive definite estimate")
    return best


def run_replication(
    design: SimulationDesign,
    methods,
    reps: int,
    seed: int,
    *,
    lambda_grid=_DEFAULT_LAMBDA_GRID,
    solver: SolverConfig = None,
    subsamples: int = 100,
    cv_splits: int = None,
    subsample_fraction: float = 0.5,
    stability_threshold: float = 0.95,
    penalty_gamma: float = 3.0,
):
    """Score estimators on repeated draws from one design.

    Each replicate gets its own derived seed, so any subset of replicates
    reproduces exactly. Methods named "corrected-*" subtract the estimated
    error covariance and tune by cross-validation plus stability selection;
    "glasso-*" baselines skip the correction and tune a lasso penalty by the
    information criterion. Rows with an unusable estimate carry NaN losses
    and are flagged through the converged column rather than raised.

    Returns a list of ReplicationRecord, one per method and replicate.
    """
    methods = list(methods)
    for name in methods:
        if name not in METHOD_NAMES:
            raise ValueError(
                f"unknown method {name!r}; expected one of {sorted(METHOD_NAMES)}"
            )
    if reps < 1:
        raise ValueError("reps must be at least 1")
    solver = solver if solver is not None else SolverConfig()
    records = []
    for rep in range(reps):
        rep_seed = _replicate_seed(seed, rep)
        d = dataclasses.replace(design, seed=rep_seed)
        panel, nulls, truth = simulate_summary_panel(d)
        panel = inject_pleiotropy(panel, d)
        sigma_true = symmetric_inverse(truth)
        err = estimate_error_covariance(nulls)
        zero_err = ErrorCovariance(np.zeros((d.p, d.p)))
        n_record = d.sample_sizes()[0]
        for name in methods:
            kind, corrected, family, two_stage = METHOD_NAMES[name]
            source = CovarianceSource(panel, err if corrected else zero_err, kind)
            if two_stage:
                sel = SelectionConfig(
                    lambda_grid,
                    seed=rep_seed,
                    subsamples=subsamples,
                    subsample_fraction=subsample_fraction,
                    stability_threshold=stability_threshold,
                    cv_splits=cv_splits,
                )
                lam, _ = cross_validate_lambda(source, sel, family, penalty_gamma, solver)
                fit = stability_select(source, lam, sel, family, penalty_gamma, solver).pruned_fit
            else:
                fit = _fit_by_information_criterion(
                    source.sigma(None), lambda_grid, solver, panel.m
                )
            try:
                entropy = entropy_loss(sigma_true, fit.precision)
            except ValueError:
                entropy = math.nan
            quadratic = quadratic_loss(sigma_true, fit.precision)
            t1, t2 = edge_error_rates(fit, truth)
            records.append(
                ReplicationRecord(
                    method=name,
                    rep=rep,
                    m=d.m,
                    n=n_record,
                    pleiotropy=d.pleiotropy_fraction,
                    entropy=entropy,
                    quadratic=quadratic,
                    t1=t1,
                    t2=t2,
                    converged=bool(fit.converged) and math.isfinite(entropy),
                )
            )
    return records


def summarize_records(records) -> list:
    """Median and quartiles of each metric, one summary dict per method."""
    out = []
    for name in sorted({r.method for r in records}):
        rows = [r for r in records if r.method == name]
        summary = {"method": name, "reps": len(rows)}
        for metric in ("entropy", "quadratic", "t1", "t2"):
            values = np.array([getattr(r, metric) for r in rows], dtype=float)
            q1, med, q3 = np.nanpercentile(values, [25, 50, 75])
            summary[f"{metric}_q1"] = float(q1)
            summary[f"{metric}_median"] = float(med)
            summary[f"{metric}_q3"] = float(q3)
        summary["converged"] = int(sum(r.converged for r in rows))
        out.append(summary)
    return out


def write_results_table(records, path) -> None:
    """Write one row per method and replicate as tab-separated text."""
    columns = ("method", "rep", "m", "n", "pleiotropy", "entropy",
               "quadratic", "t1", "t2", "converged")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(columns) + "\n")
        for r in records:
            fh.write(
                "\t".join(
                    [
                        r.method,
                        str(r.rep),
                        str(r.m),
                        str(r.n),
                        f"{r.pleiotropy:.12g}",
                        f"{r.entropy:.12g}",
                        f"{r.quadratic:.12g}",
                        f"{r.t1:.12g}",
                        f"{r.t2:.12g}",
                        "1" if r.converged else "0",
                    ]
                )
                + "\n"
            )


def write_demo_gwas_files(
    out_dir,
    *,
    seed: int = 73,
    p: int = 5,
    signal_m: int = 300,
    null_m: int = 2500,
    n: int = 200_000,
    heritability: float = 0.5,
    coefficient: float = 0.5,
):
    """Write a small synthetic GWAS study as per-trait summary files.

    Signal variants from a first-order banded precision are mixed with
    error-only variants, shuffled, and laid out far apart on the genome so
    distance pruning keeps them all. One trait file stores a subset of
    variants with swapped alleles and negated effects to exercise allele
    harmonization. Returns a dict with the file paths, trait labels, the
    correlation-scale ground-truth precision, and its edge set.
    """
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    design = SimulationDesign(
        seed=seed,
        p=p,
        structure="ar1",
        band_coefficients=(coefficient,),
        m=signal_m,
        null_count=null_m,
        sample_size=n,
        heritability=heritability,
    )
    panel, nulls, truth = simulate_summary_panel(design)
    z_all = np.vstack([panel.z, nulls.b])
    total = z_all.shape[0]
    rng = np.random.default_rng([seed, _SHUFFLE_STREAM])
    order = rng.permutation(total)
    z_all = z_all[order]

    ids = [f"rs{100000 + i}" for i in range(total)]
    chrom = [(i % 22) + 1 for i in range(total)]
    pos = [1_000_000 + (i // 22) * 5_000_000 for i in range(total)]
    se = 1.0 / math.sqrt(n)

    paths = []
    for k, label in enumerate(panel.traits):
        path = out / f"{label}.tsv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("SNP\tCHR\tPOS\tA1\tA2\tBETA\tSE\tN\n")
            for i in range(total):
                beta = z_all[i, k] * se
                a1, a2 = "A", "G"
                if k == 1 and i % 37 == 0:
                    a1, a2 = "G", "A"
                    beta = -beta
                fh.write(
                    f"{ids[i]}\t{chrom[i]}\t{pos[i]}\t{a1}\t{a2}\t"
                    f"{beta:.17g}\t{se:.17g}\t{n}\n"
                )
        paths.append(str(path))

    support = {
        (k, s)
        for k in range(p)
        for s in range(k + 1, p)
        if truth[k, s] != 0.0
    }
    return {
        "paths": paths,
        "labels": list(panel.traits),
        "truth": truth,
        "support": support,
    }
