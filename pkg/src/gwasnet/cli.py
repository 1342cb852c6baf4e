"""Command-line front end.

Subcommands: ``fit`` runs the full analysis on summary-statistic files,
``cve`` stops after cross-validation and prints the score table,
``reliability`` prints per-trait reliability ratios, and ``simulate`` runs a
synthetic replication study. Every flag may also be given through a plain
``key=value`` config file (``--config``); command-line values win.

Exit codes: 0 success, 1 invalid usage or configuration, 2 unusable data,
3 solver non-convergence under ``--strict``.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .gwasio import DataError
from .pipeline import (
    AnalysisConfig,
    ValidationError,
    compute_reliability,
    run_cv_table,
    run_pipeline,
)
from .simulation import (
    METHOD_NAMES,
    SimulationDesign,
    run_replication,
    summarize_records,
    write_results_table,
)

__all__ = ["main"]

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    # Usage problems are configuration problems: exit 1, not argparse's 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.prog + ": error: " + message)


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in str(text).split(",") if v.strip() != "")


def _strings(text: str) -> tuple:
    return tuple(v.strip() for v in str(text).split(",") if v.strip() != "")


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"cannot read {text!r} as a boolean")


def read_config_file(path) -> dict:
    """Parse ``key=value`` lines; '#' starts a comment, blank lines ignored."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{line_no}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


# Converters for values arriving as strings from a config file.
_CONVERTERS = {
    "traits": _strings,
    "labels": _strings,
    "null_p_threshold": float,
    "joint_p_threshold": float,
    "prune_window_bp": int,
    "estimator": str,
    "penalty_family": str,
    "penalty_gamma": float,
    "lambda_grid": _floats,
    "sigma_floor": float,
    "psi": float,
    "delta": float,
    "tol_primal": float,
    "tol_dual": float,
    "max_iter": int,
    "gamma_update_scaling": str,
    "subsamples": int,
    "cv_splits": int,
    "subsample_fraction": float,
    "stability_threshold": float,
    "strict": _bool,
    "seed": int,
    "output_dir": str,
}


def _merged(args, keys) -> dict:
    """Collapse CLI values over config-file values for the given keys."""
    file_values = read_config_file(args.config) if args.config else {}
    merged = {}
    for key in keys:
        cli_value = getattr(args, key, None)
        if cli_value is not None and cli_value is not False:
            merged[key] = cli_value
        elif key in file_values:
            merged[key] = _CONVERTERS[key](file_values[key])
    return merged


def _add_analysis_flags(sub) -> None:
    sub.add_argument("--traits", type=_strings, help="comma-separated summary files")
    sub.add_argument("--labels", type=_strings, help="comma-separated trait labels")
    sub.add_argument("--config", help="key=value config file; flags override it")
    sub.add_argument("--seed", type=int, help="seed for all subsampling")
    sub.add_argument("--output-dir", dest="output_dir", help="directory for report files")
    sub.add_argument("--null-p-threshold", dest="null_p_threshold", type=float)
    sub.add_argument("--joint-p-threshold", dest="joint_p_threshold", type=float)
    sub.add_argument("--prune-window-bp", dest="prune_window_bp", type=int)
    sub.add_argument("--estimator", choices=("pearson", "spearman"))
    sub.add_argument("--penalty-family", dest="penalty_family", choices=("mcp", "lasso"))
    sub.add_argument("--penalty-gamma", dest="penalty_gamma", type=float)
    sub.add_argument("--lambda-grid", dest="lambda_grid", type=_floats)
    sub.add_argument("--sigma-floor", dest="sigma_floor", type=float)
    sub.add_argument("--psi", type=float)
    sub.add_argument("--delta", type=float)
    sub.add_argument("--tol-primal", dest="tol_primal", type=float)
    sub.add_argument("--tol-dual", dest="tol_dual", type=float)
    sub.add_argument("--max-iter", dest="max_iter", type=int)
    sub.add_argument(
        "--gamma-update-scaling",
        dest="gamma_update_scaling",
        choices=("div-psi", "mul-psi"),
    )
    sub.add_argument("--subsamples", type=int)
    sub.add_argument("--cv-splits", dest="cv_splits", type=int)
    sub.add_argument("--subsample-fraction", dest="subsample_fraction", type=float)
    sub.add_argument("--stability-threshold", dest="stability_threshold", type=float)
    sub.add_argument("--strict", action="store_true", default=False)


def _analysis_config(args) -> AnalysisConfig:
    merged = _merged(args, _CONVERTERS.keys())
    traits = merged.pop("traits", None)
    if not traits:
        raise ValidationError("--traits is required (or 'traits=' in the config file)")
    if "seed" not in merged:
        raise ValidationError("--seed is required for reproducible subsampling")
    labels = merged.pop("labels", None)
    output_dir = merged.pop("output_dir", None)
    if getattr(args, "needs_output", False) and not output_dir:
        raise ValidationError("--output-dir is required")
    return AnalysisConfig(
        trait_files=traits,
        trait_labels=labels,
        output_dir=output_dir or ".",
        **merged,
    )


def _cmd_fit(args) -> int:
    config = _analysis_config(args)
    result = run_pipeline(config)
    for name, path in sorted(result.output_paths.items()):
        print(f"{name}: {path}")
    print(f"edges: {len(result.stability.pruned_fit.support)}")
    if not result.converged:
        logger.warning("solver did not converge")
        if config.strict:
            return 3
    return 0


def _cmd_cve(args) -> int:
    config = _analysis_config(args)
    _, table, _ = run_cv_table(config)
    print("lambda\tmean_cve\tsd_cve")
    for lam, mean, sd in table:
        print(f"{lam:.17g}\t{mean:.17g}\t{sd:.17g}")
    return 0


def _cmd_reliability(args) -> int:
    config = _analysis_config(args)
    labels, ratios = compute_reliability(config)
    print("trait\treliability_ratio")
    for label, ratio in zip(labels, ratios):
        print(f"{label}\t{ratio:.6g}")
    return 0


def _cmd_simulate(args) -> int:
    methods = args.methods or tuple(sorted(METHOD_NAMES))
    for name in methods:
        if name not in METHOD_NAMES:
            raise ValidationError(
                f"unknown method {name!r}; choose from {sorted(METHOD_NAMES)}"
            )
    design = SimulationDesign(
        seed=args.seed,
        p=args.p,
        structure=args.structure,
        band_coefficients=_floats(args.coefficients) if args.coefficients else None,
        m=args.m,
        null_count=args.null_count,
        sample_size=args.n,
        heritability=args.heritability,
        overlap_within=args.overlap_within,
        overlap_between=args.overlap_between,
        phenotypic_cov=args.phenotypic_cov,
        pleiotropy_fraction=args.pleiotropy_fraction,
        pleiotropy_multiplier=args.pleiotropy_multiplier,
    )
    records = run_replication(
        design,
        methods,
        reps=args.reps,
        seed=args.seed,
        lambda_grid=args.lambda_grid,
        subsamples=args.subsamples,
        cv_splits=args.cv_splits,
        subsample_fraction=args.subsample_fraction,
        stability_threshold=args.stability_threshold,
        penalty_gamma=args.penalty_gamma,
    )
    write_results_table(records, args.output)
    print(f"results: {args.output}")
    for summary in summarize_records(records):
        print(
            f"{summary['method']}: median entropy {summary['entropy_median']:.4g}, "
            f"median t1 {summary['t1_median']:.4g}, "
            f"median t2 {summary['t2_median']:.4g} "
            f"({summary['converged']}/{summary['reps']} converged)"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gwasnet", description=__doc__.split("\n\n")[0])
    parser.add_argument("--verbose", action="store_true", help="log stage details")
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", help="estimate a genetic network from summary files")
    _add_analysis_flags(fit)
    fit.set_defaults(handler=_cmd_fit, needs_output=True)

    cve = commands.add_parser("cve", help="print the cross-validation score table")
    _add_analysis_flags(cve)
    cve.set_defaults(handler=_cmd_cve, needs_output=False)

    rel = commands.add_parser("reliability", help="print per-trait reliability ratios")
    _add_analysis_flags(rel)
    rel.set_defaults(handler=_cmd_reliability, needs_output=False)

    sim = commands.add_parser("simulate", help="run a synthetic replication study")
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--output", required=True, help="path for the results table")
    sim.add_argument("--reps", type=int, default=10)
    sim.add_argument(
        "--methods",
        type=_strings,
        help=f"comma-separated subset of {sorted(METHOD_NAMES)}",
    )
    sim.add_argument("--p", type=int, default=10)
    sim.add_argument("--structure", choices=("ar1", "ar3"), default="ar1")
    sim.add_argument("--coefficients", help="comma-separated band coefficients")
    sim.add_argument("--m", type=int, default=1000)
    sim.add_argument("--null-count", dest="null_count", type=int)
    sim.add_argument("--n", type=int, default=200_000)
    sim.add_argument("--heritability", type=float, default=0.2)
    sim.add_argument("--overlap-within", dest="overlap_within", type=float, default=0.9)
    sim.add_argument("--overlap-between", dest="overlap_between", type=float, default=0.3)
    sim.add_argument("--phenotypic-cov", dest="phenotypic_cov", type=float, default=0.5)
    sim.add_argument(
        "--pleiotropy-fraction", dest="pleiotropy_fraction", type=float, default=0.0
    )
    sim.add_argument(
        "--pleiotropy-multiplier", dest="pleiotropy_multiplier", type=float, default=5.0
    )
    sim.add_argument(
        "--lambda-grid",
        dest="lambda_grid",
        type=_floats,
        default=(0.02, 0.04, 0.07, 0.12, 0.2, 0.32, 0.5, 0.8, 1.2, 1.8),
    )
    sim.add_argument("--subsamples", type=int, default=100)
    sim.add_argument("--cv-splits", dest="cv_splits", type=int)
    sim.add_argument(
        "--subsample-fraction", dest="subsample_fraction", type=float, default=0.5
    )
    sim.add_argument(
        "--stability-threshold", dest="stability_threshold", type=float, default=0.95
    )
    sim.add_argument("--penalty-gamma", dest="penalty_gamma", type=float, default=3.0)
    sim.set_defaults(handler=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        return 0 if exc.code in (0, None) else int(exc.code)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f"gwasnet: configuration error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"gwasnet: invalid setting: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"gwasnet: data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"gwasnet: i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
