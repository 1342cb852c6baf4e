"""Reading and harmonizing GWAS summary-statistic files.

Input files are tab-separated with a header containing SNP, CHR, POS, A1,
A2, BETA, SE and N (case-insensitive, extra columns ignored). Alignment
across traits matches variants by identifier; an A1/A2 swap is reconciled by
flipping the sign of the effect, anything else drops the variant. Strand
flips and indel harmonization are out of scope and surface as drops.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .covariance import SummaryPanel

__all__ = [
    "GwasRecord",
    "AlignedStudy",
    "DataError",
    "parse_gwas_file",
    "align_traits",
]

logger = logging.getLogger(__name__)

_REQUIRED_COLUMNS = ("SNP", "CHR", "POS", "A1", "A2", "BETA", "SE", "N")


class DataError(Exception):
    """Raised when an input file or the combination of files is unusable."""


@dataclass(frozen=True)
class GwasRecord:
    """One parsed summary-statistic row."""

    variant_id: str
    chromosome: str
    position: int
    effect_allele: str
    other_allele: str
    beta: float
    se: float
    n: int


@dataclass(frozen=True)
class AlignedStudy:
    """Cross-trait Z-score panel plus the per-variant genomic coordinates."""

    panel: SummaryPanel
    variant_ids: tuple
    chromosomes: tuple
    positions: tuple
    dropped_alleles: int

    def __post_init__(self):
        m = self.panel.m
        if not len(self.variant_ids) == len(self.chromosomes) == len(self.positions) == m:
            raise ValueError("variant metadata length does not match the panel")


def _parse_row(row: dict, path: str, line: int) -> GwasRecord:
    def numeric(field, caster, check, message):
        raw = row[field]
        try:
            value = caster(raw)
        except (TypeError, ValueError):
            raise DataError(
                f"{path}:{line}: cannot parse {field}={raw!r} as a number"
            ) from None
        if not check(value):
            raise DataError(f"{path}:{line}: {field}={raw!r} {message}")
        return value

    beta = numeric("BETA", float, np.isfinite, "must be finite")
    se = numeric("SE", float, lambda v: np.isfinite(v) and v > 0, "must be positive")
    pos = numeric("POS", int, lambda v: v >= 0, "must be non-negative")
    n = numeric("N", int, lambda v: v > 0, "must be positive")
    return GwasRecord(
        variant_id=row["SNP"].strip(),
        chromosome=row["CHR"].strip(),
        position=pos,
        effect_allele=row["A1"].strip().upper(),
        other_allele=row["A2"].strip().upper(),
        beta=beta,
        se=se,
        n=n,
    )


def parse_gwas_file(path) -> list:
    """Parse one summary-statistic file into records.

    Duplicate variant identifiers keep the first occurrence, with a warning
    count; any malformed row raises a DataError naming the file and line.
    """
    path = str(path)
    records = []
    seen = set()
    duplicates = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        upper = [h.strip().upper() for h in header]
        mapping = {}
        for name in _REQUIRED_COLUMNS:
            if name not in upper:
                raise DataError(f"{path}: missing required column {name}")
            mapping[name] = upper.index(name)
        for line, raw in enumerate(reader, start=2):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) < len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields")
            row = {name: raw[idx] for name, idx in mapping.items()}
            record = _parse_row(row, path, line)
            if record.variant_id in seen:
                duplicates += 1
                continue
            seen.add(record.variant_id)
            records.append(record)
    if duplicates:
        logger.warning("%s: dropped %d duplicate variant rows (kept first)", path, duplicates)
    if not records:
        raise DataError(f"{path}: no data rows")
    return records


def align_traits(record_lists, labels) -> AlignedStudy:
    """Build the cross-trait Z-score panel over the common variant set.

    Variants are matched by identifier; the first trait fixes the reference
    alleles and the row order. A trait whose alleles are swapped relative to
    the reference contributes a sign-flipped effect; any other allele
    combination drops the variant (counted). Per-trait sample sizes are the
    median N over aligned rows.
    """
    if len(record_lists) < 2:
        raise DataError("need at least two traits to estimate a network")
    if len(labels) != len(record_lists):
        raise DataError("one label per trait file is required")
    by_id = [{r.variant_id: r for r in records} for records in record_lists]
    common = [r.variant_id for r in record_lists[0] if all(r.variant_id in d for d in by_id)]
    if not common:
        raise DataError("no variants are shared by every trait file")

    rows = []
    kept_ids = []
    chroms = []
    positions = []
    dropped = 0
    for vid in common:
        ref = by_id[0][vid]
        z_row = []
        ok = True
        for d in by_id:
            rec = d[vid]
            if (rec.effect_allele, rec.other_allele) == (ref.effect_allele, ref.other_allele):
                sign = 1.0
            elif (rec.effect_allele, rec.other_allele) == (ref.other_allele, ref.effect_allele):
                sign = -1.0
            else:
                ok = False
                break
            z_row.append(sign * rec.beta / rec.se)
        if not ok:
            dropped += 1
            continue
        rows.append(z_row)
        kept_ids.append(vid)
        chroms.append(ref.chromosome)
        positions.append(ref.position)
    if dropped:
        logger.warning("dropped %d variants with irreconcilable alleles", dropped)
    if len(rows) < 2:
        raise DataError("fewer than 2 variants survived allele harmonization")

    sizes = []
    for d in by_id:
        ns = [d[vid].n for vid in kept_ids]
        sizes.append(int(np.median(ns)))
    panel = SummaryPanel(np.asarray(rows, dtype=float), tuple(labels), tuple(sizes))
    return AlignedStudy(
        panel=panel,
        variant_ids=tuple(kept_ids),
        chromosomes=tuple(chroms),
        positions=tuple(positions),
        dropped_alleles=dropped,
    )
