"""Dense symmetric-matrix primitives shared by every estimation stage.

All inputs and outputs are plain ``numpy`` arrays. Matrices are kept exactly
symmetric: every constructor and spectral operation returns ``0.5 * (B + B.T)``
or fills entries symmetrically, so downstream eigendecompositions never see
asymmetric round-off.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "EigenDecomposition",
    "as_symmetric",
    "eigendecompose",
    "spectral_map",
    "clip_eigenvalues",
    "cov2cor",
    "min_eigenvalue",
    "symmetric_inverse",
]

# Relative tolerance used when validating that a user-supplied matrix is
# symmetric before it is symmetrized exactly.
_SYMMETRY_RTOL = 1e-8


class EigenDecomposition(NamedTuple):
    """Eigenvalues in descending order and the matching orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray


def as_symmetric(a, name: str = "matrix") -> np.ndarray:
    """Validate and return an exactly symmetric float64 copy of ``a``.

    Raises ``ValueError`` if ``a`` is not square, contains non-finite
    entries, or deviates from symmetry by more than a small relative
    tolerance. Averaging with the transpose makes the result bitwise
    symmetric.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] < 1:
        raise ValueError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > _SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def eigendecompose(a) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    a = as_symmetric(a)
    values, vectors = np.linalg.eigh(a)
    order = np.argsort(values)[::-1]
    return EigenDecomposition(values[order], vectors[:, order])


def spectral_map(a, f: Callable[[float], float]) -> np.ndarray:
    """Apply the scalar function ``f`` to the spectrum of a symmetric matrix.

    Returns ``sum_j f(sigma_j) u_j u_j^T`` where ``(sigma_j, u_j)`` is the
    eigensystem of ``a``. ``f`` must be finite on every eigenvalue of ``a``.
    """
    a = as_symmetric(a)
    values, vectors = np.linalg.eigh(a)
    mapped = np.array([f(v) for v in values], dtype=float)
    bad = ~np.isfinite(mapped)
    if bad.any():
        j = int(np.nonzero(bad)[0][0])
        raise ValueError(
            f"spectral function is not finite at eigenvalue {values[j]!r}"
        )
    out = (vectors * mapped) @ vectors.T
    return 0.5 * (out + out.T)


def clip_eigenvalues(a, delta: float) -> np.ndarray:
    """Raise every eigenvalue of a symmetric matrix to at least ``delta``.

    Returns ``a`` unchanged (as a copy) when its smallest eigenvalue is
    already >= ``delta``, which also makes the operation exactly idempotent.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta!r}")
    a = as_symmetric(a)
    values, vectors = np.linalg.eigh(a)
    if values[0] >= delta:
        return a
    floored = np.maximum(values, delta)
    out = (vectors * floored) @ vectors.T
    return 0.5 * (out + out.T)


def cov2cor(a) -> np.ndarray:
    """Convert a covariance matrix to a correlation matrix.

    Off-diagonal entries become ``a_ks / sqrt(a_kk * a_ss)``; the diagonal is
    set to exactly 1. Raises ``ValueError`` naming the first index whose
    diagonal entry is not strictly positive.
    """
    a = as_symmetric(a)
    d = np.diag(a)
    bad = d <= 0
    if bad.any():
        k = int(np.nonzero(bad)[0][0])
        raise ValueError(
            f"diagonal entry {k} is not positive ({d[k]!r}); cannot rescale"
        )
    s = np.sqrt(d)
    out = a / np.outer(s, s)
    np.fill_diagonal(out, 1.0)
    return out


def min_eigenvalue(a) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(as_symmetric(a))[0])


def symmetric_inverse(a, floor: float | None = None) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via its spectrum.

    When ``floor`` is given, eigenvalues are raised to ``floor`` before
    inverting, so the result is defined for indefinite inputs as well.
    """
    a = as_symmetric(a)
    values, vectors = np.linalg.eigh(a)
    if floor is not None:
        values = np.maximum(values, floor)
    elif values[0] <= 0:
        raise ValueError("matrix is not positive definite and no floor given")
    out = (vectors / values) @ vectors.T
    return 0.5 * (out + out.T)
