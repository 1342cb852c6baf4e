"""Symmetric-matrix primitives against brute-force spectral oracles."""

import numpy as np
import pytest

from gwasnet.matrices import (
    as_symmetric,
    clip_eigenvalues,
    cov2cor,
    eigendecompose,
    min_eigenvalue,
    spectral_map,
    symmetric_inverse,
)

from conftest import random_pd


def test_as_symmetric_returns_bitwise_symmetric_copy(rng):
    a = random_pd(rng, 6)
    a = a + rng.normal(scale=1e-12, size=a.shape)  # sub-tolerance asymmetry
    out = as_symmetric(a)
    assert np.array_equal(out, out.T)


def test_as_symmetric_rejects_nonsquare_and_nonfinite():
    with pytest.raises(ValueError, match="square"):
        as_symmetric(np.zeros((2, 3)))
    bad = np.eye(3)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        as_symmetric(bad)


def test_as_symmetric_rejects_visible_asymmetry():
    a = np.array([[1.0, 0.5], [0.2, 1.0]])
    with pytest.raises(ValueError, match="not symmetric"):
        as_symmetric(a, "test input")


def test_as_symmetric_names_the_offender():
    with pytest.raises(ValueError, match="overlap"):
        as_symmetric(np.zeros(3), "overlap")


def test_eigendecompose_descending_and_reconstructs(rng):
    a = random_pd(rng, 7)
    dec = eigendecompose(a)
    assert np.all(np.diff(dec.values) <= 0)
    recon = (dec.vectors * dec.values) @ dec.vectors.T
    assert np.allclose(recon, a, atol=1e-12)
    assert np.allclose(dec.vectors.T @ dec.vectors, np.eye(7), atol=1e-12)


def test_spectral_map_matches_elementwise_diagonal_case():
    d = np.diag([4.0, 1.0, 0.25])
    out = spectral_map(d, np.sqrt)
    assert np.allclose(out, np.diag([2.0, 1.0, 0.5]), atol=1e-14)


def test_spectral_map_square_root_squares_back(rng):
    a = random_pd(rng, 5)
    root = spectral_map(a, np.sqrt)
    assert np.allclose(root @ root, a, atol=1e-10)


def test_spectral_map_rejects_nonfinite_image():
    a = np.diag([1.0, -1.0])
    with pytest.raises(ValueError, match="not finite at eigenvalue"):
        spectral_map(a, np.sqrt)


def test_clip_eigenvalues_diagonal_oracle():
    # For a diagonal matrix the clip is exactly max(d, delta) entrywise.
    d = np.diag([2.0, 0.03, -1.0])
    out = clip_eigenvalues(d, 0.05)
    assert np.allclose(out, np.diag([2.0, 0.05, 0.05]), atol=1e-14)


def test_clip_eigenvalues_floor_and_idempotence(rng):
    for _ in range(20):
        a = random_pd(rng, 6, spectrum_range=(-0.5, 2.0))
        a = 0.5 * (a + a.T)
        out = clip_eigenvalues(a, 0.05)
        assert min_eigenvalue(out) >= 0.05 - 1e-12
        again = clip_eigenvalues(out, 0.05)
        assert np.allclose(out, again, atol=1e-10)


def test_clip_eigenvalues_quadratic_form_bound(rng):
    delta = 0.05
    for _ in range(10):
        a = random_pd(rng, 6, spectrum_range=(-1.0, 2.0))
        out = clip_eigenvalues(a, delta)
        for _ in range(20):
            x = rng.standard_normal(6)
            x /= np.linalg.norm(x)
            assert x @ out @ x >= delta - 1e-8


def test_clip_eigenvalues_noop_when_already_above(rng):
    a = random_pd(rng, 5, spectrum_range=(0.2, 2.0))
    out = clip_eigenvalues(a, 0.05)
    assert np.array_equal(out, as_symmetric(a))


def test_clip_eigenvalues_is_frobenius_projection(rng):
    # The clip is the Frobenius-nearest matrix with spectrum >= delta: no
    # random feasible candidate may lie closer to the input.
    delta = 0.05
    a = random_pd(rng, 4, spectrum_range=(-1.0, 1.0))
    clipped = clip_eigenvalues(a, delta)
    base = np.linalg.norm(a - clipped)
    for _ in range(200):
        candidate = random_pd(rng, 4, spectrum_range=(delta, 2.0))
        assert np.linalg.norm(a - candidate) >= base - 1e-10


def test_clip_eigenvalues_rejects_bad_delta():
    with pytest.raises(ValueError, match="delta"):
        clip_eigenvalues(np.eye(2), 0.0)


def test_cov2cor_elementwise_oracle(rng):
    a = random_pd(rng, 5, spectrum_range=(0.1, 2.0))
    out = cov2cor(a)
    for k in range(5):
        for s in range(5):
            expected = 1.0 if k == s else a[k, s] / np.sqrt(a[k, k] * a[s, s])
            assert out[k, s] == pytest.approx(expected, abs=1e-14)
    assert np.all(np.diag(out) == 1.0)


def test_cov2cor_idempotent(rng):
    a = random_pd(rng, 5, spectrum_range=(0.1, 2.0))
    once = cov2cor(a)
    assert np.array_equal(cov2cor(once), once)


def test_cov2cor_names_bad_diagonal_index():
    a = np.diag([1.0, -2.0, 3.0])
    with pytest.raises(ValueError, match="diagonal entry 1"):
        cov2cor(a)


def test_min_eigenvalue_matches_numpy(rng):
    for _ in range(10):
        a = random_pd(rng, 6, spectrum_range=(-2.0, 2.0))
        assert min_eigenvalue(a) == pytest.approx(
            float(np.linalg.eigvalsh(0.5 * (a + a.T))[0]), rel=1e-12
        )


def test_symmetric_inverse_matches_solve(rng):
    a = random_pd(rng, 6, spectrum_range=(0.1, 3.0))
    out = symmetric_inverse(a)
    assert np.allclose(out @ a, np.eye(6), atol=1e-10)
    assert np.array_equal(out, out.T)


def test_symmetric_inverse_floor_handles_indefinite():
    a = np.diag([2.0, -1.0])
    out = symmetric_inverse(a, floor=0.5)
    assert np.allclose(out, np.diag([0.5, 2.0]), atol=1e-14)
    with pytest.raises(ValueError, match="not positive definite"):
        symmetric_inverse(a)
