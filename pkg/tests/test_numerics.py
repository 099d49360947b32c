"""Linear-algebra and random-stream utilities."""

import numpy as np
import pytest

from conftest import random_psd
from mimo_lab.numerics import (EIG_FLOOR, as_rng, block_rng, complex_normal, db_to_linear,
                               hermitize, inv_hermitian, psd_project, psd_sqrt, solve_hermitian)


def test_hermitize_output_is_hermitian():
    rng = block_rng(1, 0)
    a = complex_normal(rng, (6, 6))
    h = hermitize(a)
    assert np.allclose(h, h.conj().T, atol=0)
    assert np.allclose(h, 0.5 * (a + a.conj().T))


def test_solve_hermitian_matches_dense_solve():
    rng = block_rng(1, 1)
    a = random_psd(rng, 8) + np.eye(8)
    b = complex_normal(rng, (8, 3))
    x = solve_hermitian(a, b)
    assert np.allclose(a @ x, b, atol=1e-10)


def test_solve_hermitian_singular_input_falls_back():
    # Rank-deficient system: the eigenvalue floor keeps the solve finite.
    a = np.diag([1.0, 0.0]).astype(complex)
    b = np.array([[1.0], [0.0]], dtype=complex)
    x = solve_hermitian(a, b)
    assert np.all(np.isfinite(x))
    assert abs(x[0, 0] - 1.0) < 1e-9


def test_inv_hermitian_inverts():
    rng = block_rng(1, 2)
    a = random_psd(rng, 5) + np.eye(5)
    assert np.allclose(inv_hermitian(a) @ a, np.eye(5), atol=1e-10)


def test_psd_project_clamps_negative_eigenvalues():
    a = np.diag([2.0, -0.5]).astype(complex)
    p = psd_project(a)
    w = np.linalg.eigvalsh(p)
    assert w.min() >= 0.0
    assert abs(w.max() - 2.0) < 1e-12


def test_psd_sqrt_squares_back():
    rng = block_rng(1, 3)
    a = random_psd(rng, 6)
    s = psd_sqrt(a)
    assert np.allclose(s @ s.conj().T, a, atol=1e-10)


def test_complex_normal_unit_variance_and_circularity():
    rng = block_rng(1, 4)
    z = complex_normal(rng, (200_000,))
    assert abs(np.mean(np.abs(z) ** 2) - 1.0) < 0.02
    # Circular symmetry: pseudo-variance E[z^2] vanishes.
    assert abs(np.mean(z ** 2)) < 0.02
    assert abs(np.mean(z)) < 0.02


def test_block_rng_reproducible_and_decorrelated():
    a1 = block_rng(9, 3).standard_normal(4)
    a2 = block_rng(9, 3).standard_normal(4)
    b = block_rng(9, 4).standard_normal(4)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)


def test_as_rng_passes_generators_through():
    gen = block_rng(2, 0)
    assert as_rng(gen) is gen
    assert np.array_equal(as_rng(7).standard_normal(3), as_rng(7).standard_normal(3))


def test_db_to_linear():
    assert db_to_linear(0.0) == 1.0
    assert abs(db_to_linear(10.0) - 10.0) < 1e-12
    assert abs(db_to_linear(-10.0) - 0.1) < 1e-15


def test_eig_floor_is_tiny_positive():
    assert 0.0 < EIG_FLOOR <= 1e-10
