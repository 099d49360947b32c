"""Shared numerical plumbing: Hermitian solves, PSD repairs, and RNG streams."""

import numpy as np
import scipy.linalg

# Relative floor applied to eigenvalues when a Cholesky factorization fails.
EIG_FLOOR = 1e-12


def hermitize(a):
    """Hermitian part (a + a^H) / 2."""
    return 0.5 * (a + a.conj().T)


def solve_hermitian(a, b):
    """Solve a @ x = b for Hermitian positive definite a.

    Uses a Cholesky factorization and falls back to an eigendecomposition
    with floored eigenvalues when the matrix is numerically singular.
    """
    try:
        c = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
        return scipy.linalg.cho_solve(c, b, check_finite=False)
    except scipy.linalg.LinAlgError:
        w, u = np.linalg.eigh(hermitize(a))
        w = np.maximum(w, EIG_FLOOR * max(float(w[-1]), 1.0))
        y = u.conj().T @ b
        return u @ (y / w[:, None] if y.ndim == 2 else y / w)


def inv_hermitian(a):
    """Inverse of a Hermitian positive definite matrix."""
    return solve_hermitian(a, np.eye(a.shape[0], dtype=complex))


def psd_project(a):
    """Nearest PSD matrix: symmetrize and clamp negative eigenvalues to zero."""
    w, u = np.linalg.eigh(hermitize(a))
    return (u * np.maximum(w, 0.0)) @ u.conj().T


def psd_sqrt(a):
    """Hermitian square root of a (nearly) PSD matrix."""
    w, u = np.linalg.eigh(hermitize(a))
    return (u * np.sqrt(np.maximum(w, 0.0))) @ u.conj().T


def complex_normal(rng, shape):
    """Circularly symmetric complex Gaussian samples with unit variance."""
    return np.sqrt(0.5) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def as_rng(seed):
    """Accept an integer seed or a ready numpy Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return block_rng(int(seed), 0)


def block_rng(seed, index):
    """Independent counter-based stream for one simulation block.

    Streams depend only on (seed, index), so any worker layout reproduces
    the same draws.
    """
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def db_to_linear(db):
    """Convert a power ratio from dB to linear scale."""
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)
