"""Shared fixtures and independent oracles for the test suite.

The reference drop (10 users, 128 antennas, 10 degree spread) mirrors the
scenario used by the experiment defaults.  Oracles here are built from
dense linear algebra only, never from the estimator code under test.
"""

import numpy as np
import pytest

from mimo_lab.channel import (ArrayGeometry, ChannelCovariance, PowerAngleSpectrum,
                              Scenario, covariance_asymptotic, covariance_exact)
from mimo_lab.numerics import block_rng, complex_normal
from mimo_lab.training import PRPattern

DROP_AOAS = (0.6592, 0.8499, -0.7812, 0.8658, 0.2772,
             -0.8429, -0.4639, 0.0982, 0.9582, 0.9737)
PATTERN_A = PRPattern((1, 1, 2, 2, 3, 3, 4, 4, 5, 5), 5)
PATTERN_B = PRPattern((1, 2, 3, 4, 3, 5, 4, 5, 5, 3), 5)


def drop_spectra(spread_deg=10.0):
    sigma = float(np.deg2rad(spread_deg))
    return [PowerAngleSpectrum("truncated_laplacian", a, sigma) for a in DROP_AOAS]


@pytest.fixture(scope="session")
def drop_scenario():
    """Reference drop with exact-quadrature covariances at M = 128."""
    geometry = ArrayGeometry(128)
    spectra = drop_spectra()
    covs = [covariance_exact(geometry, pas) for pas in spectra]
    return Scenario(geometry=geometry, spectra=spectra, covariances=covs)


@pytest.fixture(scope="session")
def drop_asym_covariances():
    """Large-array-model covariances for the same drop."""
    geometry = ArrayGeometry(128)
    return [ChannelCovariance(covariance_asymptotic(geometry, pas).matrix(),
                              source="asymptotic_dft")
            for pas in drop_spectra()]


def random_psd(rng, m, rank=None):
    """Random Hermitian PSD matrix of the given size (and optional rank)."""
    a = complex_normal(rng, (m, rank or m))
    return a @ a.conj().T / (rank or m)


def random_covariances(rng, m, k, rank=None):
    return [ChannelCovariance(random_psd(rng, m, rank)) for _ in range(k)]


def disjoint_dft_covariances(m, k, width, rng=None):
    """Covariances supported on disjoint DFT index blocks (products vanish)."""
    f = np.fft.fft(np.eye(m)) / np.sqrt(m)
    step = m // k
    if width > step:
        raise ValueError("blocks would overlap")
    covs = []
    for i in range(k):
        idx = np.arange(i * step, i * step + width)
        vals = np.ones(width) if rng is None else 1.0 + rng.random(width)
        covs.append(ChannelCovariance((f[:, idx] * vals) @ f[:, idx].conj().T))
    return covs


def shared_pilot_gains(matrices, noise_var):
    """Dense conditioning gains for users sharing one pilot.

    The observation is y = sum_k g_k + n, so E[g_k | y] = R_k C^{-1} y with
    C = sum R + noise_var I.  Returns (gain list, C).
    """
    c = sum(matrices) + noise_var * np.eye(matrices[0].shape[0], dtype=complex)
    return [np.linalg.solve(c.T, r.T).T for r in matrices], c
