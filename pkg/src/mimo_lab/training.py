"""Pilot assignment, training-phase observations, and MMSE channel estimation."""

from dataclasses import dataclass

import numpy as np

from .channel import cov_matrices
from .numerics import as_rng, complex_normal, hermitize, solve_hermitian

OBSERVE_MODES = ("direct", "matched_filter")


@dataclass(frozen=True)
class PRPattern:
    """Pilot reuse pattern: assignments[k] is the 1-based pilot of user k."""

    assignments: tuple
    pilot_count: int

    def __post_init__(self):
        object.__setattr__(self, "assignments", tuple(int(a) for a in self.assignments))
        if self.pilot_count < 1:
            raise ValueError("pilot_count must be at least 1")
        if not self.assignments:
            raise ValueError("pattern needs at least one user")
        if any(a < 1 or a > self.pilot_count for a in self.assignments):
            raise ValueError("pilot indices must lie in 1..pilot_count")

    @property
    def user_count(self):
        return len(self.assignments)

    def group(self, pilot):
        """0-based indices of the users sharing the given 1-based pilot."""
        return tuple(k for k, a in enumerate(self.assignments) if a == pilot)

    def groups(self):
        return [self.group(p) for p in range(1, self.pilot_count + 1)]


def orthogonal_pattern(user_count):
    """One dedicated pilot per user."""
    return PRPattern(tuple(range(1, user_count + 1)), user_count)


def block_pattern(user_count, pilot_count):
    """Consecutive users share a pilot: 1,1,...,2,2,... with ceil(K/tau) each."""
    size = -(-user_count // pilot_count)
    return PRPattern(tuple(k // size + 1 for k in range(user_count)), pilot_count)


@dataclass(frozen=True)
class PilotConfig:
    """Training phase: pilot length tau in symbols and training SNR (linear)."""

    pilot_length: int
    train_snr: float

    def __post_init__(self):
        if self.pilot_length < 1:
            raise ValueError("pilot_length must be at least 1")
        if self.train_snr <= 0.0:
            raise ValueError("train_snr must be positive")


def _unitary_dft(n):
    grid = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(grid, grid) / n) / np.sqrt(n)


def pilot_matrix(pattern, symbol_power=1.0):
    """K x tau matrix whose row k is the pilot sequence assigned to user k.

    Sequences are scaled DFT columns, so distinct pilots are orthogonal and
    each sequence has squared norm tau * symbol_power.
    """
    tau = pattern.pilot_count
    base = np.sqrt(tau * symbol_power) * _unitary_dft(tau)
    cols = np.array(pattern.assignments) - 1
    return base[:, cols].T


def observe_pilots(channels, pattern, config, rng_seed, mode="direct", symbol_power=1.0):
    """Decorrelated training observations, one row per pilot.

    Row p-1 of the (tau, M) result is the sum of the channels sharing pilot
    p plus white noise of per-entry variance 1 / (train_snr * tau); a pilot
    used by no one yields pure noise.  Mode "direct" draws that noise
    immediately, while "matched_filter" synthesizes the full training block
    and correlates it with the pilot sequences.  Both modes consume the
    same draws from the stream, so they agree to roundoff for equal seeds.
    """
    if mode not in OBSERVE_MODES:
        raise ValueError("mode must be one of %s" % (OBSERVE_MODES,))
    channels = np.asarray(channels, dtype=complex)
    if channels.shape[1] != pattern.user_count:
        raise ValueError("channel count does not match the pattern")
    if pattern.pilot_count != config.pilot_length:
        raise ValueError("pattern and config disagree on the pilot length")
    rng = as_rng(rng_seed)
    m = channels.shape[0]
    tau, rho = config.pilot_length, config.train_snr
    noise = complex_normal(rng, (tau, m))
    if mode == "direct":
        obs = noise / np.sqrt(rho * tau)
        for p in range(1, tau + 1):
            group = pattern.group(p)
            if group:
                obs[p - 1] += channels[:, group].sum(axis=1)
        return obs
    pilots = pilot_matrix(pattern, symbol_power)
    dft = _unitary_dft(tau)
    # Rotating the white noise by the unitary DFT keeps it white while making
    # the correlated output land on the same draws as direct mode.
    block = channels @ pilots + np.sqrt(symbol_power / rho) * (noise.T @ dft.T)
    sequences = np.sqrt(tau * symbol_power) * dft
    return (block @ sequences.conj() / (tau * symbol_power)).T


def obs_covariance(pattern, covariances, config, pilot):
    """Covariance of the decorrelated observation for one 1-based pilot."""
    mats = cov_matrices(covariances)
    m = mats[0].shape[0]
    out = np.eye(m, dtype=complex) / (config.train_snr * config.pilot_length)
    for k in pattern.group(pilot):
        out += mats[k]
    return out


@dataclass
class TrainingOutput:
    """Observations with the matching MMSE estimates and error statistics."""

    observations: np.ndarray
    estimates: np.ndarray
    error_covs: list
    obs_covs: list


class MMSEEstimator:
    """Linear MMSE channel estimator precomputed for one pattern.

    Estimate k is R_k C_p^{-1} y_p for the user's pilot p, where C_p is the
    observation covariance.  Precomputing the per-user gain matrices makes
    repeated per-block estimation cheap.
    """

    def __init__(self, pattern, covariances, config):
        mats = cov_matrices(covariances)
        if len(mats) != pattern.user_count:
            raise ValueError("covariance count does not match the pattern")
        self.pattern = pattern
        self.config = config
        self.obs_covs = [obs_covariance(pattern, mats, config, p)
                         for p in range(1, pattern.pilot_count + 1)]
        self.gains = []
        self.error_covs = []
        for k, r in enumerate(mats):
            c = self.obs_covs[pattern.assignments[k] - 1]
            gain = solve_hermitian(c, r).conj().T  # R_k C^{-1}, both Hermitian
            self.gains.append(gain)
            self.error_covs.append(hermitize(r - gain @ r))

    def estimate(self, observations):
        """M x K estimates from a (tau, M) observation stack."""
        observations = np.asarray(observations, dtype=complex)
        k = self.pattern.user_count
        out = np.empty((observations.shape[1], k), dtype=complex)
        for j in range(k):
            out[:, j] = self.gains[j] @ observations[self.pattern.assignments[j] - 1]
        return out

    def run(self, observations):
        return TrainingOutput(
            observations=np.asarray(observations, dtype=complex),
            estimates=self.estimate(observations),
            error_covs=list(self.error_covs),
            obs_covs=list(self.obs_covs),
        )


def mmse_estimate(observations, pattern, covariances, config):
    """One-shot MMSE estimation; returns a TrainingOutput."""
    return MMSEEstimator(pattern, covariances, config).run(observations)


def error_covariances(pattern, covariances, config):
    """Per-user MMSE estimation error covariances R_k - R_k C_p^{-1} R_k."""
    return MMSEEstimator(pattern, covariances, config).error_covs


def cross_error_covariance(i, j, pattern, covariances, config):
    """Cross-covariance of the estimation errors of two distinct users.

    Zero unless the users share a pilot, in which case it is
    -R_i C_p^{-1} R_j.
    """
    if i == j:
        raise ValueError("cross covariance needs two distinct users")
    mats = cov_matrices(covariances)
    m = mats[0].shape[0]
    if pattern.assignments[i] != pattern.assignments[j]:
        return np.zeros((m, m), dtype=complex)
    c = obs_covariance(pattern, mats, config, pattern.assignments[i])
    return -mats[i] @ solve_hermitian(c, mats[j])


def mse_ce(pattern, covariances, config):
    """Sum channel estimation MSE: total trace of the error covariances."""
    return float(sum(np.real(np.trace(e)) for e in error_covariances(pattern, covariances, config)))


def mse_ce_minimum(covariances, config):
    """Interference-free floor of the sum channel estimation MSE.

    Achieved when every pair of users sharing a pilot has orthogonal
    covariance supports; each user then sees only its own covariance plus
    the scaled identity in the observation.
    """
    mats = cov_matrices(covariances)
    m = mats[0].shape[0]
    eye = np.eye(m, dtype=complex) / (config.train_snr * config.pilot_length)
    total = 0.0
    for r in mats:
        total += float(np.real(np.trace(r - r @ solve_hermitian(r + eye, r))))
    return total
