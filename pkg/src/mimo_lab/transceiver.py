"""Uplink combining and downlink precoding robust to channel estimation error.

The robust designs regularize with the sum of the estimation error
covariances; closed-form conditional mean square errors are provided for
both link directions.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import solve_hermitian


@dataclass
class UplinkReceiver:
    """Linear receive combiner; column k detects stream k via w_k^T y."""

    matrix: np.ndarray


@dataclass
class DownlinkPrecoder:
    """Linear precoder with its power normalization and receiver scaling.

    gamma normalizes the transmit power so tr(B B^H) = K; alpha is the
    matching scalar the user terminals apply to their received samples.
    """

    matrix: np.ndarray
    alpha: float
    gamma: float


def _matrix_of(obj):
    return obj.matrix if hasattr(obj, "matrix") else np.asarray(obj, dtype=complex)


def effective_noise_cov(error_covs, snr):
    """Sum of the estimation error covariances plus I / snr."""
    if snr <= 0.0:
        raise ValueError("snr must be positive")
    if not error_covs:
        raise ValueError("need at least one error covariance")
    m = error_covs[0].shape[0]
    out = np.eye(m, dtype=complex) / snr
    for e in error_covs:
        out = out + e
    return out


def _regularized_inverse_times(g_hat, error_covs, snr):
    """(G G^H + sum error covs + I/snr)^{-1} G."""
    q = g_hat @ g_hat.conj().T + effective_noise_cov(error_covs, snr)
    return solve_hermitian(q, g_hat)


def robust_ul_receiver(g_hat, error_covs, ul_snr):
    """Sum-MSE optimal combiner aware of the channel estimation error."""
    g_hat = np.asarray(g_hat, dtype=complex)
    return UplinkReceiver(_regularized_inverse_times(g_hat, error_covs, ul_snr).conj())


def conventional_receiver(g_hat, ul_snr):
    """Estimate-as-truth MMSE combiner; ignores the estimation error term."""
    g_hat = np.asarray(g_hat, dtype=complex)
    m = g_hat.shape[0]
    q = g_hat @ g_hat.conj().T + np.eye(m, dtype=complex) / ul_snr
    return UplinkReceiver(solve_hermitian(q, g_hat).conj())


def analytic_mse_ul(receiver, g_hat, error_covs, ul_snr):
    """Conditional uplink sum MSE of a linear combiner given the estimate.

    Averages over data symbols, noise, and the estimation error; valid for
    any combiner, not just the optimal one.
    """
    w = _matrix_of(receiver)
    g_hat = np.asarray(g_hat, dtype=complex)
    k = g_hat.shape[1]
    q = g_hat @ g_hat.conj().T + effective_noise_cov(error_covs, ul_snr)
    quad = np.sum(w * (q @ w.conj())).real
    cross = np.sum(w * g_hat).real
    return float(quad + k - 2.0 * cross)


def mmse_sd_closed_form(g_hat, error_covs, snr):
    """Minimum conditional sum MSE of linear symbol detection.

    Equals the trace of (I_K + G^H E^{-1} G)^{-1} where E is the effective
    noise covariance; the robust combiner and precoder both attain it.
    """
    g_hat = np.asarray(g_hat, dtype=complex)
    k = g_hat.shape[1]
    e = effective_noise_cov(error_covs, snr)
    inner = np.eye(k, dtype=complex) + g_hat.conj().T @ solve_hermitian(e, g_hat)
    return float(np.real(np.trace(solve_hermitian(inner, np.eye(k, dtype=complex)))))


def robust_dl_precoder(g_hat, error_covs, dl_snr):
    """Sum-MSE optimal precoder under the transmit power constraint.

    Scales the regularized inverse so tr(B B^H) = K; the optimal receiver
    scaling alpha coincides with the power normalization gamma.
    """
    g_hat = np.asarray(g_hat, dtype=complex)
    if not np.any(g_hat):
        raise ValueError("channel estimate is identically zero")
    k = g_hat.shape[1]
    core = _regularized_inverse_times(g_hat, error_covs, dl_snr)
    gamma = float(np.linalg.norm(core) / np.sqrt(k))
    return DownlinkPrecoder(core.conj() / gamma, alpha=gamma, gamma=gamma)


def analytic_mse_dl(precoder, alpha, g_hat, error_covs, dl_snr):
    """Conditional downlink sum MSE of a precoder and receiver scaling.

    Averages over data symbols, noise, and the estimation error; valid for
    any power-feasible precoder and positive alpha.
    """
    b = _matrix_of(precoder)
    g_hat = np.asarray(g_hat, dtype=complex)
    k = g_hat.shape[1]
    err_sum = np.zeros((g_hat.shape[0],) * 2, dtype=complex)
    for e in error_covs:
        err_sum = err_sum + e
    s = g_hat.conj() @ g_hat.T + err_sum.conj()
    quad = alpha ** 2 * np.sum(b.conj() * (s @ b)).real
    cross = 2.0 * alpha * np.sum(g_hat * b).real
    return float(quad - cross + (alpha ** 2 / dl_snr + 1.0) * k)
