"""Monte Carlo experiments over fading blocks: sum-MSE curves, achievable
sum rates, and net spectral efficiency optimization over the pilot length."""

import os
from dataclasses import dataclass, replace
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .channel import sample_channels
from .numerics import block_rng
from .scheduling import sgps
from .training import MMSEEstimator, PilotConfig, observe_pilots, orthogonal_pattern
from .transceiver import (analytic_mse_ul, conventional_receiver,
                          robust_dl_precoder, robust_ul_receiver)

RECEIVER_KINDS = ("robust", "conventional")
DIRECTIONS = ("ul", "dl")

THREADS_ENV = "MIMO_LAB_THREADS"


@dataclass(frozen=True)
class LinkConfig:
    """Per-link simulation parameters (all SNRs linear).

    pilot_length is the training duration tau in symbols; block_length is
    the coherence block length T in symbols.
    """

    train_snr: float
    ul_snr: float
    dl_snr: float
    pilot_length: int
    block_length: int

    def __post_init__(self):
        if min(self.train_snr, self.ul_snr, self.dl_snr) <= 0.0:
            raise ValueError("SNRs must be positive")
        if self.pilot_length < 1:
            raise ValueError("pilot_length must be at least 1")
        if self.pilot_length > self.block_length:
            raise ValueError("pilot_length cannot exceed block_length")

    def pilot_config(self):
        return PilotConfig(self.pilot_length, self.train_snr)


@dataclass
class ExperimentResult:
    """One metric traced over a sweep, with Monte Carlo error bars."""

    sweep_name: str
    metric: str
    sweep_values: list
    means: list
    stderrs: list
    trials: int
    seed: int

    def __post_init__(self):
        if not (len(self.sweep_values) == len(self.means) == len(self.stderrs)):
            raise ValueError("sweep values, means, and stderrs must align")
        if any(err < 0.0 for err in self.stderrs):
            raise ValueError("standard errors cannot be negative")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")

    def rows(self):
        """CSV rows: (sweep_name, sweep_value, metric, mean, stderr, trials, seed)."""
        for value, mean, err in zip(self.sweep_values, self.means, self.stderrs):
            yield (self.sweep_name, value, self.metric, mean, err, self.trials, self.seed)


def worker_count():
    """Thread cap from the MIMO_LAB_THREADS environment variable (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ValueError("%s must be an integer, got %r" % (THREADS_ENV, raw)) from None
    return max(1, value)


def map_blocks(fn, n_blocks):
    """Evaluate fn(block_index) for every block, optionally in a thread pool.

    Results are collected into block order before any reduction, so the
    output is identical for every thread count.
    """
    workers = min(worker_count(), n_blocks)
    if workers <= 1:
        return [fn(i) for i in range(n_blocks)]
    results = [None] * n_blocks
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, i): i for i in range(n_blocks)}
        for future in futures:
            results[futures[future]] = future.result()
    return results


def _mean_stderr(values):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / np.sqrt(values.size))


def avg_mse_sd(scenario, pattern, link, receiver="robust", blocks=2000, seed=0,
               estimator_covariances=None):
    """Monte Carlo average of the conditional sum detection MSE.

    Per block: draw channels, observe pilots, estimate, build the chosen
    combiner, and evaluate its analytic sum MSE under the true estimation
    error statistics.  `estimator_covariances` lets the estimator and
    combiner run on surrogate covariances (for example empirical ones)
    while the evaluation stays matched to the true statistics.
    Returns (mean, stderr).
    """
    if receiver not in RECEIVER_KINDS:
        raise ValueError("receiver must be one of %s" % (RECEIVER_KINDS,))
    if blocks < 1:
        raise ValueError("need at least one block")
    cfg = link.pilot_config()
    true_est = MMSEEstimator(pattern, scenario.covariances, cfg)
    if estimator_covariances is None:
        design_est = true_est
    else:
        design_est = MMSEEstimator(pattern, estimator_covariances, cfg)

    def one_block(index):
        rng = block_rng(seed, index)
        g = sample_channels(scenario, rng)
        obs = observe_pilots(g, pattern, cfg, rng)
        g_hat_design = design_est.estimate(obs)
        if receiver == "robust":
            comb = robust_ul_receiver(g_hat_design, design_est.error_covs, link.ul_snr)
        else:
            comb = conventional_receiver(g_hat_design, link.ul_snr)
        if design_est is true_est:
            g_hat_true = g_hat_design
        else:
            g_hat_true = true_est.estimate(obs)
        return analytic_mse_ul(comb, g_hat_true, true_est.error_covs, link.ul_snr)

    return _mean_stderr(map_blocks(one_block, blocks))


def _ul_rate_block(w, g_hat, error_covs, ul_snr):
    """Sum log2(1 + SINR) for one block given the combiner and estimate."""
    m = g_hat.shape[0]
    q = g_hat @ g_hat.conj().T + np.eye(m, dtype=complex) / ul_snr
    for e in error_covs:
        q = q + e
    total = np.sum(w * (q @ w.conj()), axis=0).real
    signal = np.abs(np.sum(w * g_hat, axis=0)) ** 2
    sinr = signal / (total - signal)
    return float(np.sum(np.log2(1.0 + sinr)))


def ul_sum_rate(scenario, pattern, link, blocks=500, seed=0):
    """Achievable uplink sum rate (bits/s/Hz) with the robust combiner.

    Treats the estimation error of every user plus thermal noise as
    effective noise in the per-stream SINR.  Returns (mean, stderr) over
    fading blocks.
    """
    if blocks < 1:
        raise ValueError("need at least one block")
    cfg = link.pilot_config()
    estimator = MMSEEstimator(pattern, scenario.covariances, cfg)

    def one_block(index):
        rng = block_rng(seed, index)
        g = sample_channels(scenario, rng)
        obs = observe_pilots(g, pattern, cfg, rng)
        g_hat = estimator.estimate(obs)
        comb = robust_ul_receiver(g_hat, estimator.error_covs, link.ul_snr)
        return _ul_rate_block(comb.matrix, g_hat, estimator.error_covs, link.ul_snr)

    return _mean_stderr(map_blocks(one_block, blocks))


def dl_sum_rate(scenario, pattern, link, blocks=500, seed=0, batches=10):
    """Achievable downlink sum rate (bits/s/Hz) with the robust precoder.

    The per-user SINR combines expectations taken across fading blocks
    (hardened effective gains), so the error bar comes from assembling the
    rate on disjoint batches of blocks.  Returns (mean, stderr).
    """
    if blocks < 1:
        raise ValueError("need at least one block")
    cfg = link.pilot_config()
    estimator = MMSEEstimator(pattern, scenario.covariances, cfg)
    k = scenario.user_count

    def one_block(index):
        rng = block_rng(seed, index)
        g = sample_channels(scenario, rng)
        obs = observe_pilots(g, pattern, cfg, rng)
        g_hat = estimator.estimate(obs)
        pre = robust_dl_precoder(g_hat, estimator.error_covs, link.dl_snr)
        effective = g.T @ pre.matrix  # (K, K): entry (k, m) couples user k to stream m
        return pre.alpha * np.diag(effective), pre.alpha ** 2 * np.abs(effective) ** 2, pre.alpha ** 2

    samples = map_blocks(one_block, blocks)

    def assemble(subset):
        signal = np.zeros(k, dtype=complex)
        power = np.zeros((k, k))
        alpha_sq = 0.0
        for idx in subset:
            s, p, a2 = samples[idx]
            signal += s
            power += p
            alpha_sq += a2
        n = len(subset)
        signal /= n
        power /= n
        alpha_sq /= n
        desired = np.abs(signal) ** 2
        interference = power.sum(axis=1) - desired + alpha_sq / link.dl_snr
        interference = np.maximum(interference, 1e-15)
        return float(np.sum(np.log2(1.0 + desired / interference)))

    mean = assemble(range(blocks))
    batches = max(1, min(batches, blocks))
    if batches < 2:
        return mean, 0.0
    edges = np.linspace(0, blocks, batches + 1).astype(int)
    rates = [assemble(range(a, b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    stderr = float(np.std(rates, ddof=1) / np.sqrt(len(rates)))
    return mean, stderr


def net_spectral_efficiency(pilot_length, block_length, rate):
    """Training-overhead discounted rate (1 - tau / T) * rate."""
    if pilot_length < 0:
        raise ValueError("pilot_length must be nonnegative")
    if pilot_length > block_length:
        raise ValueError("pilot_length cannot exceed block_length")
    return (1.0 - pilot_length / block_length) * rate


def rate_vs_tau(scenario, link, direction="ul", blocks=500, seed=0, taus=None):
    """Sum rate (mean, stderr) for each candidate pilot length.

    Pilot lengths 2..K-1 use the greedy scheduler; tau = K uses orthogonal
    pilots.  Candidates longer than the coherence block are skipped.
    Returns {tau: (mean, stderr)}.
    """
    if direction not in DIRECTIONS:
        raise ValueError("direction must be one of %s" % (DIRECTIONS,))
    k = scenario.user_count
    if taus is None:
        taus = list(range(2, k + 1))
    table = {}
    for tau in taus:
        if tau > link.block_length:
            continue
        pattern = orthogonal_pattern(k) if tau >= k else sgps(scenario.covariances, tau)
        cfg = replace(link, pilot_length=tau)
        if direction == "ul":
            table[tau] = ul_sum_rate(scenario, pattern, cfg, blocks=blocks, seed=seed)
        else:
            table[tau] = dl_sum_rate(scenario, pattern, cfg, blocks=blocks, seed=seed)
    return table


def optimize_pilot_length(scenario, link, direction="ul", blocks=500, seed=0):
    """Best pilot length for net spectral efficiency.

    Sweeps tau over 2..K (orthogonal training at tau = K), discounts each
    rate by its training overhead, and returns (tau, net rate).  Ties
    resolve to the shorter pilot.
    """
    table = rate_vs_tau(scenario, link, direction=direction, blocks=blocks, seed=seed)
    if not table:
        raise ValueError("no feasible pilot length fits the coherence block")
    best_tau, best_net = None, None
    for tau in sorted(table):
        net = net_spectral_efficiency(tau, link.block_length, table[tau][0])
        if best_net is None or net > best_net:
            best_tau, best_net = tau, net
    return best_tau, best_net


def ot_baseline_tau(user_count, block_length):
    """Orthogonal-training baseline: pilot length and number of served users.

    Serves everyone when K fits in half the block, otherwise the
    lowest-index floor(T / 2) users with one pilot each.
    """
    if 2 * user_count <= block_length:
        return user_count, user_count
    served = block_length // 2
    return served, served
