"""Experiment drivers behind the command line interface.

Each experiment builds a scenario from an ExperimentConfig, runs the
requested sweep, and returns ExperimentResult curves; `run` writes them to
a CSV file plus a JSON sidecar echoing the resolved configuration.
"""

import csv
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .channel import (ArrayGeometry, PowerAngleSpectrum, Scenario, covariance_asymptotic,
                      covariance_exact, sample_channels)
from .numerics import as_rng, block_rng, db_to_linear
from .scheduling import exhaustive_search, mse_sd_lb_minimum, mse_sd_lower_bound, sgps
from .simulation import (DIRECTIONS, ExperimentResult, LinkConfig, avg_mse_sd, dl_sum_rate,
                         map_blocks, net_spectral_efficiency, ot_baseline_tau, rate_vs_tau,
                         ul_sum_rate)
from .training import (MMSEEstimator, PRPattern, block_pattern, mse_ce, mse_ce_minimum,
                       observe_pilots, orthogonal_pattern)
from .transceiver import (analytic_mse_dl, analytic_mse_ul, robust_dl_precoder,
                          robust_ul_receiver)

CSV_HEADER = ("sweep_name", "sweep_value", "metric", "mean", "stderr", "trials", "seed")

# Fixed ten-user drop in the 120 degree sector, used whenever explicit mean
# angles are wanted but none are given.
DEFAULT_DROP_AOAS = (0.6592, 0.8499, -0.7812, 0.8658, 0.2772,
                     -0.8429, -0.4639, 0.0982, 0.9582, 0.9737)

DEFAULT_T_GRID = (10, 15, 20, 25, 30, 40)
CONVERGENCE_M_GRID = (32, 128, 512)

AOA_MODES = ("explicit", "uniform_sector")


class ConfigError(ValueError):
    """Invalid experiment configuration or command line usage."""


@dataclass
class ExperimentConfig:
    """Resolved inputs of one experiment run.

    snr_db values are in dB; mean_aoas are radians while the spread is in
    degrees.  trials means fading blocks for Monte Carlo sweeps and the
    number of random scenarios for the scheduler comparison.
    """

    experiment: str = ""
    seed: int = None
    antenna_count: int = 128
    user_count: int = 10
    angular_spread_deg: float = 10.0
    aoa_mode: str = "explicit"
    mean_aoas: tuple = None
    gains: tuple = None
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    pilot_length: int = 5
    block_length: int = 20
    block_length_grid: tuple = None
    trials: int = None
    es_cap: int = 1_000_000
    out: str = "results.csv"


DEFAULT_TRIALS = {
    "mse_sd_vs_snr": 2000,
    "mse_ce_vs_tau": 1,
    "mse_sd_lb_vs_tau": 1,
    "net_se_vs_T": 500,
    "net_se_vs_snr": 500,
    "duality_check": 100,
    "sgps_vs_es": 20,
    "convergence_sweep": 1,
}


def resolve_config(config):
    """Validate a configuration and materialize every defaulted field."""
    if config.experiment not in DEFAULT_TRIALS:
        raise ConfigError("unknown experiment %r; choose from %s"
                          % (config.experiment, sorted(DEFAULT_TRIALS)))
    if config.seed is None:
        raise ConfigError("a seed is required for reproducible runs")
    if int(config.seed) < 0:
        raise ConfigError("seed must be a nonnegative integer")
    if config.antenna_count < 1 or config.user_count < 1:
        raise ConfigError("antenna and user counts must be positive")
    if config.angular_spread_deg <= 0.0:
        raise ConfigError("angular_spread_deg must be positive")
    if config.aoa_mode not in AOA_MODES:
        raise ConfigError("aoa_mode must be one of %s" % (AOA_MODES,))
    if not config.snr_db:
        raise ConfigError("snr_db grid must be nonempty")
    if config.pilot_length < 1:
        raise ConfigError("tau must be at least 1")
    if config.block_length < config.pilot_length:
        raise ConfigError("tau exceeds the coherence block length T")
    if config.es_cap < 1:
        raise ConfigError("es_cap must be positive")
    if not config.out:
        raise ConfigError("an output path is required")
    mean_aoas = config.mean_aoas
    if config.aoa_mode == "explicit":
        if mean_aoas is None:
            if config.user_count > len(DEFAULT_DROP_AOAS):
                raise ConfigError("provide mean_aoas for more than %d users or use "
                                  "aoa_mode uniform_sector" % len(DEFAULT_DROP_AOAS))
            mean_aoas = DEFAULT_DROP_AOAS[:config.user_count]
        elif len(mean_aoas) != config.user_count:
            raise ConfigError("mean_aoas must list one angle per user")
    gains = config.gains
    if gains is None:
        gains = (1.0,) * config.user_count
    elif len(gains) != config.user_count:
        raise ConfigError("gains must list one value per user")
    elif any(b <= 0 for b in gains):
        raise ConfigError("gains must be positive")
    grid = config.block_length_grid
    if config.experiment == "net_se_vs_T" and grid is None:
        grid = DEFAULT_T_GRID
    if grid is not None:
        grid = tuple(int(t) for t in grid)
        if any(t < 2 for t in grid):
            raise ConfigError("block length grid entries must be at least 2")
    trials = config.trials if config.trials is not None else DEFAULT_TRIALS[config.experiment]
    if trials < 1:
        raise ConfigError("trials must be positive")
    return replace(config, seed=int(config.seed),
                   mean_aoas=tuple(float(a) for a in mean_aoas) if mean_aoas is not None else None,
                   gains=tuple(float(b) for b in gains), block_length_grid=grid,
                   trials=int(trials), snr_db=tuple(float(s) for s in config.snr_db))


def generate_scenario(config, seed):
    """Scenario from the config's array, spread, and AoA settings.

    Explicit mode uses the configured (or default) mean angles; the uniform
    mode draws them from the 120 degree sector using the given seed.
    """
    sigma = float(np.deg2rad(config.angular_spread_deg))
    k = config.user_count
    if config.aoa_mode == "explicit":
        aoas = config.mean_aoas if config.mean_aoas is not None else DEFAULT_DROP_AOAS[:k]
        if len(aoas) != k:
            raise ConfigError("mean_aoas must list one angle per user")
    else:
        rng = as_rng(seed)
        aoas = rng.uniform(-np.pi / 3.0, np.pi / 3.0, size=k)
    gains = config.gains if config.gains is not None else (1.0,) * k
    geometry = ArrayGeometry(config.antenna_count)
    spectra = [PowerAngleSpectrum("truncated_laplacian", float(a), sigma, float(b))
               for a, b in zip(aoas, gains)]
    covs = [covariance_exact(geometry, pas) for pas in spectra]
    return Scenario(geometry=geometry, spectra=spectra, covariances=covs)


def _snr_label(snr_db):
    return ("%g" % snr_db).replace(".", "p")


class _CurveSet:
    """Accumulates (sweep_value, mean, stderr) points per metric."""

    def __init__(self, sweep_name, trials, seed):
        self.sweep_name = sweep_name
        self.trials = trials
        self.seed = seed
        self.points = {}

    def add(self, metric, sweep_value, mean, stderr=0.0):
        self.points.setdefault(metric, []).append((sweep_value, float(mean), float(stderr)))

    def results(self):
        out = []
        for metric, entries in self.points.items():
            out.append(ExperimentResult(
                self.sweep_name, metric,
                [e[0] for e in entries], [e[1] for e in entries], [e[2] for e in entries],
                self.trials, self.seed))
        return out


def _symmetric_link(snr_lin, tau, block_length):
    return LinkConfig(train_snr=snr_lin, ul_snr=snr_lin, dl_snr=snr_lin,
                      pilot_length=tau, block_length=block_length)


def _reuse_pattern(covariances, tau):
    """Greedy pattern for 1 < tau < K, trivial patterns at the ends."""
    k = len(covariances)
    if tau >= k:
        return orthogonal_pattern(k)
    if tau == 1:
        return PRPattern((1,) * k, 1)
    return sgps(covariances, tau)


def mse_sd_vs_snr(config):
    """Detection-MSE curves over SNR for a block pattern, the greedy
    pattern, both receiver kinds, and the analytic lower bounds."""
    scenario = generate_scenario(config, config.seed)
    k, tau = config.user_count, config.pilot_length
    if not 1 < tau < k:
        raise ConfigError("mse_sd_vs_snr needs 1 < tau < K")
    patterns = (("pattern_a", block_pattern(k, tau)),
                ("pattern_b", sgps(scenario.covariances, tau)))
    curves = _CurveSet("snr_db", config.trials, config.seed)
    for snr_db in config.snr_db:
        rho = float(db_to_linear(snr_db))
        link = _symmetric_link(rho, tau, config.block_length)
        for pat_name, pattern in patterns:
            for kind in ("robust", "conventional"):
                mean, err = avg_mse_sd(scenario, pattern, link, receiver=kind,
                                       blocks=config.trials, seed=config.seed)
                curves.add("mse_sd_%s_%s" % (kind, pat_name), snr_db, mean, err)
            bound = mse_sd_lower_bound(pattern, scenario.covariances, link.pilot_config(), rho)
            curves.add("mse_sd_lower_bound_%s" % pat_name, snr_db, bound)
    return curves.results()


def _tau_sweep(config, evaluate):
    """Shared tau sweep over 2..K-1 at every configured SNR."""
    scenario = generate_scenario(config, config.seed)
    k = config.user_count
    if k < 3:
        raise ConfigError("tau sweeps need at least 3 users")
    taus = list(range(2, k))
    patterns = {tau: sgps(scenario.covariances, tau) for tau in taus}
    curves = _CurveSet("tau", config.trials, config.seed)
    for snr_db in config.snr_db:
        rho = float(db_to_linear(snr_db))
        label = _snr_label(snr_db)
        for tau in taus:
            for metric, value in evaluate(scenario, patterns[tau], tau, rho, label):
                curves.add(metric, tau, value)
    return curves.results()


def mse_ce_vs_tau(config):
    """Channel estimation MSE of the greedy scheduler against the
    interference-free floor and (where affordable) the exhaustive optimum."""
    def evaluate(scenario, pattern, tau, rho, label):
        cfg = _symmetric_link(rho, tau, max(tau, config.block_length)).pilot_config()
        covs = scenario.covariances
        yield "mse_ce_sgps_%sdb" % label, mse_ce(pattern, covs, cfg)
        yield "mse_ce_min_%sdb" % label, mse_ce_minimum(covs, cfg)
        if tau ** scenario.user_count <= config.es_cap:
            _, best = exhaustive_search("mmse_ce", covs, cfg, rho, cap=config.es_cap)
            yield "mse_ce_es_%sdb" % label, best

    return _tau_sweep(config, evaluate)


def mse_sd_lb_vs_tau(config):
    """Detection-MSE lower bound of the greedy scheduler against its floor
    and (where affordable) the exhaustive optimum."""
    def evaluate(scenario, pattern, tau, rho, label):
        cfg = _symmetric_link(rho, tau, max(tau, config.block_length)).pilot_config()
        covs = scenario.covariances
        yield "mse_sd_lb_sgps_%sdb" % label, mse_sd_lower_bound(pattern, covs, cfg, rho)
        yield "mse_sd_lb_min_%sdb" % label, mse_sd_lb_minimum(covs, cfg, rho)
        if tau ** scenario.user_count <= config.es_cap:
            _, best = exhaustive_search("mmse_sd_lb", covs, cfg, rho, cap=config.es_cap)
            yield "mse_sd_lb_es_%sdb" % label, best

    return _tau_sweep(config, evaluate)


def _ot_rate(scenario, snr_lin, block_length, direction, blocks, seed):
    """Net rate of the orthogonal-training baseline at one block length."""
    tau, served = ot_baseline_tau(scenario.user_count, block_length)
    sub = scenario.subset(range(served))
    link = _symmetric_link(snr_lin, tau, block_length)
    if direction == "ul":
        rate, err = ul_sum_rate(sub, orthogonal_pattern(served), link, blocks=blocks, seed=seed)
    else:
        rate, err = dl_sum_rate(sub, orthogonal_pattern(served), link, blocks=blocks, seed=seed)
    factor = 1.0 - tau / block_length
    return factor * rate, factor * err


def _best_net(table, block_length):
    """Best (tau, net, stderr) from a rate table; ties favor shorter pilots."""
    best = None
    for tau in sorted(table):
        if tau > block_length:
            continue
        mean, err = table[tau]
        net = net_spectral_efficiency(tau, block_length, mean)
        if best is None or net > best[1]:
            best = (tau, net, (1.0 - tau / block_length) * err)
    return best


def net_se_vs_T(config):
    """Net spectral efficiency of dynamic pilot reuse and the orthogonal
    baseline across coherence block lengths, for both link directions."""
    scenario = generate_scenario(config, config.seed)
    rho = float(db_to_linear(config.snr_db[0]))
    grid = config.block_length_grid or DEFAULT_T_GRID
    top = max(grid)
    curves = _CurveSet("T", config.trials, config.seed)
    for direction in DIRECTIONS:
        link = _symmetric_link(rho, min(2, top), top)
        table = rate_vs_tau(scenario, link, direction=direction,
                            blocks=config.trials, seed=config.seed)
        ot_cache = {}
        for t in grid:
            best = _best_net(table, t)
            if best is None:
                raise ConfigError("no feasible pilot length for T = %d" % t)
            tau_star, net, err = best
            key = ot_baseline_tau(scenario.user_count, t)
            if key not in ot_cache:
                ot_cache[key] = _ot_rate(scenario, rho, t, direction,
                                         config.trials, config.seed)
            ot_net, ot_err = ot_cache[key]
            curves.add("net_se_pr_%s" % direction, t, net, err)
            curves.add("tau_star_%s" % direction, t, tau_star)
            curves.add("net_se_ot_%s" % direction, t, ot_net, ot_err)
    return curves.results()


def net_se_vs_snr(config):
    """Net spectral efficiency of dynamic pilot reuse and the orthogonal
    baseline across SNR at a fixed coherence block length."""
    scenario = generate_scenario(config, config.seed)
    t = config.block_length
    curves = _CurveSet("snr_db", config.trials, config.seed)
    for snr_db in config.snr_db:
        rho = float(db_to_linear(snr_db))
        for direction in DIRECTIONS:
            link = _symmetric_link(rho, min(2, t), t)
            table = rate_vs_tau(scenario, link, direction=direction,
                                blocks=config.trials, seed=config.seed)
            best = _best_net(table, t)
            if best is None:
                raise ConfigError("no feasible pilot length for T = %d" % t)
            tau_star, net, err = best
            ot_net, ot_err = _ot_rate(scenario, rho, t, direction,
                                      config.trials, config.seed)
            curves.add("net_se_pr_%s" % direction, snr_db, net, err)
            curves.add("tau_star_%s" % direction, snr_db, tau_star)
            curves.add("net_se_ot_%s" % direction, snr_db, ot_net, ot_err)
    return curves.results()


def duality_check(config):
    """Per-block agreement between the uplink and downlink optimal MSEs and
    between the scaled precoder and the combiner, at one symmetric SNR."""
    scenario = generate_scenario(config, config.seed)
    tau = config.pilot_length
    if tau > scenario.user_count:
        raise ConfigError("duality_check needs tau <= K")
    snr_db = config.snr_db[0]
    rho = float(db_to_linear(snr_db))
    link = _symmetric_link(rho, tau, config.block_length)
    pattern = _reuse_pattern(scenario.covariances, tau)
    estimator = MMSEEstimator(pattern, scenario.covariances, link.pilot_config())

    def one_block(index):
        rng = block_rng(config.seed, index)
        g = sample_channels(scenario, rng)
        obs = observe_pilots(g, pattern, link.pilot_config(), rng)
        g_hat = estimator.estimate(obs)
        comb = robust_ul_receiver(g_hat, estimator.error_covs, link.ul_snr)
        pre = robust_dl_precoder(g_hat, estimator.error_covs, link.dl_snr)
        mse_ul = analytic_mse_ul(comb, g_hat, estimator.error_covs, link.ul_snr)
        mse_dl = analytic_mse_dl(pre, pre.alpha, g_hat, estimator.error_covs, link.dl_snr)
        scale = np.linalg.norm(comb.matrix)
        gap = np.linalg.norm(pre.gamma * pre.matrix - comb.matrix) / scale
        return abs(mse_ul - mse_dl), gap, mse_ul

    rows = map_blocks(one_block, config.trials)
    mses = np.array([r[2] for r in rows])
    stderr = float(mses.std(ddof=1) / np.sqrt(len(mses))) if len(mses) > 1 else 0.0
    curves = _CurveSet("snr_db", config.trials, config.seed)
    curves.add("max_abs_mse_gap", snr_db, max(r[0] for r in rows))
    curves.add("max_rel_precoder_gap", snr_db, max(r[1] for r in rows))
    curves.add("mean_mse_sd", snr_db, float(mses.mean()), stderr)
    return curves.results()


def sgps_vs_es(config):
    """Cost ratio of the greedy scheduler to the exhaustive optimum over
    random scenarios, for both criteria, across tau and SNR."""
    k = config.user_count
    taus = [t for t in (2, 3, 4) if 1 < t < k and t ** k <= config.es_cap]
    if not taus:
        raise ConfigError("no tau in 2..4 is both valid and within es_cap")
    scenarios = [generate_scenario(replace(config, aoa_mode="uniform_sector"),
                                   config.seed + i) for i in range(config.trials)]
    curves = _CurveSet("tau", config.trials, config.seed)
    for tau in taus:
        patterns = [sgps(s.covariances, tau) for s in scenarios]
        for snr_db in config.snr_db:
            rho = float(db_to_linear(snr_db))
            label = _snr_label(snr_db)
            cfg = _symmetric_link(rho, tau, max(tau, config.block_length)).pilot_config()
            ratio_ce = []
            ratio_lb = []
            for scen, pattern in zip(scenarios, patterns):
                covs = scen.covariances
                _, best_ce = exhaustive_search("mmse_ce", covs, cfg, rho, cap=config.es_cap)
                ratio_ce.append(mse_ce(pattern, covs, cfg) / best_ce)
                _, best_lb = exhaustive_search("mmse_sd_lb", covs, cfg, rho, cap=config.es_cap)
                ratio_lb.append(mse_sd_lower_bound(pattern, covs, cfg, rho) / best_lb)
            for name, vals in (("ce", ratio_ce), ("sd_lb", ratio_lb)):
                arr = np.asarray(vals)
                err = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
                curves.add("ratio_%s_max_%sdb" % (name, label), tau, float(arr.max()))
                curves.add("ratio_%s_mean_%sdb" % (name, label), tau, float(arr.mean()), err)
    return curves.results()


def convergence_sweep(config):
    """Entrywise agreement of the large-array covariance model with the
    exact covariance as the array grows, plus the basis unitarity check."""
    sigma = float(np.deg2rad(config.angular_spread_deg))
    aoa = config.mean_aoas[0] if config.mean_aoas else DEFAULT_DROP_AOAS[0]
    gain = config.gains[0] if config.gains else 1.0
    pas = PowerAngleSpectrum("truncated_laplacian", float(aoa), sigma, float(gain))
    entries = ((1, 1), (1, 2), (2, 3))
    curves = _CurveSet("M", 1, config.seed)
    for m in CONVERGENCE_M_GRID:
        geometry = ArrayGeometry(m)
        exact = covariance_exact(geometry, pas, quadrature_points=8192).matrix
        asym = covariance_asymptotic(geometry, pas)
        v = asym.eigenvectors
        unitarity = v.conj().T @ v - np.eye(m)
        model = exact - asym.matrix()
        for i, j in entries:
            curves.add("unitarity_dev_%d%d" % (i, j), m, float(np.abs(unitarity[i - 1, j - 1])))
            curves.add("model_dev_%d%d" % (i, j), m, float(np.abs(model[i - 1, j - 1])))
    return curves.results()


EXPERIMENTS = {
    "mse_sd_vs_snr": mse_sd_vs_snr,
    "mse_ce_vs_tau": mse_ce_vs_tau,
    "mse_sd_lb_vs_tau": mse_sd_lb_vs_tau,
    "net_se_vs_T": net_se_vs_T,
    "net_se_vs_snr": net_se_vs_snr,
    "duality_check": duality_check,
    "sgps_vs_es": sgps_vs_es,
    "convergence_sweep": convergence_sweep,
}


def _format_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_results(config, results):
    """Write the CSV table and its JSON config sidecar; returns both paths."""
    out = Path(config.out)
    if not out.parent.exists():
        raise ConfigError("output directory %s does not exist" % out.parent)
    sidecar = out.with_suffix(".json")
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for result in results:
            for row in result.rows():
                writer.writerow([_format_cell(v) for v in row])
    with open(sidecar, "w") as fh:
        json.dump({"config": asdict(config)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out, sidecar


def run(config):
    """Resolve the config, run its experiment, and write CSV plus sidecar.

    Returns (resolved config, results, csv path, sidecar path).  Nothing is
    written unless the whole experiment finishes.
    """
    config = resolve_config(config)
    results = EXPERIMENTS[config.experiment](config)
    csv_path, sidecar = write_results(config, results)
    return config, results, csv_path, sidecar


def config_field_names():
    return tuple(f.name for f in fields(ExperimentConfig))
