"""End-to-end acceptance checks.

Each test prints one `criterion N: PASS/FAIL - detail` line and then
asserts the requirement at its stated tolerance.  Two checks (5 and 7)
probe tightness targets that the implemented algorithms do not reach on
this geometry; they are implemented faithfully and fail honestly.  The
README describes what each criterion covers.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np

from conftest import PATTERN_A, PATTERN_B, disjoint_dft_covariances, random_covariances
from mimo_lab.channel import (ArrayGeometry, PowerAngleSpectrum, Scenario,
                              covariance_asymptotic, covariance_exact, sample_channels)
from mimo_lab.experiments import ExperimentConfig, generate_scenario
from mimo_lab.numerics import block_rng, complex_normal, db_to_linear, psd_sqrt
from mimo_lab.scheduling import exhaustive_search, mse_sd_lower_bound, sgps
from mimo_lab.simulation import (LinkConfig, avg_mse_sd, dl_sum_rate,
                                 net_spectral_efficiency, ot_baseline_tau, rate_vs_tau,
                                 ul_sum_rate)
from mimo_lab.training import (MMSEEstimator, PilotConfig, PRPattern,
                               cross_error_covariance, mse_ce, mse_ce_minimum,
                               observe_pilots, orthogonal_pattern)
from mimo_lab.transceiver import (analytic_mse_dl, analytic_mse_ul, robust_dl_precoder,
                                  robust_ul_receiver)


def _report(number, ok, detail):
    print("criterion %d: %s - %s" % (number, "PASS" if ok else "FAIL", detail))


def test_criterion_01_uplink_downlink_duality(drop_scenario):
    start = time.monotonic()
    rho = float(db_to_linear(10.0))
    link = LinkConfig(rho, rho, rho, 5, 20)
    est = MMSEEstimator(PATTERN_B, drop_scenario.covariances, link.pilot_config())
    worst_mse = 0.0
    worst_pre = 0.0
    for index in range(100):
        rng = block_rng(41, index)
        g = sample_channels(drop_scenario, rng)
        obs = observe_pilots(g, PATTERN_B, link.pilot_config(), rng)
        g_hat = est.estimate(obs)
        comb = robust_ul_receiver(g_hat, est.error_covs, rho)
        pre = robust_dl_precoder(g_hat, est.error_covs, rho)
        mse_ul = analytic_mse_ul(comb, g_hat, est.error_covs, rho)
        mse_dl = analytic_mse_dl(pre, pre.alpha, g_hat, est.error_covs, rho)
        worst_mse = max(worst_mse, abs(mse_ul - mse_dl))
        gap = np.linalg.norm(pre.gamma * pre.matrix - comb.matrix)
        worst_pre = max(worst_pre, gap / np.linalg.norm(comb.matrix))
    elapsed = time.monotonic() - start
    ok = worst_mse <= 1e-9 and worst_pre <= 1e-9 and elapsed < 60.0
    _report(1, ok, "worst MSE gap %.2e, worst precoder gap %.2e over 100 blocks, %.1fs"
            % (worst_mse, worst_pre, elapsed))
    assert ok


def test_criterion_02_disjoint_supports_attain_the_floor():
    start = time.monotonic()
    covs = disjoint_dft_covariances(128, 6, 18, block_rng(43, 0))
    cfg = PilotConfig(3, float(db_to_linear(10.0)))
    ce = mse_ce(PRPattern((1, 2, 3, 1, 2, 3), 3), covs, cfg)
    floor = mse_ce_minimum(covs, cfg)
    gap = abs(ce - floor) / floor
    violations = 0
    for s in range(100):
        rng = block_rng(44, s)
        m = int(rng.integers(4, 10))
        k = int(rng.integers(2, 6))
        rcovs = random_covariances(rng, m, k)
        tau = int(rng.integers(1, k + 1))
        assign = [int(rng.integers(1, tau + 1)) for _ in range(k)]
        labels = sorted(set(assign))
        pat = PRPattern(tuple(labels.index(a) + 1 for a in assign), len(labels))
        rcfg = PilotConfig(len(labels), 2.0)
        if mse_ce(pat, rcovs, rcfg) < mse_ce_minimum(rcovs, rcfg) - 1e-10:
            violations += 1
    elapsed = time.monotonic() - start
    ok = gap <= 1e-8 and violations == 0 and elapsed < 60.0
    _report(2, ok, "disjoint-support relative gap %.2e, %d floor violations in 100 "
            "random scenarios, %.1fs" % (gap, violations, elapsed))
    assert ok


def test_criterion_03_small_system_conditioning():
    covs = random_covariances(block_rng(501, 0), 4, 2)
    mats = [c.matrix for c in covs]
    pat = PRPattern((1, 1), 1)
    rho = float(db_to_linear(7.0))
    cfg = PilotConfig(1, rho)
    est = MMSEEstimator(pat, covs, cfg)
    # Extract the estimator's linear map one canonical observation at a time
    # and compare against textbook Gaussian conditioning of [g1; g2; y].
    maps = [np.zeros((4, 4), dtype=complex) for _ in range(2)]
    for i in range(4):
        obs = np.zeros((1, 4), dtype=complex)
        obs[0, i] = 1.0
        g_hat = est.estimate(obs)
        for k in range(2):
            maps[k][:, i] = g_hat[:, k]
    c = mats[0] + mats[1] + np.eye(4) / rho
    c_inv = np.linalg.inv(c)
    worst = 0.0
    for k in range(2):
        worst = max(worst, np.max(np.abs(maps[k] - mats[k] @ c_inv)))
        cond_cov = mats[k] - mats[k] @ c_inv @ mats[k]
        worst = max(worst, np.max(np.abs(est.error_covs[k] - cond_cov)))
    cond_cross = -mats[0] @ c_inv @ mats[1]
    cross = cross_error_covariance(0, 1, pat, covs, cfg)
    worst = max(worst, np.max(np.abs(cross - cond_cross)))

    rng = block_rng(501, 1)
    n = 100_000
    g1 = complex_normal(rng, (n, 4)) @ psd_sqrt(mats[0]).T
    g2 = complex_normal(rng, (n, 4)) @ psd_sqrt(mats[1]).T
    y = g1 + g2 + complex_normal(rng, (n, 4)) / np.sqrt(rho)
    e1 = y @ maps[0].T - g1
    e2 = y @ maps[1].T - g2
    emp = [np.einsum("ni,nj->ij", a, b.conj()) / n for a, b in ((e1, e1), (e2, e2), (e1, e2))]
    mc_rel = max(
        np.linalg.norm(emp[0] - est.error_covs[0]) / np.linalg.norm(est.error_covs[0]),
        np.linalg.norm(emp[1] - est.error_covs[1]) / np.linalg.norm(est.error_covs[1]),
        np.linalg.norm(emp[2] - cross) / np.linalg.norm(cross))
    ok = worst <= 1e-10 and mc_rel <= 0.03
    _report(3, ok, "conditioning deviation %.2e, Monte Carlo covariance error %.2f%% "
            "over %d trials" % (worst, 100.0 * mc_rel, n))
    assert ok


def test_criterion_04_analytic_mse_optimality_and_monte_carlo():
    rho = float(db_to_linear(10.0))
    covs = random_covariances(block_rng(610, 0), 16, 4)
    scen = Scenario(ArrayGeometry(16), [None] * 4, covs)
    pat = PRPattern((1, 2, 1, 2), 2)
    cfg = PilotConfig(2, rho)
    est = MMSEEstimator(pat, covs, cfg)
    joint = np.zeros((64, 64), dtype=complex)
    for i in range(4):
        joint[i * 16:(i + 1) * 16, i * 16:(i + 1) * 16] = est.error_covs[i]
        for j in range(4):
            if i != j and pat.assignments[i] == pat.assignments[j]:
                joint[i * 16:(i + 1) * 16, j * 16:(j + 1) * 16] = \
                    cross_error_covariance(i, j, pat, covs, cfg)
    joint_sqrt = psd_sqrt(joint)
    pert_rng = block_rng(611, 0)
    scales_counts = ((1e-3, 34), (1e-2, 34), (1e-1, 32))
    ul_viol = dl_viol = 0
    worst_ul = worst_dl = 0.0
    for index in range(20):
        rng = block_rng(610, 1 + index)
        g = sample_channels(scen, rng)
        obs = observe_pilots(g, pat, cfg, rng)
        g_hat = est.estimate(obs)
        comb = robust_ul_receiver(g_hat, est.error_covs, rho)
        pre = robust_dl_precoder(g_hat, est.error_covs, rho)
        base_ul = analytic_mse_ul(comb, g_hat, est.error_covs, rho)
        base_dl = analytic_mse_dl(pre, pre.alpha, g_hat, est.error_covs, rho)
        for scale, count in scales_counts:
            for _ in range(count):
                w = comb.matrix + scale * complex_normal(pert_rng, (16, 4))
                if analytic_mse_ul(w, g_hat, est.error_covs, rho) < base_ul - 1e-12:
                    ul_viol += 1
                b = pre.matrix + scale * complex_normal(pert_rng, (16, 4))
                b = b * (2.0 / np.linalg.norm(b))
                alpha = pre.alpha * abs(1.0 + scale * float(pert_rng.standard_normal()))
                if analytic_mse_dl(b, alpha, g_hat, est.error_covs, rho) < base_dl - 1e-12:
                    dl_viol += 1
        mc_ul = mc_dl = 0.0
        chunks, per = 10, 10_000
        for chunk in range(chunks):
            crng = block_rng(612, index * chunks + chunk)
            x = complex_normal(crng, (per, 4))
            e = (complex_normal(crng, (per, 64)) @ joint_sqrt.T).reshape(per, 4, 16)
            y = x @ g_hat.T + np.einsum("tkm,tk->tm", e, x) \
                + complex_normal(crng, (per, 16)) / np.sqrt(rho)
            mc_ul += np.mean(np.sum(np.abs(y @ comb.matrix - x) ** 2, axis=1))
            v = x @ pre.matrix.T
            rx = v @ g_hat + np.einsum("tkm,tm->tk", e, v) \
                + complex_normal(crng, (per, 4)) / np.sqrt(rho)
            mc_dl += np.mean(np.sum(np.abs(pre.alpha * rx - x) ** 2, axis=1))
        worst_ul = max(worst_ul, abs(mc_ul / chunks - base_ul) / base_ul)
        worst_dl = max(worst_dl, abs(mc_dl / chunks - base_dl) / base_dl)
    ok = (ul_viol == 0 and dl_viol == 0 and worst_ul <= 0.02 and worst_dl <= 0.02)
    _report(4, ok, "0 expected optimality violations (got %d UL, %d DL of 2000 each), "
            "worst Monte Carlo gap %.2f%% UL / %.2f%% DL"
            % (ul_viol, dl_viol, 100.0 * worst_ul, 100.0 * worst_dl))
    assert ok


def test_criterion_05_lower_bound_tracks_monte_carlo(drop_scenario):
    start = time.monotonic()
    details = []
    ok = True
    for snr_db in (0.0, 5.0, 10.0, 15.0, 20.0):
        rho = float(db_to_linear(snr_db))
        link = LinkConfig(rho, rho, rho, 5, 20)
        mean, stderr = avg_mse_sd(drop_scenario, PATTERN_B, link, blocks=2000, seed=7)
        bound = mse_sd_lower_bound(PATTERN_B, drop_scenario.covariances,
                                   link.pilot_config(), rho)
        above = mean >= bound - 2.0 * stderr
        gap = (mean - bound) / bound
        details.append("%gdB gap %.1f%%" % (snr_db, 100.0 * gap))
        ok = ok and above and gap <= 0.05
    elapsed = time.monotonic() - start
    ok = ok and elapsed < 600.0
    _report(5, ok, "bound below the Monte Carlo mean everywhere but the 5%% tightness "
            "target is missed (%s), %.0fs" % ("; ".join(details), elapsed))
    assert ok


def test_criterion_06_robust_beats_conventional(drop_scenario):
    snrs = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    stats = {}
    for name, pat in (("a", PATTERN_A), ("b", PATTERN_B)):
        for snr_db in snrs:
            rho = float(db_to_linear(snr_db))
            link = LinkConfig(rho, rho, rho, 5, 20)
            for kind in ("robust", "conventional"):
                stats[(name, kind, snr_db)] = avg_mse_sd(
                    drop_scenario, pat, link, receiver=kind, blocks=400, seed=17)
    ok = True
    min_margin = np.inf
    for name in ("a", "b"):
        for snr_db in snrs:
            rob, rob_se = stats[(name, "robust", snr_db)]
            conv, conv_se = stats[(name, "conventional", snr_db)]
            ok = ok and rob <= conv
            if snr_db >= 10.0:
                margin = (conv - rob) / float(np.hypot(rob_se, conv_se))
                min_margin = min(min_margin, margin)
    ok = ok and min_margin >= 2.0
    sched_ok = all(stats[("b", "robust", s)][0] <= stats[("a", "robust", s)][0]
                   for s in snrs)
    m10, s10 = stats[("a", "conventional", 10.0)]
    m25, s25 = stats[("a", "conventional", 25.0)]
    floor_ok = m25 - m10 >= 2.0 * float(np.hypot(s10, s25))
    ok = ok and sched_ok and floor_ok
    _report(6, ok, "robust never worse, min high-SNR margin %.1f stderrs; scheduled "
            "pattern no worse than blocked: %s; conventional error floor rises "
            "25dB vs 10dB by %.2f (%.1f stderrs)"
            % (min_margin, sched_ok, m25 - m10, (m25 - m10) / float(np.hypot(s10, s25))))
    assert ok


def test_criterion_07_greedy_near_optimal():
    start = time.monotonic()
    base = ExperimentConfig(experiment="sgps_vs_es", seed=0, antenna_count=64,
                            user_count=8, angular_spread_deg=10.0,
                            aoa_mode="uniform_sector")
    worst = {"mmse_ce": 1.0, "mmse_sd_lb": 1.0}
    for i in range(20):
        scen = generate_scenario(base, 1000 + i)
        covs = scen.covariances
        for tau in (2, 3, 4):
            pattern = sgps(covs, tau)
            for snr_db in (0.0, 10.0, 20.0):
                rho = float(db_to_linear(snr_db))
                cfg = PilotConfig(tau, rho)
                _, best_ce = exhaustive_search("mmse_ce", covs, cfg, rho)
                worst["mmse_ce"] = max(worst["mmse_ce"],
                                       mse_ce(pattern, covs, cfg) / best_ce)
                _, best_lb = exhaustive_search("mmse_sd_lb", covs, cfg, rho)
                worst["mmse_sd_lb"] = max(worst["mmse_sd_lb"],
                                          mse_sd_lower_bound(pattern, covs, cfg, rho)
                                          / best_lb)
    elapsed = time.monotonic() - start
    ok = worst["mmse_ce"] <= 1.03 and worst["mmse_sd_lb"] <= 1.03 and elapsed < 1200.0
    _report(7, ok, "greedy/exhaustive cost ratio up to %.3f (estimation) and %.3f "
            "(detection bound) against the 1.03 target, %.0fs"
            % (worst["mmse_ce"], worst["mmse_sd_lb"], elapsed))
    assert ok


def test_criterion_08_net_gain_over_orthogonal_training():
    start = time.monotonic()
    rho = float(db_to_linear(20.0))
    blocks, seed = 500, 11
    rates = {"ul": ul_sum_rate, "dl": dl_sum_rate}
    gains = {}
    for spread in (2.0, 10.0):
        cfg = ExperimentConfig(experiment="net_se_vs_T", seed=seed, antenna_count=128,
                               user_count=10, angular_spread_deg=spread)
        scen = generate_scenario(cfg, seed)
        for direction in ("ul", "dl"):
            link = LinkConfig(rho, rho, rho, 2, 40)
            table = rate_vs_tau(scen, link, direction=direction, blocks=blocks, seed=seed)
            t_grid = (15, 20, 40) if spread == 2.0 else (20,)
            for t in t_grid:
                best = None
                for tau in sorted(table):
                    if tau > t:
                        continue
                    net = net_spectral_efficiency(tau, t, table[tau][0])
                    if best is None or net > best:
                        best = net
                tau_ot, served = ot_baseline_tau(10, t)
                if served == 10:
                    ot = net_spectral_efficiency(10, t, table[10][0])
                else:
                    sub = scen.subset(range(served))
                    ot_link = LinkConfig(rho, rho, rho, tau_ot, t)
                    rate, _ = rates[direction](sub, orthogonal_pattern(served), ot_link,
                                               blocks=blocks, seed=seed)
                    ot = net_spectral_efficiency(tau_ot, t, rate)
                gains[(spread, direction, t)] = best - ot
    headline = [gains[(2.0, d, 20)] for d in ("ul", "dl")]
    ok = all(26.25 <= g <= 43.75 for g in headline)
    spread_trend = all(gains[(2.0, d, 20)] > gains[(10.0, d, 20)] for d in ("ul", "dl"))
    t_trend = all(gains[(2.0, d, 15)] > gains[(2.0, d, 20)] > gains[(2.0, d, 40)]
                  for d in ("ul", "dl"))
    elapsed = time.monotonic() - start
    ok = ok and spread_trend and t_trend and elapsed < 1800.0
    _report(8, ok, "headline gain %.1f UL / %.1f DL bits/s/Hz (target 35 +- 25%%); "
            "larger at 2deg than 10deg: %s; shrinking in T: %s; %.0fs"
            % (headline[0], headline[1], spread_trend, t_trend, elapsed))
    assert ok


def test_criterion_09_large_array_model_convergence():
    start = time.monotonic()
    pas = PowerAngleSpectrum("truncated_laplacian", 0.6592, float(np.deg2rad(10.0)))
    entries = ((1, 1), (1, 2), (2, 3))
    unit = {e: [] for e in entries}
    model = {e: [] for e in entries}
    for m in (32, 128, 512):
        geometry = ArrayGeometry(m)
        exact = covariance_exact(geometry, pas, quadrature_points=8192).matrix
        asym = covariance_asymptotic(geometry, pas)
        v = asym.eigenvectors
        u = v.conj().T @ v - np.eye(m)
        d = exact - asym.matrix()
        for i, j in entries:
            unit[(i, j)].append(abs(u[i - 1, j - 1]))
            model[(i, j)].append(abs(d[i - 1, j - 1]))
    unit_ok = all(b <= a + 1e-14 for seq in unit.values() for a, b in zip(seq, seq[1:]))
    model_ok = all(b <= a + 1e-12 for seq in model.values() for a, b in zip(seq, seq[1:]))
    elapsed = time.monotonic() - start
    ok = unit_ok and model_ok and elapsed < 120.0
    _report(9, ok, "unitarity deviations nonincreasing: %s; model deviations "
            "nonincreasing: %s (entry (1,2): %.2e -> %.2e -> %.2e); %.1fs"
            % (unit_ok, model_ok, *model[(1, 2)], elapsed))
    assert ok


def test_criterion_10_thread_count_invariance(tmp_path):
    start = time.monotonic()
    tiny = {
        "mse_sd_vs_snr": dict(antenna_count=16, user_count=4, pilot_length=2,
                              snr_db=[0.0, 10.0], trials=20),
        "mse_ce_vs_tau": dict(antenna_count=16, user_count=4, snr_db=[10.0], trials=1),
        "mse_sd_lb_vs_tau": dict(antenna_count=16, user_count=4, snr_db=[10.0], trials=1),
        "net_se_vs_T": dict(antenna_count=16, user_count=4, snr_db=[10.0], trials=20,
                            block_length=8, block_length_grid=[6, 8]),
        "net_se_vs_snr": dict(antenna_count=16, user_count=4, snr_db=[0.0, 10.0],
                              trials=20, block_length=8, pilot_length=2),
        "duality_check": dict(antenna_count=16, user_count=4, pilot_length=2,
                              snr_db=[10.0], trials=10),
        "sgps_vs_es": dict(antenna_count=16, user_count=5, snr_db=[0.0, 10.0],
                           aoa_mode="uniform_sector", trials=3),
        "convergence_sweep": dict(trials=1),
    }
    mismatches = []
    failures = []
    for name, fields in tiny.items():
        outputs = {}
        for threads in ("1", "4"):
            out = tmp_path / ("%s_t%s.csv" % (name, threads))
            cfg = dict(fields, experiment=name, seed=19, out=str(out))
            cfg_path = tmp_path / ("%s_t%s_config.json" % (name, threads))
            cfg_path.write_text(json.dumps(cfg))
            env = dict(os.environ, MIMO_LAB_THREADS=threads)
            proc = subprocess.run(
                [sys.executable, "-m", "mimo_lab.cli", "--config", str(cfg_path)],
                env=env, capture_output=True, text=True)
            if proc.returncode != 0:
                failures.append("%s (threads=%s): %s" % (name, threads, proc.stderr))
                break
            outputs[threads] = out.read_bytes()
        if len(outputs) == 2 and outputs["1"] != outputs["4"]:
            mismatches.append(name)
    elapsed = time.monotonic() - start
    ok = not failures and not mismatches
    _report(10, ok, "all %d experiments byte-identical for 1 and 4 worker threads%s%s, "
            "%.0fs" % (len(tiny),
                       "; mismatches: %s" % ", ".join(mismatches) if mismatches else "",
                       "; failures: %s" % "; ".join(failures) if failures else "",
                       elapsed))
    assert ok
