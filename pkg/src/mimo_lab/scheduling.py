"""Pilot scheduling: greedy similarity grouping and exhaustive pattern search.

Two scheduling targets are supported: the sum channel estimation MSE and
an average lower bound on the sum symbol detection MSE.  Both are
invariant under pilot relabeling, so the exhaustive search enumerates set
partitions through their lexicographically smallest assignment vectors
instead of all tau^K labelings.
"""

import numpy as np
import scipy.linalg

from .channel import cov_matrices, matrix_angle
from .numerics import hermitize, solve_hermitian
from .training import PRPattern, error_covariances

CRITERIA = ("mmse_ce", "mmse_sd_lb")

# Memoized per-group matrices are skipped above this budget (bytes).
_MEMO_BUDGET = 300_000_000


class SearchBudgetError(RuntimeError):
    """Raised when an exhaustive search would exceed its pattern budget."""


def omega_matrix(pattern, covariances, train_cfg, data_snr):
    """K x K interaction matrix behind the detection-MSE lower bound.

    Entry (i, j) is tr(C_p^{-1} R_i Rt^{-1} R_j) when users i and j share
    pilot p and zero otherwise, where Rt sums the estimation error
    covariances with I / data_snr.  Equals the mean of G^H Rt^{-1} G over
    channel estimates.
    """
    if data_snr <= 0.0:
        raise ValueError("data_snr must be positive")
    mats = cov_matrices(covariances)
    k = len(mats)
    m = mats[0].shape[0]
    eta = 1.0 / (train_cfg.train_snr * train_cfg.pilot_length)
    r_tilde = np.eye(m, dtype=complex) / data_snr
    for e in error_covariances(pattern, mats, train_cfg):
        r_tilde += e
    chol_rt = scipy.linalg.cho_factor(r_tilde, lower=True, check_finite=False)
    omega = np.zeros((k, k), dtype=complex)
    for members in pattern.groups():
        if not members:
            continue
        c = eta * np.eye(m, dtype=complex)
        for i in members:
            c += mats[i]
        chol_c = scipy.linalg.cho_factor(c, lower=True, check_finite=False)
        rhs = np.hstack([mats[i] for i in members])
        z = scipy.linalg.cho_solve(chol_c, rhs, check_finite=False)
        y = scipy.linalg.cho_solve(chol_rt, rhs, check_finite=False)
        g = len(members)
        zt = z.reshape(m, g, m).transpose(1, 0, 2)
        yt = y.reshape(m, g, m).transpose(1, 0, 2)
        block = np.einsum("iab,jba->ij", zt, yt)
        omega[np.ix_(members, members)] = block
    return hermitize(omega)


def mse_sd_lower_bound(pattern, covariances, train_cfg, data_snr):
    """Average lower bound tr{(I_K + Omega)^{-1}} on the sum detection MSE."""
    omega = omega_matrix(pattern, covariances, train_cfg, data_snr)
    k = omega.shape[0]
    eye = np.eye(k, dtype=complex)
    return float(np.real(np.trace(solve_hermitian(eye + omega, eye))))


def mse_sd_lb_minimum(covariances, train_cfg, data_snr):
    """Floor of the detection-MSE lower bound over all reuse patterns.

    Attained when users sharing a pilot have orthogonal covariance
    supports; the bound then decouples into sum of 1 / (1 + omega_i).
    """
    if data_snr <= 0.0:
        raise ValueError("data_snr must be positive")
    mats = cov_matrices(covariances)
    m = mats[0].shape[0]
    eta = 1.0 / (train_cfg.train_snr * train_cfg.pilot_length)
    eye = np.eye(m, dtype=complex)
    own_gain = []
    bracket = eye / data_snr
    for r in mats:
        a = solve_hermitian(r + eta * eye, r)
        own_gain.append(a)
        bracket += hermitize(r - r @ a)
    total = 0.0
    for r, a in zip(mats, own_gain):
        x = solve_hermitian(bracket, r)
        omega_i = float(np.real(np.sum(a * x.T)))
        total += 1.0 / (1.0 + omega_i)
    return total


def sgps(covariances, pilot_count):
    """Similarity-grouped pilot scheduling.

    Seeds one group leader per pilot by repeatedly picking the unscheduled
    user whose covariance is most aligned (largest summed angle cosine)
    with the leaders chosen so far, then assigns every remaining user, in
    index order, to the pilot whose current group it is least aligned
    with.  Ties resolve to the smallest user or pilot index.
    """
    mats = cov_matrices(covariances)
    k = len(mats)
    if not 1 < pilot_count < k:
        raise ValueError("pilot_count must satisfy 1 < tau < K")
    cos = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            cos[i, j] = cos[j, i] = np.cos(matrix_angle(mats[i], mats[j]))
    assignment = [0] * k
    assignment[0] = 1
    leaders = [0]
    unscheduled = list(range(1, k))
    for pilot in range(2, pilot_count + 1):
        scores = [sum(cos[u, m] for m in leaders) for u in unscheduled]
        pick = unscheduled[int(np.argmax(scores))]
        assignment[pick] = pilot
        leaders.append(pick)
        unscheduled.remove(pick)
    groups = {p: [leaders[p - 1]] for p in range(1, pilot_count + 1)}
    for u in unscheduled:
        scores = [sum(cos[u, s] for s in groups[p]) for p in range(1, pilot_count + 1)]
        best = int(np.argmin(scores)) + 1
        assignment[u] = best
        groups[best].append(u)
    return PRPattern(tuple(assignment), pilot_count)


def _partition_assignments(user_count, max_groups):
    """Yield, in lexicographic order, the smallest assignment vector of every
    partition of the users into at most max_groups pilot groups (1-based)."""
    out = [0] * user_count

    def rec(pos, used):
        if pos == user_count:
            yield tuple(out)
            return
        for label in range(1, min(used + 1, max_groups) + 1):
            out[pos] = label
            yield from rec(pos + 1, max(used, label))

    yield from rec(0, 0)


class _CECost:
    """Sum channel estimation MSE of a pattern, memoized per pilot group."""

    def __init__(self, mats, train_cfg):
        self.mats = mats
        self.eta = 1.0 / (train_cfg.train_snr * train_cfg.pilot_length)
        self.traces = [float(np.real(np.trace(r))) for r in mats]
        self.memo = {}

    def group_cost(self, members):
        key = sum(1 << i for i in members)
        cached = self.memo.get(key)
        if cached is None:
            m = self.mats[0].shape[0]
            c = self.eta * np.eye(m, dtype=complex)
            for i in members:
                c += self.mats[i]
            rhs = np.hstack([self.mats[i] for i in members])
            sol = solve_hermitian(c, rhs)
            cached = 0.0
            for pos, i in enumerate(members):
                block = sol[:, pos * m:(pos + 1) * m]
                cached += self.traces[i] - float(np.real(np.vdot(self.mats[i], block)))
            self.memo[key] = cached
        return cached

    def cost(self, groups):
        return sum(self.group_cost(g) for g in groups)


class _SDLBCost:
    """Detection-MSE lower bound of a pattern, with per-group memoization."""

    def __init__(self, mats, train_cfg, data_snr):
        self.mats = mats
        self.eta = 1.0 / (train_cfg.train_snr * train_cfg.pilot_length)
        k = len(mats)
        m = mats[0].shape[0]
        self.m = m
        self.k = k
        base = np.eye(m, dtype=complex) / data_snr
        for r in mats:
            base += r
        self.base = base
        self.memo = {}
        self.use_memo = (2 ** k) * (m * m * 16) * 2 <= _MEMO_BUDGET

    def _group_data(self, members):
        """Cholesky factor of the group observation covariance and the sum
        of R_i C^{-1} R_i over the group."""
        key = sum(1 << i for i in members)
        cached = self.memo.get(key) if self.use_memo else None
        if cached is None:
            c = self.eta * np.eye(self.m, dtype=complex)
            for i in members:
                c += self.mats[i]
            chol = scipy.linalg.cho_factor(c, lower=True, check_finite=False)
            reduction = np.zeros((self.m, self.m), dtype=complex)
            for i in members:
                reduction += self.mats[i] @ scipy.linalg.cho_solve(
                    chol, self.mats[i], check_finite=False)
            cached = (chol, hermitize(reduction))
            if self.use_memo:
                self.memo[key] = cached
        return cached

    def cost(self, groups):
        r_tilde = self.base.copy()
        data = []
        for members in groups:
            if not members:
                continue
            chol, reduction = self._group_data(members)
            r_tilde -= reduction
            data.append((members, chol))
        chol_rt = scipy.linalg.cho_factor(r_tilde, lower=True, check_finite=False)
        omega = np.zeros((self.k, self.k), dtype=complex)
        for members, chol in data:
            rhs = np.hstack([self.mats[i] for i in members])
            z = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
            y = scipy.linalg.cho_solve(chol_rt, rhs, check_finite=False)
            g = len(members)
            zt = z.reshape(self.m, g, self.m).transpose(1, 0, 2)
            yt = y.reshape(self.m, g, self.m).transpose(1, 0, 2)
            omega[np.ix_(members, members)] = np.einsum("iab,jba->ij", zt, yt)
        eye = np.eye(self.k, dtype=complex)
        return float(np.real(np.trace(solve_hermitian(eye + hermitize(omega), eye))))


def exhaustive_search(criterion, covariances, train_cfg, data_snr, cap=1_000_000):
    """Globally optimal reuse pattern for the given scheduling criterion.

    Enumerates every partition of the users into at most tau pilot groups;
    the nominal labeled search space tau^K must not exceed `cap`.  Returns
    the optimal pattern (lexicographically smallest assignment vector on
    ties) and its cost.
    """
    if criterion not in CRITERIA:
        raise ValueError("criterion must be one of %s" % (CRITERIA,))
    mats = cov_matrices(covariances)
    k = len(mats)
    tau = train_cfg.pilot_length
    if tau ** k > cap:
        raise SearchBudgetError(
            "search space %d^%d exceeds the cap of %d patterns" % (tau, k, cap))
    if criterion == "mmse_ce":
        evaluator = _CECost(mats, train_cfg)
    else:
        evaluator = _SDLBCost(mats, train_cfg, data_snr)
    best_cost = None
    best_rgs = None
    for rgs in _partition_assignments(k, tau):
        groups = [[] for _ in range(max(rgs))]
        for user, label in enumerate(rgs):
            groups[label - 1].append(user)
        cost = evaluator.cost([tuple(g) for g in groups])
        if best_cost is None or cost < best_cost:
            best_cost = cost
            best_rgs = rgs
    return PRPattern(best_rgs, tau), float(best_cost)
