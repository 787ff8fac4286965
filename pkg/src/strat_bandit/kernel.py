"""Compiled round loop.

Mirrors the Python reference path operation for operation (same float
expressions, same order) so both produce bit-identical outcomes; the test
suite checks this on every library strategy.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    njit = None

TOL = 1e-12
BLOCK_TOL = 1e-12

MODE_FORCED, MODE_POLICY = 0, 1
POL_UCB, POL_EPS = 0, 1
ERR_NONE, ERR_LOW, ERR_HIGH, ERR_HONEST, ERR_ALL_BLOCKED = 0, 1, 2, 3, 4


def _effort(code, p0, p1, p2, p3, raw, cap, own, u):
    if code == 0:
        return 0.0
    if code == 1:
        return cap - raw
    if code == 2:
        return -raw
    if code == 3:
        return p0 - raw
    if code == 4:
        if raw >= p0:
            return p1 - raw if u < p2 else 0.0
        return p0 - raw if u < p3 else 0.0
    if code == 5:
        return p0 - raw if own == 0 else p1 - raw
    # code 6: mimic then absorb
    return p0 - raw if own < p1 else -raw


def _select(policy, k, log_n, eps, random_ties, counts, sums, blocked, coin_u, arm_u, tie_u, t):
    m = 0
    for a in range(k):
        if blocked[a] == 0:
            m += 1
    if m == 0:
        return -1
    for a in range(k):
        if blocked[a] == 0 and counts[a] == 0:
            return a
    if policy == 1 and coin_u[t] < eps:
        idx = int(arm_u[t] * m)
        if idx > m - 1:
            idx = m - 1
        j = 0
        for a in range(k):
            if blocked[a] == 0:
                if j == idx:
                    return a
                j += 1
    best = -1
    best_val = -np.inf
    best_pri = np.inf
    use_pri = policy == 1 or random_ties
    for a in range(k):
        if blocked[a] != 0:
            continue
        if policy == 0:
            v = sums[a] / counts[a] + np.sqrt(2.0 * log_n / counts[a])
        else:
            v = sums[a] / counts[a]
        if v > best_val:
            best_val = v
            best = a
            if use_pri:
                best_pri = tie_u[a, t]
        elif v == best_val and use_pri:
            if tie_u[a, t] < best_pri:
                best_pri = tie_u[a, t]
                best = a
    return best


def _run_segment(
    mode, start_round, n_rounds, phase, forced,
    policy, k, log_n, eps, random_ties, counts, sums, blocked,
    check_block, bids, m_prime,
    own, tape, strat_u, rules, honest, caps, coef,
    coin_u, arm_u, tie_u,
    pulls, effort, cost, revenue,
    keep_log, log_arm, log_raw, log_eff, log_del, log_blk, log_phase,
    err,
):
    for step in range(n_rounds):
        t = start_round + step
        if mode == 0:
            a = forced[step]
        else:
            a = _select(policy, k, log_n, eps, random_ties, counts, sums, blocked, coin_u, arm_u, tie_u, t)
            if a < 0:
                err[0] = 4
                err[1] = -1
                err[2] = t
                return
        o = own[a]
        raw = tape[a, o]
        e = _effort(int(rules[a, 0]), rules[a, 1], rules[a, 2], rules[a, 3], rules[a, 4], raw, caps[a], o, strat_u[a, o])
        if e < -raw - TOL:
            err[0] = 1
        elif e > caps[a] - raw + TOL:
            err[0] = 2
        elif honest[a] and e < 0.0:
            err[0] = 3
        if err[0] != 0:
            err[1] = a
            err[2] = t
            return
        d = raw + e
        own[a] = o + 1
        pulls[a] += 1
        effort[a] += e
        cost[a] += coef[a] * e
        revenue[0] += d
        blk = False
        if mode == 1:
            counts[a] += 1
            sums[a] += d
            if check_block and bids[a] <= m_prime and d > m_prime + BLOCK_TOL:
                blocked[a] = t
                blk = True
        if keep_log:
            i = t - 1
            log_arm[i] = a
            log_raw[i] = raw
            log_eff[i] = e
            log_del[i] = d
            log_blk[i] = blk
            log_phase[i] = phase


def _is_subsequence(short, long):
    j = 0
    n = long.shape[0]
    for i in range(short.shape[0]):
        while j < n and long[j] != short[i]:
            j += 1
        if j == n:
            return False
        j += 1
    return True


def _max_gap(arms, a, b):
    # max over t of |T_a(t) - T_b(t)| along a pull sequence
    d = 0
    worst = 0
    for x in arms:
        if x == a:
            d += 1
        elif x == b:
            d -= 1
        if abs(d) > worst:
            worst = abs(d)
    return worst


if njit is not None:
    _effort = njit(cache=True)(_effort)
    _select = njit(cache=True)(_select)
    run_segment = njit(cache=True)(_run_segment)
    is_subsequence = njit(cache=True)(_is_subsequence)
    max_gap = njit(cache=True)(_max_gap)
    AVAILABLE = True
else:  # pragma: no cover
    run_segment = None
    is_subsequence = _is_subsequence
    max_gap = _max_gap
    AVAILABLE = False
