"""Compiled simulation loops.

These mirror the reference policy classes decision for decision (the test
suite runs both in lockstep) but run a whole horizon in one call. The index
argmax is pruned: an arm whose rate, or whose confidence bound evaluated at
the current best value, shows it cannot win is skipped without a bisection.
Pruning never changes the selected decision.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .kl_index import _index_norm, _kl, _threshold


@njit(cache=True)
def _arm_index(k, rates, counts, sums, thr):
    t = counts[k]
    mean = sums[k] / t if t > 0 else 0.0
    r = rates[k]
    return r * _index_norm(mean / r, float(t), thr)


@njit(cache=True)
def _leader(rates, counts, sums):
    best = -1.0
    best_id = 0
    for k in range(rates.size):
        t = counts[k]
        m = sums[k] / t if t > 0 else 0.0
        if m > best:
            best = m
            best_id = k
    return best_id


@njit(cache=True)
def _pruned_argmax(cand_idx, start, stop, seed, rates, counts, sums, thr):
    best = _arm_index(seed, rates, counts, sums, thr)
    best_id = seed
    for j in range(start, stop):
        k = cand_idx[j]
        if k == seed:
            continue
        r = rates[k]
        if r < best or (r == best and k > best_id):
            continue
        t = counts[k]
        if t > 0:
            p = (sums[k] / t) / r
            x = best / r
            if p < x and x < 1.0 and t * _kl(p, x) > thr:
                continue
        v = r * _index_norm((sums[k] / t if t > 0 else 0.0) / r, float(t), thr)
        if v > best or (v == best and k < best_id):
            best = v
            best_id = k
    return best_id


@njit(cache=True)
def index_policy_run(rates, theta, uniforms, horizon, c, use_leader, divisor, tau,
                     cand_ptr, cand_idx):
    """KL-R-UCB / ORS / G-ORS and their windowed variants over one horizon.

    theta: (rows, K) success probabilities, row ``min(t, rows - 1)`` for slot ``t + 1``.
    uniforms: (horizon, 1) for coupled sampling or (horizon, K) for independent arms.
    tau: window length, 0 for full history.
    cand_ptr / cand_idx: CSR closed neighborhoods (leader-based policies only).
    """
    K = rates.size
    rows = theta.shape[0]
    coupled = uniforms.shape[1] == 1
    decisions = np.empty(horizon, dtype=np.int64)
    successes = np.empty(horizon, dtype=np.bool_)
    counts = np.zeros(K, dtype=np.int64)
    sums = np.zeros(K)
    lead_counts = np.zeros(K, dtype=np.int64)
    windowed = tau > 0
    cap = min(tau, horizon) + 1 if windowed else 1
    rec_d = np.zeros(cap, dtype=np.int64)
    rec_r = np.zeros(cap)
    rec_head = 0
    rec_len = 0
    lead_ring = np.zeros(cap, dtype=np.int64)
    lead_head = 0
    lead_len = 0
    all_start = 0
    all_idx = np.arange(K)
    for t in range(horizon):
        n = t + 1
        row = t if t < rows else rows - 1
        if n <= K:
            d = t
            if use_leader and windowed:
                lead_ring[(lead_head + lead_len) % cap] = -1
                lead_len += 1
                if lead_len > tau:
                    old = lead_ring[lead_head]
                    if old >= 0:
                        lead_counts[old] -= 1
                    lead_head = (lead_head + 1) % cap
                    lead_len -= 1
        else:
            lead = _leader(rates, counts, sums)
            if use_leader:
                lead_counts[lead] += 1
                if windowed:
                    lead_ring[(lead_head + lead_len) % cap] = lead
                    lead_len += 1
                    if lead_len > tau:
                        old = lead_ring[lead_head]
                        if old >= 0:
                            lead_counts[old] -= 1
                        lead_head = (lead_head + 1) % cap
                        lead_len -= 1
                l = lead_counts[lead]
                if (l - 1) % divisor == 0:
                    d = lead
                else:
                    thr = _threshold(float(l), c)
                    d = _pruned_argmax(cand_idx, cand_ptr[lead], cand_ptr[lead + 1], lead,
                                       rates, counts, sums, thr)
            else:
                level = float(tau) if windowed else float(n)
                thr = _threshold(level, c)
                d = _pruned_argmax(all_idx, all_start, K, lead, rates, counts, sums, thr)
        u = uniforms[t, 0] if coupled else uniforms[t, d]
        ok = u < theta[row, d]
        decisions[t] = d
        successes[t] = ok
        reward = rates[d] if ok else 0.0
        counts[d] += 1
        sums[d] += reward
        if windowed:
            rec_d[(rec_head + rec_len) % cap] = d
            rec_r[(rec_head + rec_len) % cap] = reward
            rec_len += 1
            if rec_len > tau:
                old = rec_d[rec_head]
                counts[old] -= 1
                sums[old] -= rec_r[rec_head]
                rec_head = (rec_head + 1) % cap
                rec_len -= 1
    return decisions, successes


@njit(cache=True)
def samplerate_run(rates, theta, uniforms, policy_u, horizon, window, explore_every,
                   loss_limit):
    """SampleRate over one horizon; ``policy_u`` is consumed one value per exploration."""
    K = rates.size
    rows = theta.shape[0]
    coupled = uniforms.shape[1] == 1
    decisions = np.empty(horizon, dtype=np.int64)
    successes = np.empty(horizon, dtype=np.bool_)
    attempts = np.zeros(K, dtype=np.int64)
    succ = np.zeros(K, dtype=np.int64)
    losses = np.zeros(K, dtype=np.int64)
    excluded_until = np.zeros(K, dtype=np.int64)
    tput = np.zeros(K)
    cands = np.zeros(K, dtype=np.int64)
    cap = window + 1
    hist_d = np.zeros(cap, dtype=np.int64)
    hist_ok = np.zeros(cap, dtype=np.bool_)
    head = 0
    length = 0
    used = 0
    for t in range(horizon):
        n = t + 1
        row = t if t < rows else rows - 1
        for k in range(K):
            tput[k] = rates[k] * succ[k] / attempts[k] if attempts[k] > 0 else 0.0
        cur = -1
        best = -2.0
        for k in range(K):
            v = tput[k] if n > excluded_until[k] else -1.0
            if v > best:
                best = v
                cur = k
        d = cur
        if n % explore_every == 0:
            m = 0
            for k in range(K):
                if n > excluded_until[k] and k != cur and rates[k] > tput[cur]:
                    cands[m] = k
                    m += 1
            if m > 0:
                u = policy_u[used]
                used += 1
                d = cands[int(u * m)]
        uu = uniforms[t, 0] if coupled else uniforms[t, d]
        ok = uu < theta[row, d]
        decisions[t] = d
        successes[t] = ok
        hist_d[(head + length) % cap] = d
        hist_ok[(head + length) % cap] = ok
        length += 1
        attempts[d] += 1
        if ok:
            succ[d] += 1
        if length > window:
            old = hist_d[head]
            attempts[old] -= 1
            if hist_ok[head]:
                succ[old] -= 1
            head = (head + 1) % cap
            length -= 1
        if ok:
            losses[d] = 0
        else:
            losses[d] += 1
            if losses[d] >= loss_limit:
                losses[d] = 0
                other = False
                for k in range(K):
                    if k != d and n + 1 > excluded_until[k]:
                        other = True
                        break
                if other:
                    excluded_until[d] = n + window
    return decisions, successes


def csr_candidates(cand_lists) -> tuple[np.ndarray, np.ndarray]:
    """Pack per-vertex candidate lists into CSR arrays."""
    ptr = np.zeros(len(cand_lists) + 1, dtype=np.int64)
    for i, c in enumerate(cand_lists):
        ptr[i + 1] = ptr[i] + len(c)
    idx = np.fromiter((k for c in cand_lists for k in c), dtype=np.int64, count=int(ptr[-1]))
    return ptr, idx
