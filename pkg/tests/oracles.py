"""Independent reference computations used as test oracles.

Nothing here calls into the package's numerics: KL divergences use plain
``math.log``, unimodality is checked by path search, and bound constants are
re-derived term by term.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np


def kl_closed_form(p: float, q: float) -> float:
    if p == q:
        return 0.0
    if q in (0.0, 1.0):
        return math.inf
    out = 0.0
    if p > 0:
        out += p * math.log(p / q)
    if p < 1:
        out += (1 - p) * math.log((1 - p) / (1 - q))
    return out


def kl_quadrature(p: float, q: float) -> float:
    """I(p, q) as the integral of dI/dx = (x - p) / (x (1 - x)) from p to q."""
    from scipy.integrate import quad

    val, _ = quad(lambda x: (x - p) / (x * (1 - x)), p, q, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def kl_vec(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(p > 0, p * np.log(p / q), 0.0)
        b = np.where(p < 1, (1 - p) * np.log((1 - p) / (1 - q)), 0.0)
    return a + b


def grid_scan_index(p: float, samples: int, threshold: float, step: float = 1e-6) -> float:
    """Largest grid point x in [p, 1] with samples * I(p, x) <= threshold."""
    if samples == 0 or p >= 1:
        return 1.0
    n = int(math.floor((1.0 - p) / step))
    xs = p + step * np.arange(n + 1)
    xs = xs[xs < 1.0]
    ok = samples * kl_vec(np.full(xs.size, p), xs) <= threshold
    ok[0] = True
    # Feasible points form a prefix because I(p, .) increases on [p, 1).
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return 1.0
    return float(xs[bad[0] - 1])


def threshold_ref(l: float, c: float = 3.0) -> float:
    if l < 3:
        return 0.0
    return max(math.log(l) + c * math.log(math.log(l)), 0.0)


def bound_terms_ref(rates, theta):
    """(c, c', c_terms, c'_terms) straight from the defining sums, 0-based indexes."""
    r = [float(x) for x in rates]
    t = [float(x) for x in theta]
    mu = [a * b for a, b in zip(r, t)]
    ks = max(range(len(mu)), key=lambda k: (mu[k], -k))
    star = mu[ks]
    n_set = [l for l in (ks - 1, ks + 1) if 0 <= l < len(r) and star <= r[l]]

    def term(k):
        return (star - mu[k]) / kl_closed_form(t[k], star / r[k])

    k0 = min(k for k in range(ks + 1) if star / r[k] <= 1)
    c_terms = {l: term(l) for l in n_set}
    cp_terms = {k: term(k) for k in range(k0, len(r)) if k != ks}
    return sum(c_terms.values()), sum(cp_terms.values()), c_terms, cp_terms


def random_unimodal_instance(rng: np.random.Generator, K: int | None = None):
    """Random (rates, theta) with theta non-increasing and r*theta strictly unimodal."""
    K = int(rng.integers(1, 9)) if K is None else K
    peak = int(rng.integers(0, K))
    rates = [1.0 + rng.random()]
    theta = [0.5 + 0.5 * rng.random()]
    for k in range(1, K):
        if k <= peak:
            g = 1.0 + rng.random()
            r = rates[-1] * g * (1.0 + 0.5 * rng.random() + 1e-3)
            mu = rates[-1] * theta[-1] * g
            rates.append(r)
            theta.append(mu / r)
        else:
            r = rates[-1] * (1.0 + rng.random() + 1e-3)
            theta.append(theta[-1] * rates[-1] / r * (0.05 + 0.9 * rng.random()))
            rates.append(r)
    return np.array(rates), np.array(theta)


def has_ascending_path_everywhere(adj: list[list[int]], mu) -> bool:
    """Brute force: from every vertex, search for a strictly ascending path to the argmax."""
    best = int(np.argmax(mu))
    for s in range(len(adj)):
        if s == best:
            continue
        seen = {s}
        todo = deque([s])
        found = False
        while todo and not found:
            v = todo.popleft()
            for w in adj[v]:
                if mu[w] > mu[v] and w not in seen:
                    if w == best:
                        found = True
                        break
                    seen.add(w)
                    todo.append(w)
        if not found:
            return False
    return True


def random_graph_layout(rng: np.random.Generator, n: int):
    """Random one- or two-mode decision graph: (mode sizes, extra edges) on n vertices.

    Consecutive rates inside a mode are always linked; extra edges are random.
    """
    modes = int(rng.integers(1, 3)) if n >= 2 else 1
    sizes = [n] if modes == 1 else [int(rng.integers(1, n)), 0]
    if modes == 2:
        sizes[1] = n - sizes[0]
    edges = set()
    base = 0
    for size in sizes:
        for i in range(1, size):
            edges.add((base + i - 1, base + i))
        base += size
    for _ in range(int(rng.integers(0, n + 1))):
        a, b = (int(x) for x in rng.integers(0, n, size=2))
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return sizes, edges


def random_drift_table(rng: np.random.Generator, T: int, accept):
    """(rates, theta table) drifting linearly from a random instance; rejection-sampled by accept."""
    while True:
        r, t0 = random_unimodal_instance(rng, K=int(rng.integers(2, 9)))
        t1 = np.clip(t0 + rng.normal(0, 0.05, size=t0.size), 0, 1)
        t1 = np.minimum.accumulate(t1)
        w = np.linspace(0.0, 1.0, T)[:, None]
        table = (1 - w) * t0[None, :] + w * t1[None, :]
        if accept(r, table):
            return r, table
