"""Asymptotic regret lower-bound constants and separation counts for drifting channels.

Indexes are 0-based throughout, like decision ids everywhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .environment import check_correlated, check_unimodal, check_unimodal_closed
from .graph import DecisionGraph, check_correlated_modes, check_graph_unimodal, line_graph
from .kl_index import _kl


class StructureError(ValueError):
    """The instance violates a structural assumption a constant relies on."""


@dataclass(frozen=True)
class BoundTerm:
    k: int
    gap: float
    divergence: float
    value: float


@dataclass
class BoundsReport:
    k_star: int
    N_kstar: tuple[int, ...]
    k0: int
    c: float
    c_prime: float
    c_terms: list[BoundTerm] = field(default_factory=list)
    c_prime_terms: list[BoundTerm] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)


def _instance(rates, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r = np.asarray(rates, dtype=float)
    t = np.asarray(theta, dtype=float)
    if r.ndim != 1 or r.shape != t.shape or r.size == 0:
        raise ValueError("rates and theta must be non-empty vectors of equal length")
    if np.any(r <= 0):
        raise ValueError("rates must be positive")
    if np.any(t < 0) or np.any(t > 1):
        raise ValueError("theta entries must lie in [0, 1]")
    return r, t, r * t


def _unique_best(mu: np.ndarray) -> int:
    k = int(np.argmax(mu))
    if np.count_nonzero(mu == mu[k]) > 1:
        raise StructureError("the optimal decision is not unique")
    return k


def _term(k: int, r: np.ndarray, theta: np.ndarray, mu_star: float) -> BoundTerm:
    gap = float(mu_star - r[k] * theta[k])
    div = float(_kl(float(theta[k]), float(mu_star / r[k])))
    return BoundTerm(k, gap, div, gap / div if div > 0 else math.inf)


def neighbor_set_N(rates: Sequence[float], theta: Sequence[float], k: int) -> tuple[int, ...]:
    """Adjacent rates ``l`` in ``{k-1, k+1}`` with ``r_k theta_k <= r_l``."""
    r, t, mu = _instance(rates, theta)
    if not 0 <= k < r.size:
        raise IndexError(f"k={k} out of range")
    return tuple(l for l in (k - 1, k + 1) if 0 <= l < r.size and mu[k] <= r[l])


def k0(rates: Sequence[float], theta: Sequence[float]) -> int:
    """Smallest ``k <= k_star`` whose rate is at least the optimal throughput."""
    r, t, mu = _instance(rates, theta)
    ks = int(np.argmax(mu))
    return next(k for k in range(ks + 1) if mu[ks] / r[k] <= 1.0)


def c_terms(rates, theta, check: bool = True) -> list[BoundTerm]:
    r, t, mu = _instance(rates, theta)
    if check and not (check_correlated(t) and check_unimodal(r, t)):
        raise StructureError("theta is not correlated and unimodal")
    ks = _unique_best(mu)
    return [_term(l, r, t, mu[ks]) for l in neighbor_set_N(r, t, ks)]


def c_theta(rates: Sequence[float], theta: Sequence[float]) -> float:
    """Lower-bound constant for policies exploiting correlation and unimodality.

    Sum over the optimal rate's qualifying neighbors ``l`` of
    ``(mu_star - mu_l) / I(theta_l, mu_star / r_l)``; 0 when there are none.
    """
    return float(sum(term.value for term in c_terms(rates, theta)))


def c_prime_terms(rates, theta) -> list[BoundTerm]:
    r, t, mu = _instance(rates, theta)
    ks = _unique_best(mu)
    start = k0(r, t)
    return [_term(k, r, t, mu[ks]) for k in range(start, r.size) if k != ks]


def c_prime_theta(rates: Sequence[float], theta: Sequence[float]) -> float:
    """Lower-bound constant using correlation only: every rate from ``k0`` up, except the optimum."""
    return float(sum(term.value for term in c_prime_terms(rates, theta)))


def c_graph(graph: DecisionGraph, rates: Sequence[float] | None, theta: Sequence[float]) -> float:
    """Graph counterpart of :func:`c_theta`, summing over qualifying graph neighbors of the optimum."""
    r = np.asarray(graph.rates if rates is None else rates, dtype=float)
    r, t, mu = _instance(r, theta)
    if len(graph) != r.size:
        raise ValueError("graph size does not match theta")
    if not check_correlated_modes(graph, t):
        raise StructureError("success probabilities are not non-increasing within each mode")
    ds = _unique_best(mu)
    if not check_graph_unimodal(graph, mu):
        raise StructureError("rewards are not unimodal on the graph")
    total = 0.0
    for d in graph.neighbor_ids(ds):
        if mu[ds] <= r[d]:
            total += _term(d, r, t, mu[ds]).value
    return float(total)


def bounds_report(rates: Sequence[float], theta: Sequence[float]) -> BoundsReport:
    """All constants for one instance; structural problems are listed, not raised.

    ``c`` is NaN when the instance is not correlated and unimodal.
    """
    r, t, mu = _instance(rates, theta)
    violations = []
    if not check_correlated(t):
        violations.append("not correlated: success probabilities increase somewhere")
    if not check_unimodal(r, t):
        violations.append("not unimodal: throughput has a second local maximum or a plateau")
    ks = int(np.argmax(mu))
    if np.count_nonzero(mu == mu[ks]) > 1:
        violations.append("optimal rate is not unique")
        return BoundsReport(ks, neighbor_set_N(r, t, ks), k0(r, t), math.nan, math.nan,
                            violations=violations)
    cp_terms = c_prime_terms(r, t)
    cp = float(sum(x.value for x in cp_terms))
    if violations:
        return BoundsReport(ks, neighbor_set_N(r, t, ks), k0(r, t), math.nan, cp, [], cp_terms,
                            violations)
    ct = c_terms(r, t)
    return BoundsReport(ks, neighbor_set_N(r, t, ks), k0(r, t), float(sum(x.value for x in ct)),
                        cp, ct, cp_terms, [])


# ---------------------------------------------------------------- drifting channels

def _theta_table(trajectory, horizon: int) -> np.ndarray:
    if hasattr(trajectory, "theta_table"):
        table = trajectory.theta_table(horizon)
        return np.broadcast_to(table, (horizon, table.shape[1])) if table.shape[0] == 1 else table
    table = np.asarray(trajectory, dtype=float)
    if table.ndim != 2 or table.shape[0] < horizon:
        raise ValueError("trajectory array must have shape (>= horizon, K)")
    return table[:horizon]


def separation_H(trajectory, rates: Sequence[float], graph: DecisionGraph | None, delta: float,
                 horizon: int, mode: str = "separated") -> int:
    """Count ``(n, k, k')`` with ``k'`` a neighbor of ``k`` by reward separation.

    ``mode="separated"`` counts pairs with ``|mu_k(n) - mu_k'(n)| >= delta``;
    ``mode="close"`` counts the complementary, poorly separated pairs
    (``< delta``). Each unordered edge contributes twice per slot.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    r = np.asarray(rates, dtype=float)
    graph = graph if graph is not None else line_graph(r.size)
    mu = r[None, :] * _theta_table(trajectory, horizon)
    edges = np.array(sorted(graph.edges), dtype=np.int64).reshape(-1, 2)
    if edges.size == 0:
        return 0
    diff = np.abs(mu[:, edges[:, 0]] - mu[:, edges[:, 1]])
    if mode == "separated":
        hits = diff >= delta
    elif mode == "close":
        hits = diff < delta
    else:
        raise ValueError("mode must be 'separated' or 'close'")
    return int(2 * np.count_nonzero(hits))


def _kl_clamped(p: float, q: float) -> float:
    # Arguments shifted by the drift allowance can leave [0, 1]: a target above
    # 1 is unreachable (infinite divergence), others are clamped.
    if q > 1.0:
        return math.inf
    return float(_kl(min(max(p, 0.0), 1.0), max(q, 0.0)))


def separation_G(trajectory, rates: Sequence[float], I_min: float, tau: int, sigma: float,
                 horizon: int, mode: str = "above") -> int:
    """Count ``(n, k)``, ``k`` sub-optimal at ``n``, that are hard to tell from the optimum.

    A pair counts when ``r_k (theta_k + tau sigma) >= r_* (theta_* - tau sigma)``
    or when the divergence ``I(theta_k + tau sigma, r_* (theta_* - tau sigma) / r_k)``
    compares with ``I_min``: ``> I_min`` for ``mode="above"``, ``< I_min`` for
    ``mode="below"``.
    """
    if tau < 1 or sigma < 0 or I_min <= 0:
        raise ValueError("need tau >= 1, sigma >= 0 and I_min > 0")
    if mode not in ("above", "below"):
        raise ValueError("mode must be 'above' or 'below'")
    r = np.asarray(rates, dtype=float)
    table = _theta_table(trajectory, horizon)
    slack = tau * sigma
    count = 0
    for n in range(horizon):
        th = table[n]
        mu = r * th
        ks = int(np.argmax(mu))
        target = r[ks] * (th[ks] - slack)
        for k in range(r.size):
            if k == ks:
                continue
            if r[k] * (th[k] + slack) >= target:
                count += 1
                continue
            div = _kl_clamped(th[k] + slack, target / r[k])
            if (div > I_min) if mode == "above" else (div < I_min):
                count += 1
    return count


def pinsker_separation_delta(I_min: float, tau: int, sigma: float, r_max: float) -> float:
    """Reward separation implied by a divergence below ``I_min`` plus the drift allowance.

    By Pinsker's inequality a pair counted by :func:`separation_G` with
    ``mode="below"`` has reward gap below ``r_max * (sqrt(I_min / 2) + 2 tau sigma)``.
    """
    return r_max * (math.sqrt(I_min / 2.0) + 2.0 * tau * sigma)


def is_closed_unimodal_trajectory(trajectory, rates, horizon: int) -> bool:
    table = _theta_table(trajectory, horizon)
    return all(check_unimodal_closed(rates, row) for row in table)
