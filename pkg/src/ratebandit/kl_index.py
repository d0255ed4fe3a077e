"""Bernoulli KL divergence and the KL upper-confidence index.

The jitted helpers prefixed with an underscore are shared by the reference
policies and the compiled simulation kernels, so both routes resolve indexes
with the exact same bisection.
"""

from __future__ import annotations

import math

from numba import njit

BISECTION_TOL = 1e-9
BISECTION_MAX_ITER = 64
DEFAULT_C = 3.0


@njit(cache=True)
def _kl(p, q):
    if p == q:
        return 0.0
    if q <= 0.0 or q >= 1.0:
        return math.inf
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return max(out, 0.0)


@njit(cache=True)
def _index_norm(p, samples, threshold):
    """Largest x in [p, 1] with samples * I(p, x) <= threshold (bisection)."""
    if samples == 0 or p >= 1.0 or threshold == math.inf:
        return 1.0
    lo = p
    hi = 1.0
    for _ in range(BISECTION_MAX_ITER):
        if hi - lo <= BISECTION_TOL:
            break
        mid = 0.5 * (lo + hi)
        if samples * _kl(p, mid) <= threshold:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def _threshold(l, c):
    if l < 3:
        return 0.0
    ll = math.log(l)
    return max(ll + c * math.log(ll), 0.0)


def _check_prob(name: str, x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {x!r}")


def bernoulli_kl(p: float, q: float) -> float:
    """KL divergence ``I(p, q)`` between Bernoulli(p) and Bernoulli(q), in nats.

    Uses ``0 log 0 = 0`` and returns ``inf`` when ``q`` is 0 or 1 and differs
    from ``p``.
    """
    _check_prob("p", p)
    _check_prob("q", q)
    return float(_kl(float(p), float(q)))


def pinsker_bounds(p: float, q: float) -> tuple[float, float]:
    """Lower and upper quadratic bounds on ``I(p, q)`` for ``0 <= p <= q < 1``.

    The lower bound is Pinsker's inequality ``2 (p - q)**2``; the upper bound
    ``(p - q)**2 / (q (1 - q))`` follows from convexity in ``q``.
    """
    _check_prob("p", p)
    _check_prob("q", q)
    if not p <= q < 1.0:
        raise ValueError(f"pinsker_bounds needs 0 <= p <= q < 1, got p={p!r}, q={q!r}")
    d2 = (p - q) ** 2
    if d2 == 0.0:
        return 0.0, 0.0
    return 2.0 * d2, d2 / (q * (1.0 - q))


def exploration_threshold(l: float, c: float = DEFAULT_C) -> float:
    """``log(l) + c log(log(l))``, zero for ``l < 3`` and clamped at zero."""
    if c < 0:
        raise ValueError("c must be non-negative")
    return float(_threshold(float(l), float(c)))


def kl_ucb_index(mean_est: float, samples: int, threshold: float, r: float) -> float:
    """KL upper-confidence index of an arm with reward scale ``r``.

    Returns the largest ``q`` in ``[mean_est, r]`` such that
    ``samples * I(mean_est / r, q / r) <= threshold``, resolved to ``1e-9`` on
    the normalized scale. Unsampled arms, and arms whose empirical mean already
    equals ``r``, get index ``r``.
    """
    if r <= 0:
        raise ValueError(f"reward scale r must be positive, got {r!r}")
    if samples < 0:
        raise ValueError(f"samples must be >= 0, got {samples!r}")
    if threshold < 0 or math.isnan(threshold):
        raise ValueError(f"threshold must be >= 0, got {threshold!r}")
    if not (0.0 <= mean_est <= r):
        raise ValueError(f"mean_est must lie in [0, r]; got {mean_est!r} with r={r!r}")
    return r * float(_index_norm(mean_est / r, float(samples), float(threshold)))
