"""Rate selection policies.

Every policy exposes ``select(slot) -> decision id`` and
``update(decision, success)``. Decision ids are 0-based positions in the
scenario's rate list (or graph vertex list). The classes here are the
reference implementation; :mod:`ratebandit.kernels` holds compiled versions
of the same rules used for large Monte-Carlo batches.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import DecisionGraph, candidate_lists, line_graph
from .kl_index import DEFAULT_C, _index_norm, _threshold

ORS_DIVISOR = 3

SAMPLERATE_WINDOW = 500
SAMPLERATE_EXPLORE_EVERY = 10
SAMPLERATE_LOSS_LIMIT = 4


# ---------------------------------------------------------------- state

@dataclass
class PolicyState:
    """Per-decision sample counts, reward sums and leader counts."""

    counts: np.ndarray
    sums: np.ndarray
    leader_counts: np.ndarray
    n: int = 0

    @classmethod
    def fresh(cls, K: int) -> "PolicyState":
        return cls(np.zeros(K, dtype=np.int64), np.zeros(K), np.zeros(K, dtype=np.int64))

    @property
    def K(self) -> int:
        return self.counts.size

    def means(self) -> np.ndarray:
        """Empirical mean reward; 0 for decisions never observed."""
        out = np.zeros(self.K)
        seen = self.counts > 0
        out[seen] = self.sums[seen] / self.counts[seen]
        return out

    def record(self, d: int, reward: float) -> None:
        self.counts[d] += 1
        self.sums[d] += reward

    def note_leader(self, leader: int) -> None:
        # -1 marks a slot without a computed leader (initial sweep).
        if leader >= 0:
            self.leader_counts[leader] += 1


@dataclass
class WindowedState(PolicyState):
    """Statistics restricted to a sliding window.

    ``records`` holds the last ``tau`` updates; ``leaders`` holds the leader
    of each of the last ``tau`` select calls (``-1`` when no leader was
    computed, e.g. during the initial sweep).
    """

    tau: int = 1
    records: deque = field(default_factory=deque)
    leaders: deque = field(default_factory=deque)

    @classmethod
    def fresh(cls, K: int, tau: int = 1) -> "WindowedState":
        if tau < 1:
            raise ValueError("window length must be >= 1")
        return cls(np.zeros(K, dtype=np.int64), np.zeros(K), np.zeros(K, dtype=np.int64),
                   tau=int(tau))

    def record(self, d: int, reward: float) -> None:
        self.records.append((d, reward))
        self.counts[d] += 1
        self.sums[d] += reward
        if len(self.records) > self.tau:
            old, old_r = self.records.popleft()
            self.counts[old] -= 1
            self.sums[old] -= old_r

    def note_leader(self, leader: int) -> None:
        self.leaders.append(leader)
        if leader >= 0:
            self.leader_counts[leader] += 1
        if len(self.leaders) > self.tau:
            old = self.leaders.popleft()
            if old >= 0:
                self.leader_counts[old] -= 1

    def recompute(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Window statistics rebuilt from the raw buffers (for cross-checks)."""
        counts = np.zeros(self.K, dtype=np.int64)
        sums = np.zeros(self.K)
        lead = np.zeros(self.K, dtype=np.int64)
        for d, r in self.records:
            counts[d] += 1
            sums[d] += r
        for d in self.leaders:
            if d >= 0:
                lead[d] += 1
        return counts, sums, lead


# ---------------------------------------------------------------- helpers

def _leader(means: np.ndarray) -> int:
    # np.argmax returns the first maximizer: lowest id on ties.
    return int(np.argmax(means))


def _best_index(cands: Sequence[int], rates: np.ndarray, state: PolicyState,
                threshold: float) -> int:
    """Candidate with the largest KL-UCB index, lowest id on ties."""
    best, best_id = -math.inf, -1
    for k in cands:
        r = rates[k]
        t = state.counts[k]
        mean = state.sums[k] / t if t > 0 else 0.0
        value = r * _index_norm(mean / r, float(t), threshold)
        if value > best:
            best, best_id = value, k
    return best_id


class Policy:
    name = "policy"

    def __init__(self, rates: Sequence[float]):
        self.rates = np.asarray(rates, dtype=float)
        if self.rates.ndim != 1 or self.rates.size == 0 or np.any(self.rates <= 0):
            raise ValueError("rates must be a non-empty vector of positive numbers")
        self.K = self.rates.size

    def select(self, slot: int | None = None) -> int:
        raise NotImplementedError

    def update(self, decision: int, success: bool) -> None:
        raise NotImplementedError

    def _check_decision(self, d: int) -> int:
        d = int(d)
        if not 0 <= d < self.K:
            raise KeyError(f"unknown decision {d}")
        return d


class _IndexPolicy(Policy):
    """Shared bookkeeping for the KL-UCB family."""

    def __init__(self, rates, c: float = DEFAULT_C, tau: int | None = None):
        super().__init__(rates)
        if c < 0:
            raise ValueError("c must be non-negative")
        self.c = float(c)
        self.tau = None if tau is None else int(tau)
        if self.tau is None:
            self.state = PolicyState.fresh(self.K)
        else:
            self.state = WindowedState.fresh(self.K, self.tau)

    def update(self, decision: int, success: bool) -> None:
        d = self._check_decision(decision)
        self.state.record(d, self.rates[d] if success else 0.0)


class KLRUCB(_IndexPolicy):
    """Play every rate once, then the rate with the largest KL-UCB index over all rates.

    With ``tau`` set, statistics come from the last ``tau`` updates and the
    exploration threshold is the constant ``f(tau)``.
    """

    name = "klrucb"

    def select(self, slot: int | None = None) -> int:
        st = self.state
        st.n += 1
        if st.n <= self.K:
            return st.n - 1
        level = st.n if self.tau is None else self.tau
        return _best_index(range(self.K), self.rates, st, _threshold(float(level), self.c))


class GORS(_IndexPolicy):
    """Leader-based exploration restricted to the leader's graph neighborhood.

    Every decision is played once. Afterwards the leader (largest empirical
    mean, lowest id on ties) is played whenever its leader count minus one is
    a multiple of ``divisor``; otherwise the decision with the largest index
    among the leader and its neighbors is played, with exploration threshold
    ``f(leader count)``. ``divisor`` defaults to the graph's max degree.
    """

    name = "gors"

    def __init__(self, rates, graph: DecisionGraph | None = None, c: float = DEFAULT_C,
                 divisor: int | None = None, tau: int | None = None):
        super().__init__(rates, c=c, tau=tau)
        self.graph = graph if graph is not None else line_graph(self.K, list(self.rates))
        if len(self.graph) != self.K:
            raise ValueError("graph size does not match the number of rates")
        self.divisor = int(divisor) if divisor is not None else max(self.graph.gamma, 1)
        if self.divisor < 1:
            raise ValueError("divisor must be >= 1")
        self.candidates = candidate_lists(self.graph)
        self.last_leader = -1

    def select(self, slot: int | None = None) -> int:
        st = self.state
        st.n += 1
        if st.n <= self.K:
            st.note_leader(-1)
            self.last_leader = -1
            return st.n - 1
        lead = _leader(st.means())
        st.note_leader(lead)
        self.last_leader = lead
        l_lead = int(st.leader_counts[lead])
        if (l_lead - 1) % self.divisor == 0:
            return lead
        thr = _threshold(float(l_lead), self.c)
        return _best_index(self.candidates[lead], self.rates, st, thr)


class ORS(GORS):
    """Leader-based exploration on the rate line, forced-leader divisor 3."""

    name = "ors"

    def __init__(self, rates, c: float = DEFAULT_C, tau: int | None = None):
        K = len(rates)
        super().__init__(rates, graph=line_graph(K, list(rates)), c=c,
                         divisor=ORS_DIVISOR, tau=tau)


class SWKLRUCB(KLRUCB):
    name = "sw-klrucb"

    def __init__(self, rates, tau: int, c: float = DEFAULT_C):
        super().__init__(rates, c=c, tau=tau)


class SWORS(ORS):
    name = "sw-ors"

    def __init__(self, rates, tau: int, c: float = DEFAULT_C):
        super().__init__(rates, c=c, tau=tau)


class SWGORS(GORS):
    name = "sw-gors"

    def __init__(self, rates, tau: int, graph: DecisionGraph | None = None,
                 c: float = DEFAULT_C, divisor: int | None = None):
        super().__init__(rates, graph=graph, c=c, divisor=divisor, tau=tau)


class SampleRate(Policy):
    """Windowed best-throughput heuristic with periodic random exploration.

    The current rate maximizes ``r_k * theta_hat_k`` over the last ``window``
    packets (rates never tried count as 0, so the first packet goes out at the
    lowest rate). Every ``explore_every``-th packet a rate is drawn uniformly
    among those faster than the current rate's throughput. A rate suffering
    ``loss_limit`` consecutive failures is excluded for the next ``window``
    packets, unless it is the only selectable rate left.
    """

    name = "samplerate"

    def __init__(self, rates, rng: np.random.Generator | None = None,
                 window: int = SAMPLERATE_WINDOW, explore_every: int = SAMPLERATE_EXPLORE_EVERY,
                 loss_limit: int = SAMPLERATE_LOSS_LIMIT):
        super().__init__(rates)
        if window < 1 or explore_every < 1 or loss_limit < 1:
            raise ValueError("SampleRate constants must be >= 1")
        self.window = int(window)
        self.explore_every = int(explore_every)
        self.loss_limit = int(loss_limit)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.history: deque = deque()
        self.attempts = np.zeros(self.K, dtype=np.int64)
        self.successes = np.zeros(self.K, dtype=np.int64)
        self.consecutive_losses = np.zeros(self.K, dtype=np.int64)
        self.excluded_until = np.zeros(self.K, dtype=np.int64)
        self.n = 0
        self.current = 0

    def throughput(self) -> np.ndarray:
        tput = np.zeros(self.K)
        tried = self.attempts > 0
        tput[tried] = self.rates[tried] * self.successes[tried] / self.attempts[tried]
        return tput

    def excluded(self, packet: int | None = None) -> np.ndarray:
        packet = self.n if packet is None else packet
        return packet <= self.excluded_until

    def select(self, slot: int | None = None) -> int:
        self.n += 1
        tput = self.throughput()
        allowed = ~self.excluded()
        masked = np.where(allowed, tput, -1.0)
        cur = int(np.argmax(masked))
        self.current = cur
        if self.n % self.explore_every == 0:
            cands = [k for k in range(self.K)
                     if allowed[k] and k != cur and self.rates[k] > tput[cur]]
            if cands:
                u = self.rng.random()
                return cands[int(u * len(cands))]
        return cur

    def update(self, decision: int, success: bool) -> None:
        d = self._check_decision(decision)
        ok = bool(success)
        self.history.append((d, ok))
        self.attempts[d] += 1
        self.successes[d] += ok
        if len(self.history) > self.window:
            old, old_ok = self.history.popleft()
            self.attempts[old] -= 1
            self.successes[old] -= old_ok
        if ok:
            self.consecutive_losses[d] = 0
            return
        self.consecutive_losses[d] += 1
        if self.consecutive_losses[d] >= self.loss_limit:
            self.consecutive_losses[d] = 0
            others = ~self.excluded(self.n + 1)
            others[d] = False
            if others.any():
                self.excluded_until[d] = self.n + self.window


def exploration_candidates(throughput: float, rates: Sequence[float]) -> tuple[float, ...]:
    """Rates strictly faster than the given throughput."""
    return tuple(float(r) for r in rates if r > throughput)


class Oracle(Policy):
    """Always plays the instantaneous optimum of a known scenario."""

    name = "oracle"

    def __init__(self, scenario):
        super().__init__(scenario.rates)
        self.scenario = scenario
        self._slot = 0

    def select(self, slot: int | None = None) -> int:
        self._slot = self._slot + 1 if slot is None else int(slot)
        return int(np.argmax(self.scenario.means_at(max(self._slot, 1))))

    def update(self, decision: int, success: bool) -> None:
        self._check_decision(decision)


# ---------------------------------------------------------------- construction

POLICY_NAMES = ("klrucb", "ors", "gors", "sw-klrucb", "sw-ors", "sw-gors", "samplerate", "oracle")

_ALIASES = {
    "kl-r-ucb": "klrucb", "kl_r_ucb": "klrucb",
    "g-ors": "gors", "g_ors": "gors",
    "sw-kl-r-ucb": "sw-klrucb", "swklrucb": "sw-klrucb", "sw_klrucb": "sw-klrucb",
    "swors": "sw-ors", "sw_ors": "sw-ors",
    "sw-g-ors": "sw-gors", "swgors": "sw-gors", "sw_gors": "sw-gors",
    "sample-rate": "samplerate",
}


def canonical_name(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in POLICY_NAMES:
        raise ValueError(f"unknown policy {name!r}; expected one of {', '.join(POLICY_NAMES)}")
    return key


@dataclass(frozen=True)
class PolicyConfig:
    """Everything needed to build a policy for a given scenario."""

    name: str
    c: float = DEFAULT_C
    tau: int | None = None
    divisor: int | None = None
    window: int = SAMPLERATE_WINDOW
    explore_every: int = SAMPLERATE_EXPLORE_EVERY
    loss_limit: int = SAMPLERATE_LOSS_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "name", canonical_name(self.name))
        if self.name.startswith("sw-") and (self.tau is None or self.tau < 1):
            raise ValueError(f"{self.name} needs a window length tau >= 1")

    @property
    def windowed(self) -> bool:
        return self.name.startswith("sw-")


def make_policy(cfg: PolicyConfig, scenario, rng: np.random.Generator | None = None) -> Policy:
    """Instantiate ``cfg`` for ``scenario``; ``rng`` feeds randomized policies."""
    rates = scenario.rates
    graph = getattr(scenario, "graph", None)
    name = cfg.name
    if name == "klrucb":
        return KLRUCB(rates, c=cfg.c)
    if name == "sw-klrucb":
        return SWKLRUCB(rates, tau=cfg.tau, c=cfg.c)
    if name == "ors":
        if cfg.divisor is not None and cfg.divisor != ORS_DIVISOR:
            return GORS(rates, line_graph(len(rates), list(rates)), c=cfg.c, divisor=cfg.divisor)
        return ORS(rates, c=cfg.c)
    if name == "sw-ors":
        if cfg.divisor is not None and cfg.divisor != ORS_DIVISOR:
            return SWGORS(rates, tau=cfg.tau, graph=line_graph(len(rates), list(rates)),
                          c=cfg.c, divisor=cfg.divisor)
        return SWORS(rates, tau=cfg.tau, c=cfg.c)
    if name == "gors":
        return GORS(rates, graph=graph, c=cfg.c, divisor=cfg.divisor)
    if name == "sw-gors":
        return SWGORS(rates, tau=cfg.tau, graph=graph, c=cfg.c, divisor=cfg.divisor)
    if name == "samplerate":
        return SampleRate(rates, rng=rng, window=cfg.window, explore_every=cfg.explore_every,
                          loss_limit=cfg.loss_limit)
    if name == "oracle":
        return Oracle(scenario)
    raise ValueError(f"unknown policy {name!r}")


def recommended_window(sigma: float, K: int = 8, phi: float | None = None,
                       flavor: str = "swors") -> int:
    """Window length tuned to a drift rate ``sigma``.

    ``swors``: ``sigma**(-3/4) * ln(1/sigma) / 8``.
    ``swklrucb``: ``(K * sigma / phi)**(-4/5) / 4`` with ``phi`` defaulting to ``K``.
    The result is rounded half-up and clamped to at least 1.
    """
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma!r}")
    flavor = flavor.lower().replace("-", "").replace("_", "")
    if flavor == "swors":
        raw = sigma ** -0.75 * math.log(1.0 / sigma) / 8.0
    elif flavor == "swklrucb":
        phi = float(K) if phi is None else float(phi)
        if phi <= 0 or K < 1:
            raise ValueError("phi and K must be positive")
        raw = (K * sigma / phi) ** -0.8 / 4.0
    else:
        raise ValueError(f"unknown flavor {flavor!r}; expected 'swors' or 'swklrucb'")
    return max(1, int(math.floor(raw + 0.5)))
