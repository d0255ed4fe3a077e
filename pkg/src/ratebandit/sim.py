"""Slot-mode and packet-mode simulation, regret accounting and Monte-Carlo aggregation."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .environment import Scenario, draw_outcomes
from .graph import candidate_lists, line_graph
from .policies import ORS_DIVISOR, Policy, PolicyConfig, make_policy

SLOT_US = 500.0
PACKET_BITS = 12_000
DEFAULT_RUNS = 100


def spawn_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (channel, policy) generators derived from one seed."""
    chan, pol = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(chan), np.random.default_rng(pol)


def _as_config(policy) -> PolicyConfig:
    if isinstance(policy, PolicyConfig):
        return policy
    if isinstance(policy, str):
        return PolicyConfig(policy)
    raise TypeError(f"expected a PolicyConfig or policy name, got {type(policy).__name__}")


@dataclass
class SimHistory:
    """One run: decision, success flag and reward per slot (or per packet).

    ``times_us`` is set in packet mode and holds each transmission's start
    time on the continuous clock.
    """

    rates: np.ndarray
    decisions: np.ndarray
    successes: np.ndarray
    times_us: np.ndarray | None = None
    wall_us: float | None = None

    def __len__(self) -> int:
        return self.decisions.size

    @property
    def slots(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

    @property
    def rewards(self) -> np.ndarray:
        return np.where(self.successes, self.rates[self.decisions], 0.0)

    def counts(self) -> np.ndarray:
        return np.bincount(self.decisions, minlength=self.rates.size)

    def records(self):
        """Iterate ``(slot, decision, success, reward)`` tuples."""
        rew = self.rewards
        for i in range(len(self)):
            yield i + 1, int(self.decisions[i]), bool(self.successes[i]), float(rew[i])


# ---------------------------------------------------------------- slot mode

def run_slots(policy, scenario: Scenario, horizon: int, seed: int = 0,
              coupled: bool = True) -> SimHistory:
    """Reference loop: one decision per slot through the policy's Python interface.

    ``policy`` is a :class:`PolicyConfig` (or name), built with the policy
    generator derived from ``seed``, or a ready :class:`Policy` instance.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    chan_rng, pol_rng = spawn_rngs(seed)
    if not isinstance(policy, Policy):
        policy = make_policy(_as_config(policy), scenario, rng=pol_rng)
    K = scenario.K
    theta = scenario.profile.theta_table(horizon)
    uniforms = _draw_uniforms(chan_rng, horizon, K, coupled)
    dec = np.empty(horizon, dtype=np.int64)
    ok = np.empty(horizon, dtype=bool)
    for t in range(horizon):
        d = policy.select(t + 1)
        row = theta[min(t, theta.shape[0] - 1)]
        u = uniforms[t, 0] if coupled else uniforms[t, d]
        s = bool(u < row[d])
        policy.update(d, s)
        dec[t] = d
        ok[t] = s
    return SimHistory(scenario.rate_array, dec, ok)


def _draw_uniforms(rng: np.random.Generator, horizon: int, K: int, coupled: bool) -> np.ndarray:
    return rng.random((horizon, 1)) if coupled else rng.random((horizon, K))


def fast_run(policy, scenario: Scenario, horizon: int, seed: int = 0,
             coupled: bool = True) -> SimHistory:
    """Compiled equivalent of :func:`run_slots` for a policy config (same seed, same history)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    cfg = _as_config(policy)
    chan_rng, pol_rng = spawn_rngs(seed)
    rates = scenario.rate_array
    K = rates.size
    theta = np.ascontiguousarray(scenario.profile.theta_table(horizon))
    uniforms = _draw_uniforms(chan_rng, horizon, K, coupled)
    name = cfg.name
    if name == "oracle":
        means = rates[None, :] * theta
        best = np.argmax(means, axis=1)
        dec = np.broadcast_to(best, (horizon,)).copy() if best.size == 1 else best[:horizon]
        dec = dec.astype(np.int64)
        rows = np.minimum(np.arange(horizon), theta.shape[0] - 1)
        u = uniforms[:, 0] if coupled else uniforms[np.arange(horizon), dec]
        ok = draw_outcomes(theta[rows, dec], u)
        return SimHistory(rates, dec, ok)
    if name == "samplerate":
        policy_u = pol_rng.random(horizon // cfg.explore_every + 1)
        dec, ok = kernels.samplerate_run(rates, theta, uniforms, policy_u, horizon,
                                         cfg.window, cfg.explore_every, cfg.loss_limit)
        return SimHistory(rates, dec, ok)
    tau = int(cfg.tau) if cfg.windowed else 0
    if name in ("klrucb", "sw-klrucb"):
        ptr, idx = np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
        dec, ok = kernels.index_policy_run(rates, theta, uniforms, horizon, cfg.c, False, 1, tau,
                                           ptr, idx)
        return SimHistory(rates, dec, ok)
    if name in ("ors", "sw-ors"):
        graph = line_graph(K, list(rates))
        divisor = ORS_DIVISOR if cfg.divisor is None else cfg.divisor
    else:
        graph = scenario.graph if scenario.graph is not None else line_graph(K, list(rates))
        divisor = cfg.divisor if cfg.divisor is not None else max(graph.gamma, 1)
    ptr, idx = kernels.csr_candidates(candidate_lists(graph))
    dec, ok = kernels.index_policy_run(rates, theta, uniforms, horizon, cfg.c, True, int(divisor),
                                       tau, ptr, idx)
    return SimHistory(rates, dec, ok)


# ---------------------------------------------------------------- packet mode

def run_packets(policy, scenario: Scenario, wall_slots: float, packet_bits: float = PACKET_BITS,
                seed: int = 0, slot_us: float = SLOT_US, coupled: bool = True) -> SimHistory:
    """Airtime-weighted loop: the policy is consulted once per packet.

    A packet at rate ``r`` Mbit/s occupies ``packet_bits / r`` microseconds.
    The channel state seen by a packet is that of the slot containing its
    start time. Transmission stops at the first packet that would not finish
    within ``wall_slots * slot_us``.
    """
    if packet_bits <= 0:
        raise ValueError("packet_bits must be positive")
    if wall_slots <= 0:
        raise ValueError("wall_slots must be positive")
    chan_rng, pol_rng = spawn_rngs(seed)
    if not isinstance(policy, Policy):
        policy = make_policy(_as_config(policy), scenario, rng=pol_rng)
    rates = scenario.rate_array
    wall = float(wall_slots) * slot_us
    clock = 0.0
    dec, ok, times = [], [], []
    while True:
        slot = int(clock // slot_us) + 1
        d = policy.select(slot)
        airtime = packet_bits / rates[d]
        if clock + airtime > wall:
            break
        theta = scenario.theta_at(slot)
        u = chan_rng.random() if coupled else chan_rng.random(rates.size)[d]
        s = bool(u < theta[d])
        policy.update(d, s)
        dec.append(d)
        ok.append(s)
        times.append(clock)
        clock += airtime
    return SimHistory(rates, np.asarray(dec, dtype=np.int64), np.asarray(ok, dtype=bool),
                      np.asarray(times), wall)


def packet_regret_series(history: SimHistory, scenario: Scenario, packet_bits: float = PACKET_BITS,
                         slot_us: float = SLOT_US) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot series for a packet-mode run on the wall-clock slot grid.

    Returns ``(regret, delivered)``: the cumulative expected number of packets
    lost against a sender that always uses the instantaneous best rate, and
    the expected Mbit/s delivered in each slot. Packets are credited to the
    slot in which they finish.
    """
    if history.wall_us is None:
        raise ValueError("history was not produced in packet mode")
    T = int(round(history.wall_us / slot_us))
    means = scenario.means_table(T)
    rows = np.minimum(np.arange(T), means.shape[0] - 1)
    best = np.max(means, axis=1)[rows]
    oracle = np.cumsum(best) * slot_us / packet_bits
    theta = scenario.profile.theta_table(T)
    start_slot = (history.times_us // slot_us).astype(np.int64)
    p_ok = theta[np.minimum(start_slot, theta.shape[0] - 1), history.decisions]
    ends = history.times_us + packet_bits / history.rates[history.decisions]
    end_idx = np.clip(np.ceil(ends / slot_us - 1e-9).astype(np.int64) - 1, 0, T - 1)
    got = np.zeros(T)
    np.add.at(got, end_idx, p_ok)
    return oracle - np.cumsum(got), got * packet_bits / slot_us


def packet_regret(history: SimHistory, scenario: Scenario, packet_bits: float = PACKET_BITS,
                  slot_us: float = SLOT_US) -> float:
    """Expected packets lost over the whole run versus always sending at the best rate."""
    if history.wall_us is None:
        raise ValueError("history was not produced in packet mode")
    if scenario.profile.stationary:
        theta = scenario.theta_at(1)
        best = float(np.max(scenario.rate_array * theta))
        return best * history.wall_us / packet_bits - float(np.sum(theta[history.decisions]))
    return float(packet_regret_series(history, scenario, packet_bits, slot_us)[0][-1])


def packet_throughput(history: SimHistory, packet_bits: float = PACKET_BITS) -> float:
    """Delivered Mbit/s over the wall time."""
    if history.wall_us is None:
        raise ValueError("history was not produced in packet mode")
    return float(np.count_nonzero(history.successes)) * packet_bits / history.wall_us


# ---------------------------------------------------------------- accounting

def regret_increments(history: SimHistory, scenario: Scenario, realized: bool = False) -> np.ndarray:
    T = len(history)
    if history.rates.size != scenario.K:
        raise ValueError("history and scenario disagree on the number of decisions")
    means = scenario.means_table(T)
    rows = np.minimum(np.arange(T), means.shape[0] - 1)
    best = np.max(means, axis=1)[rows]
    if realized:
        return best - history.rewards
    return best - means[rows, history.decisions]


def pseudo_regret(history: SimHistory, scenario: Scenario, realized: bool = False) -> np.ndarray:
    """Cumulative regret series against the per-slot optimum, using true means by default."""
    return np.cumsum(regret_increments(history, scenario, realized))


def windowed_throughput(history_or_rewards, window_slots: int) -> np.ndarray:
    """Trailing moving average of reward per slot; early slots average what is available."""
    if window_slots < 1:
        raise ValueError("window must be >= 1")
    rew = history_or_rewards.rewards if isinstance(history_or_rewards, SimHistory) \
        else np.asarray(history_or_rewards, dtype=float)
    csum = np.concatenate(([0.0], np.cumsum(rew)))
    idx = np.arange(1, rew.size + 1)
    lo = np.maximum(idx - window_slots, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


# ---------------------------------------------------------------- Monte Carlo

@dataclass
class MonteCarloResult:
    """Pointwise mean and standard error of the cumulative regret over runs."""

    policy: str
    horizon: int
    n_runs: int
    base_seed: int
    mean: np.ndarray
    stderr: np.ndarray
    mean_reward: np.ndarray
    checkpoints: np.ndarray
    at_checkpoints: np.ndarray
    throughput: np.ndarray

    def regret_at(self, slot: int) -> float:
        return float(self.mean[slot - 1])

    def runs_at(self, slot: int) -> np.ndarray:
        """Per-run cumulative regret at a checkpoint slot."""
        hit = np.nonzero(self.checkpoints == slot)[0]
        if hit.size == 0:
            raise KeyError(f"slot {slot} is not a checkpoint")
        return self.at_checkpoints[:, hit[0]]


def _one_run(args):
    cfg, scenario, horizon, seed, coupled, realized, mode, packet_bits = args
    if mode == "packets":
        hist = run_packets(cfg, scenario, horizon, packet_bits, seed, coupled=coupled)
        return packet_regret_series(hist, scenario, packet_bits)
    hist = fast_run(cfg, scenario, horizon, seed, coupled)
    return np.cumsum(regret_increments(hist, scenario, realized)), hist.rewards


def monte_carlo(policy, scenario: Scenario, horizon: int, n_runs: int = DEFAULT_RUNS,
                base_seed: int = 0, checkpoints: Sequence[int] | None = None, jobs: int = 1,
                coupled: bool = True, realized: bool = False, mode: str = "slots",
                packet_bits: float = PACKET_BITS) -> MonteCarloResult:
    """Average regret series over runs seeded ``base_seed .. base_seed + n_runs - 1``.

    In ``mode="packets"`` the horizon is the wall time in slots and the series
    is the packet-mode regret (in packets) on the slot grid. Runs may execute in ``jobs`` worker processes; results are reduced in seed
    order, so the output does not depend on ``jobs``.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if mode not in ("slots", "packets"):
        raise ValueError("mode must be 'slots' or 'packets'")
    cfg = _as_config(policy)
    if checkpoints is None:
        checkpoints = [horizon]
    checks = np.asarray(sorted(set(int(c) for c in checkpoints)), dtype=np.int64)
    if checks.size and (checks[0] < 1 or checks[-1] > horizon):
        raise ValueError("checkpoints must lie in 1..horizon")
    tasks = [(cfg, scenario, horizon, base_seed + i, coupled, realized, mode, packet_bits)
             for i in range(n_runs)]

    mean = np.zeros(horizon)
    m2 = np.zeros(horizon)
    mean_rew = np.zeros(horizon)
    at_checks = np.empty((n_runs, checks.size))
    tput = np.empty(n_runs)

    def reduce(i, series, rewards):
        nonlocal mean, m2, mean_rew
        delta = series - mean
        mean += delta / (i + 1)
        m2 += delta * (series - mean)
        mean_rew += (rewards - mean_rew) / (i + 1)
        at_checks[i] = series[checks - 1]
        tput[i] = rewards.mean()

    if jobs > 1 and n_runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, (series, rewards) in enumerate(pool.map(_one_run, tasks, chunksize=1)):
                reduce(i, series, rewards)
    else:
        for i, task in enumerate(tasks):
            reduce(i, *_one_run(task))

    if n_runs > 1:
        stderr = np.sqrt(np.maximum(m2, 0.0) / (n_runs - 1) / n_runs)
    else:
        stderr = np.zeros(horizon)
    return MonteCarloResult(cfg.name, horizon, n_runs, base_seed, mean, stderr, mean_rew,
                            checks, at_checks, tput)


# ---------------------------------------------------------------- CSV output

def _stride_slots(horizon: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    slots = np.arange(stride, horizon + 1, stride)
    if slots.size == 0 or slots[-1] != horizon:
        slots = np.append(slots, horizon)
    return slots


def regret_csv(result: MonteCarloResult, stride: int = 100) -> str:
    """CSV text with columns ``slot,mean_regret,stderr``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["slot", "mean_regret", "stderr"])
    for s in _stride_slots(result.horizon, stride):
        w.writerow([int(s), f"{result.mean[s - 1]:.10g}", f"{result.stderr[s - 1]:.10g}"])
    return buf.getvalue()


def throughput_csv(result: MonteCarloResult, window_slots: int, stride: int = 100) -> str:
    """CSV text with columns ``slot,throughput`` (trailing-window mean reward, Mbit/s)."""
    series = windowed_throughput(result.mean_reward, window_slots)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["slot", "throughput"])
    for s in _stride_slots(result.horizon, stride):
        w.writerow([int(s), f"{series[s - 1]:.10g}"])
    return buf.getvalue()


def read_csv_strict(text: str, columns: Sequence[str]) -> list[tuple]:
    """Parse a CSV produced by this module, rejecting any deviation from the schema."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != list(columns):
        raise ValueError(f"expected header {list(columns)}")
    out = []
    last = 0
    for i, row in enumerate(rows[1:], 2):
        if len(row) != len(columns):
            raise ValueError(f"row {i}: expected {len(columns)} fields")
        slot = int(row[0])
        if slot <= last:
            raise ValueError(f"row {i}: slots must increase")
        last = slot
        vals = tuple(float(x) for x in row[1:])
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"row {i}: non-finite value")
        out.append((slot,) + vals)
    return out
