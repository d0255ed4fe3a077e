"""Channel models: rate tables, success profiles, structure checks and presets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

DOT11G_RATES = (6.0, 9.0, 12.0, 18.0, 24.0, 36.0, 48.0, 54.0)

STEEP = (0.99, 0.98, 0.96, 0.93, 0.9, 0.1, 0.06, 0.04)
GRADUAL = (0.95, 0.9, 0.8, 0.65, 0.45, 0.25, 0.15, 0.1)
LOSSY = (0.9, 0.8, 0.7, 0.55, 0.45, 0.35, 0.2, 0.1)

PRESET_NAMES = ("steep", "gradual", "lossy", "morph")
MORPH_HORIZON = 20_000
# Knot positions of the morph trajectory, as fractions of the horizon.
MORPH_KNOTS = (0.6, 0.9)


class UnknownPresetError(KeyError):
    pass


def _as_theta(theta: Sequence[float]) -> np.ndarray:
    arr = np.asarray(theta, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("theta must be a non-empty vector")
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise ValueError(f"theta entries must lie in [0, 1]: {arr}")
    return arr


@dataclass(frozen=True)
class RateTable:
    """Ordered transmission rates ``r_1 < ... < r_K`` in Mbit/s."""

    rates: tuple[float, ...]

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if not rates:
            raise ValueError("rate table is empty")
        if any(r <= 0 for r in rates):
            raise ValueError("rates must be positive")
        if any(a >= b for a, b in zip(rates, rates[1:])):
            raise ValueError(f"rates must be strictly increasing: {rates}")
        object.__setattr__(self, "rates", rates)

    def __len__(self) -> int:
        return len(self.rates)

    def __getitem__(self, k: int) -> float:
        return self.rates[k]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rates, dtype=float)


@dataclass(frozen=True)
class StationaryProfile:
    """Time-invariant success probabilities."""

    theta: tuple[float, ...]
    stationary = True

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(_as_theta(self.theta).tolist()))

    @property
    def K(self) -> int:
        return len(self.theta)

    @property
    def sigma(self) -> float:
        return 0.0

    def theta_at(self, slot: int) -> np.ndarray:
        return np.asarray(self.theta, dtype=float)

    def theta_table(self, horizon: int) -> np.ndarray:
        # A single row; consumers broadcast it over every slot.
        return np.asarray(self.theta, dtype=float)[None, :]


@dataclass(frozen=True)
class PiecewiseLinearProfile:
    """Trajectory interpolating linearly between ``(slot, theta)`` knots.

    Before the first knot and after the last one the profile is held constant.
    ``sigma`` is the exact per-slot Lipschitz constant of the interpolant.
    """

    knots: tuple[tuple[int, tuple[float, ...]], ...]
    stationary = False

    def __post_init__(self):
        knots = []
        for slot, theta in self.knots:
            knots.append((int(slot), tuple(_as_theta(theta).tolist())))
        if not knots:
            raise ValueError("at least one knot is required")
        slots = [s for s, _ in knots]
        if any(a >= b for a, b in zip(slots, slots[1:])):
            raise ValueError("knot slots must be strictly increasing")
        if len({len(t) for _, t in knots}) != 1:
            raise ValueError("all knots must have the same length")
        object.__setattr__(self, "knots", tuple(knots))

    @property
    def K(self) -> int:
        return len(self.knots[0][1])

    @property
    def sigma(self) -> float:
        best = 0.0
        for (s0, t0), (s1, t1) in zip(self.knots, self.knots[1:]):
            step = np.max(np.abs(np.subtract(t1, t0))) / (s1 - s0)
            best = max(best, float(step))
        return best

    def _interp(self, slots: np.ndarray) -> np.ndarray:
        xs = np.array([s for s, _ in self.knots], dtype=float)
        ys = np.array([t for _, t in self.knots], dtype=float)
        out = np.empty((slots.size, self.K))
        for k in range(self.K):
            out[:, k] = np.interp(slots, xs, ys[:, k])
        return np.clip(out, 0.0, 1.0)

    def theta_at(self, slot: int) -> np.ndarray:
        return self._interp(np.array([slot], dtype=float))[0]

    def theta_table(self, horizon: int) -> np.ndarray:
        return self._interp(np.arange(1, horizon + 1, dtype=float))


@dataclass(frozen=True, eq=False)
class StepProfile:
    """Piecewise-constant trajectory, one theta vector per interval.

    Interval ``i`` covers slots ``t`` with ``floor((t - 1) / interval_slots) == i``;
    the last interval is held past the end. ``sigma`` is the largest jump
    divided by the interval length, i.e. the drift rate averaged over an
    interval.
    """

    values: np.ndarray = field(repr=False)
    interval_slots: float = 1.0
    stationary = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] == 0:
            raise ValueError("values must be a non-empty (intervals, K) array")
        if np.any(vals < 0) or np.any(vals > 1) or np.any(np.isnan(vals)):
            raise ValueError("success probabilities must lie in [0, 1]")
        if self.interval_slots <= 0:
            raise ValueError("interval_slots must be positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def K(self) -> int:
        return self.values.shape[1]

    @property
    def n_intervals(self) -> int:
        return self.values.shape[0]

    @property
    def sigma(self) -> float:
        if self.n_intervals < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.values, axis=0)))) / self.interval_slots

    def _rows(self, slots: np.ndarray) -> np.ndarray:
        idx = np.floor((slots - 1) / self.interval_slots).astype(np.int64)
        return np.clip(idx, 0, self.n_intervals - 1)

    def theta_at(self, slot: int) -> np.ndarray:
        return self.values[self._rows(np.array([slot], dtype=float))[0]].copy()

    def theta_table(self, horizon: int) -> np.ndarray:
        return self.values[self._rows(np.arange(1, horizon + 1, dtype=float))]


SuccessProfile = Union[StationaryProfile, PiecewiseLinearProfile, StepProfile]


@dataclass(frozen=True)
class Scenario:
    """A named pairing of per-decision rates and a success profile.

    ``rates[d]`` is the rate of decision ``d``. For single-mode systems the
    rates form a strictly increasing :class:`RateTable`; MIMO scenarios carry a
    decision graph instead and rates may repeat across modes.
    """

    name: str
    rates: tuple[float, ...]
    profile: SuccessProfile
    graph: object = None

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if self.graph is None:
            RateTable(rates)
        elif any(r <= 0 for r in rates):
            raise ValueError("rates must be positive")
        if len(rates) != self.profile.K:
            raise ValueError(f"{len(rates)} rates but profile has {self.profile.K} arms")
        object.__setattr__(self, "rates", rates)

    @property
    def K(self) -> int:
        return len(self.rates)

    @property
    def rate_array(self) -> np.ndarray:
        return np.asarray(self.rates, dtype=float)

    def theta_at(self, slot: int) -> np.ndarray:
        return self.profile.theta_at(slot)

    def means_at(self, slot: int) -> np.ndarray:
        return self.rate_array * self.profile.theta_at(slot)

    def means_table(self, horizon: int) -> np.ndarray:
        return self.rate_array[None, :] * self.profile.theta_table(horizon)


def check_correlated(theta: Sequence[float]) -> bool:
    """True iff success probabilities are non-increasing in the rate."""
    arr = _as_theta(theta)
    return bool(np.all(arr[1:] <= arr[:-1]))


def _products(rates, theta) -> np.ndarray:
    r = np.asarray(rates, dtype=float)
    t = _as_theta(theta)
    if r.shape != t.shape:
        raise ValueError("rates and theta must have equal lengths")
    return r * t


def check_unimodal(rates: Sequence[float], theta: Sequence[float]) -> bool:
    """True iff ``r_k theta_k`` strictly increases to a unique peak, then strictly decreases."""
    mu = _products(rates, theta)
    peak = int(np.argmax(mu))
    return bool(np.all(np.diff(mu[: peak + 1]) > 0) and np.all(np.diff(mu[peak:]) < 0))


def check_unimodal_closed(rates: Sequence[float], theta: Sequence[float]) -> bool:
    """Closure of :func:`check_unimodal`: plateaus are allowed on both sides."""
    mu = _products(rates, theta)
    peak = int(np.argmax(mu))
    return bool(np.all(np.diff(mu[: peak + 1]) >= 0) and np.all(np.diff(mu[peak:]) <= 0))


@dataclass(frozen=True)
class SlotDraw:
    uniforms: np.ndarray
    successes: np.ndarray

    def outcome(self, k: int) -> bool:
        return bool(self.successes[k])


def draw_outcomes(theta: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    # U ~ U[0, 1) succeeds iff U < theta, so theta = 0 never succeeds.
    return uniforms < theta


def sample_slot(profile: SuccessProfile, slot: int, rng: np.random.Generator,
                coupled: bool = True) -> SlotDraw:
    """Draw the outcome at every rate for one slot.

    With ``coupled=True`` a single uniform drives all rates, so a failure at a
    rate implies failure at every rate with lower success probability.
    ``coupled=False`` draws an independent uniform per rate.
    """
    if slot < 1:
        raise ValueError("slots are numbered from 1")
    theta = profile.theta_at(slot)
    if coupled:
        u = np.full(theta.size, rng.random())
    else:
        u = rng.random(theta.size)
    return SlotDraw(u, draw_outcomes(theta, u))


def best_arm(rates: Sequence[float], profile: SuccessProfile, slot: int = 1) -> int:
    """Index of the throughput-maximizing decision at ``slot``; lowest index on ties."""
    return int(np.argmax(np.asarray(rates, dtype=float) * profile.theta_at(slot)))


def measure_lipschitz(profile: SuccessProfile, horizon: int) -> float:
    """Largest per-slot change of any success probability over slots ``1..horizon``."""
    if profile.stationary or horizon < 2:
        return 0.0
    table = profile.theta_table(horizon)
    return float(np.max(np.abs(np.diff(table, axis=0))))


def morph_profile(horizon: int = MORPH_HORIZON) -> PiecewiseLinearProfile:
    """Steep at slot 1, gradual at 60% of the horizon, lossy from 90% on."""
    if horizon < 10:
        raise ValueError("morph needs a horizon of at least 10 slots")
    s1 = int(round(MORPH_KNOTS[0] * horizon))
    s2 = int(round(MORPH_KNOTS[1] * horizon))
    knots = [(1, STEEP), (s1, GRADUAL), (s2, LOSSY)]
    if s2 < horizon:
        knots.append((horizon, LOSSY))
    return PiecewiseLinearProfile(tuple(knots))


def preset(name: str, horizon: int = MORPH_HORIZON) -> Scenario:
    """One of the named benchmark scenarios on the 802.11g rate table."""
    key = name.lower()
    if key == "steep":
        prof = StationaryProfile(STEEP)
    elif key == "gradual":
        prof = StationaryProfile(GRADUAL)
    elif key == "lossy":
        prof = StationaryProfile(LOSSY)
    elif key == "morph":
        prof = morph_profile(horizon)
    else:
        raise UnknownPresetError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
    return Scenario(key, DOT11G_RATES, prof)


# ---------------------------------------------------------------- config I/O

def _fmt(xs) -> str:
    return ",".join(repr(float(x)) for x in xs)


def scenario_to_text(scenario: Scenario) -> str:
    """Serialize a stationary or piecewise-linear scenario as ``key=value`` lines."""
    prof = scenario.profile
    lines = [f"name={scenario.name}", f"rates={_fmt(scenario.rates)}"]
    if isinstance(prof, StationaryProfile):
        lines.append(f"theta={_fmt(prof.theta)}")
    elif isinstance(prof, PiecewiseLinearProfile):
        for slot, theta in prof.knots:
            lines.append(f"knot={slot}:{_fmt(theta)}")
    else:
        raise TypeError(f"cannot serialize {type(prof).__name__}")
    lines.append(f"sigma={prof.sigma!r}")
    return "\n".join(lines) + "\n"


def scenario_from_text(text: str) -> Scenario:
    name = "custom"
    rates = None
    theta = None
    knots = []
    sigma = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key == "name":
                name = value
            elif key == "rates":
                rates = [float(x) for x in value.split(",")]
            elif key == "theta":
                theta = [float(x) for x in value.split(",")]
            elif key == "knot":
                slot, vals = value.split(":", 1)
                knots.append((int(slot), tuple(float(x) for x in vals.split(","))))
            elif key == "sigma":
                sigma = float(value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if rates is None:
        raise ValueError("scenario config lacks 'rates'")
    if (theta is None) == (not knots):
        raise ValueError("scenario config needs exactly one of 'theta' or 'knot' lines")
    prof = StationaryProfile(tuple(theta)) if theta is not None else PiecewiseLinearProfile(tuple(knots))
    if sigma is not None and prof.sigma > sigma * (1 + 1e-9) + 1e-15:
        raise ValueError(f"declared sigma {sigma} is below the trajectory's drift {prof.sigma}")
    return Scenario(name, tuple(rates), prof)


def lipschitz_ok(profile: SuccessProfile, horizon: int) -> bool:
    """Measured per-slot drift does not exceed the declared ``sigma`` (up to rounding)."""
    return measure_lipschitz(profile, horizon) <= profile.sigma * (1 + 1e-9) + 1e-15


__all__ = [
    "DOT11G_RATES", "STEEP", "GRADUAL", "LOSSY", "PRESET_NAMES",
    "RateTable", "StationaryProfile", "PiecewiseLinearProfile", "StepProfile",
    "SuccessProfile", "Scenario", "SlotDraw", "UnknownPresetError",
    "check_correlated", "check_unimodal", "check_unimodal_closed",
    "sample_slot", "draw_outcomes", "best_arm", "measure_lipschitz",
    "morph_profile", "preset", "scenario_to_text", "scenario_from_text", "lipschitz_ok",
]
