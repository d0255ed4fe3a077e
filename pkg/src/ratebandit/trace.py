"""Transmission traces: CSV format, trace-driven channels and synthetic capture.

Format (UTF-8, LF line endings)::

    #rates=6,9,12,18,24,36,48,54;slot_ms=0.5;interval_ms=10
    interval_start_ms,rate_id,attempts,successes
    0,0,8,8
    0,1,8,7
    ...

``rate_id`` is the 0-based position in ``rates``. Optional header keys are
``interval_ms`` (aggregation granularity) and ``modes`` (one label per rate).
Rows with three fields, ``timestamp_ms,rate_id,success``, are read as single
transmissions. Timestamps must be non-decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .environment import (Scenario, StepProfile, check_correlated, check_unimodal,
                          measure_lipschitz, preset)
from .sim import spawn_rngs

COLUMNS = "interval_start_ms,rate_id,attempts,successes"
DEFAULT_INTERVAL_MS = 10.0
DEFAULT_SLOT_MS = 0.5
DEFAULT_BATCH = 8


class TraceError(ValueError):
    pass


class TraceFormatError(TraceError):
    """Malformed header or row."""


class UnknownRateError(TraceError):
    """A row references a rate id outside the header's rate list."""


class TimestampOrderError(TraceError):
    """Timestamps decrease."""


@dataclass(frozen=True)
class TraceRow:
    start_ms: float
    rate_id: int
    attempts: int
    successes: int


@dataclass(frozen=True)
class TraceFile:
    rates: tuple[float, ...]
    slot_ms: float = DEFAULT_SLOT_MS
    rows: tuple[TraceRow, ...] = ()
    interval_ms: float | None = None
    modes: tuple[str, ...] | None = None

    @property
    def K(self) -> int:
        return len(self.rates)

    def totals(self) -> tuple[np.ndarray, np.ndarray]:
        att = np.zeros(self.K, dtype=np.int64)
        suc = np.zeros(self.K, dtype=np.int64)
        for row in self.rows:
            att[row.rate_id] += row.attempts
            suc[row.rate_id] += row.successes
        return att, suc

    def success_ratio(self) -> np.ndarray:
        """Pooled empirical success ratio per rate (NaN where never attempted)."""
        att, suc = self.totals()
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(att > 0, suc / np.maximum(att, 1), np.nan)


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def render_trace(trace: TraceFile) -> str:
    head = [f"rates={','.join(_num(r) for r in trace.rates)}", f"slot_ms={_num(trace.slot_ms)}"]
    if trace.interval_ms is not None:
        head.append(f"interval_ms={_num(trace.interval_ms)}")
    if trace.modes is not None:
        head.append(f"modes={','.join(trace.modes)}")
    lines = ["#" + ";".join(head), COLUMNS]
    for row in trace.rows:
        lines.append(f"{_num(row.start_ms)},{row.rate_id},{row.attempts},{row.successes}")
    return "\n".join(lines) + "\n"


def _parse_header(line: str) -> dict:
    if not line.startswith("#"):
        raise TraceFormatError("first line must be the '#rates=...;slot_ms=...' header")
    fields = {}
    for part in line[1:].split(";"):
        part = part.strip()
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep:
            raise TraceFormatError(f"bad header field {part!r}")
        fields[key.strip()] = value.strip()
    if "rates" not in fields or "slot_ms" not in fields:
        raise TraceFormatError("header needs both 'rates' and 'slot_ms'")
    try:
        rates = tuple(float(x) for x in fields["rates"].split(","))
        slot_ms = float(fields["slot_ms"])
        interval = float(fields["interval_ms"]) if "interval_ms" in fields else None
    except ValueError as exc:
        raise TraceFormatError(f"bad header value: {exc}") from None
    if any(r <= 0 for r in rates) or any(a >= b for a, b in zip(rates, rates[1:])):
        raise TraceFormatError("header rates must be positive and strictly increasing")
    if slot_ms <= 0 or (interval is not None and interval <= 0):
        raise TraceFormatError("durations must be positive")
    modes = None
    if "modes" in fields:
        modes = tuple(m.strip() for m in fields["modes"].split(","))
        if len(modes) != len(rates):
            raise TraceFormatError("need one mode label per rate")
    return dict(rates=rates, slot_ms=slot_ms, interval_ms=interval, modes=modes)


def parse_trace(text: str) -> TraceFile:
    """Parse and validate trace text; see the module docstring for the grammar."""
    lines = text.splitlines()
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise TraceFormatError("empty input: missing header")
    head = _parse_header(lines[0].strip())
    K = len(head["rates"])
    rows = []
    last = -math.inf
    for lineno, raw in enumerate(lines[1:], 2):
        line = raw.strip()
        if not line or line == COLUMNS:
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            if len(parts) == 4:
                ts, rid, att, suc = float(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])
            elif len(parts) == 3:
                ts, rid, suc = float(parts[0]), int(parts[1]), int(parts[2])
                att = 1
                if suc not in (0, 1):
                    raise ValueError("success flag must be 0 or 1")
            else:
                raise ValueError(f"expected 3 or 4 fields, got {len(parts)}")
        except ValueError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from None
        if not math.isfinite(ts) or ts < 0:
            raise TraceFormatError(f"line {lineno}: timestamp must be finite and >= 0")
        if att < 0 or suc < 0 or suc > att:
            raise TraceFormatError(f"line {lineno}: need 0 <= successes <= attempts")
        if not 0 <= rid < K:
            raise UnknownRateError(f"line {lineno}: rate id {rid} not in 0..{K - 1}")
        if ts < last:
            raise TimestampOrderError(f"line {lineno}: timestamp {ts} after {last}")
        last = ts
        rows.append(TraceRow(ts, rid, att, suc))
    return TraceFile(head["rates"], head["slot_ms"], tuple(rows), head["interval_ms"], head["modes"])


def read_trace(path) -> TraceFile:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())


def write_trace(trace: TraceFile, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_trace(trace))


# ---------------------------------------------------------------- trace-driven channel

def interval_counts(trace: TraceFile, interval_ms: float | None = None):
    """Per-interval ``(attempts, successes)`` arrays of shape ``(intervals, K)``."""
    interval = interval_ms or trace.interval_ms
    if interval is None:
        raise TraceError("trace has no interval_ms; pass an aggregation interval")
    if interval <= 0:
        raise ValueError("interval must be positive")
    if not trace.rows:
        raise TraceError("trace has no rows")
    bins = np.array([int(math.floor(r.start_ms / interval + 1e-9)) for r in trace.rows])
    n = int(bins.max()) + 1
    att = np.zeros((n, trace.K), dtype=np.int64)
    suc = np.zeros((n, trace.K), dtype=np.int64)
    for b, row in zip(bins, trace.rows):
        att[b, row.rate_id] += row.attempts
        suc[b, row.rate_id] += row.successes
    return att, suc, float(interval)


def trace_env(trace: TraceFile, interval_ms: float | None = None,
              interpolate: bool = False) -> StepProfile:
    """Piecewise-constant success profile: one empirical ratio per interval and rate.

    Intervals with no attempt at some rate are an error unless ``interpolate``
    is set, in which case the nearest earlier (else later) estimate is reused.
    """
    att, suc, interval = interval_counts(trace, interval_ms)
    values = np.full(att.shape, np.nan)
    seen = att > 0
    values[seen] = suc[seen] / att[seen]
    if not seen.all():
        if not interpolate:
            i, k = np.argwhere(~seen)[0]
            raise TraceError(f"interval {i} has no attempts at rate id {k}")
        for k in range(trace.K):
            col = values[:, k]
            idx = np.nonzero(~np.isnan(col))[0]
            if idx.size == 0:
                raise TraceError(f"rate id {k} is never attempted")
            prev = np.maximum.accumulate(np.where(~np.isnan(col), np.arange(col.size), -1))
            fill = np.where(prev >= 0, prev, idx[0])
            values[:, k] = col[fill]
    return StepProfile(values, interval / trace.slot_ms)


def trace_scenario(trace: TraceFile, interval_ms: float | None = None,
                   interpolate: bool = False, name: str = "trace") -> Scenario:
    return Scenario(name, trace.rates, trace_env(trace, interval_ms, interpolate))


# ---------------------------------------------------------------- synthetic capture

def synth_trace(scenario: Scenario | str, horizon: int, seed: int = 0,
                interval_ms: float = DEFAULT_INTERVAL_MS, batch: int = DEFAULT_BATCH,
                slot_ms: float = DEFAULT_SLOT_MS) -> TraceFile:
    """Probe every rate round-robin against a scenario and record the outcomes.

    Each interval holds ``batch`` rounds; a round sends one packet at every
    rate, all driven by a single uniform so outcomes respect the rate
    ordering. The channel state is the one at the interval's first slot.
    ``horizon`` is in slots.
    """
    if isinstance(scenario, str):
        scenario = preset(scenario)
    if horizon < 1 or batch < 1:
        raise ValueError("horizon and batch must be >= 1")
    rng, _ = spawn_rngs(seed)
    n_int = int(math.ceil(horizon * slot_ms / interval_ms))
    rows = []
    for i in range(n_int):
        start = i * interval_ms
        slot = int(math.floor(start / slot_ms + 1e-9)) + 1
        theta = scenario.theta_at(slot)
        u = rng.random(batch)
        wins = (u[:, None] < theta[None, :]).sum(axis=0)
        for k in range(scenario.K):
            rows.append(TraceRow(float(start), k, batch, int(wins[k])))
    return TraceFile(tuple(scenario.rates), float(slot_ms), tuple(rows), float(interval_ms))


# ---------------------------------------------------------------- validation

@dataclass
class ValidationReport:
    intervals: int
    correlated_pass: float
    unimodal_pass: float
    pooled_correlated: bool
    pooled_unimodal: bool
    sigma: float
    measured_sigma: float

    def lines(self) -> list[str]:
        return [
            f"intervals,{self.intervals}",
            f"correlated_pass_rate,{self.correlated_pass:.6f}",
            f"unimodal_pass_rate,{self.unimodal_pass:.6f}",
            f"pooled_correlated,{int(self.pooled_correlated)}",
            f"pooled_unimodal,{int(self.pooled_unimodal)}",
            f"sigma_per_slot,{self.sigma:.6g}",
            f"measured_sigma_per_slot,{self.measured_sigma:.6g}",
        ]


def validate_trace(trace: TraceFile, interval_ms: float | None = None,
                   interpolate: bool = False) -> ValidationReport:
    """Fraction of intervals whose empirical ratios are correlated / unimodal, plus drift."""
    profile = trace_env(trace, interval_ms, interpolate)
    vals = profile.values
    corr = np.array([check_correlated(v) for v in vals])
    uni = np.array([check_unimodal(trace.rates, v) for v in vals])
    pooled = trace.success_ratio()
    pooled_ok = not np.any(np.isnan(pooled))
    horizon = int(math.ceil(profile.n_intervals * profile.interval_slots))
    return ValidationReport(
        intervals=profile.n_intervals,
        correlated_pass=float(corr.mean()),
        unimodal_pass=float(uni.mean()),
        pooled_correlated=bool(pooled_ok and check_correlated(pooled)),
        pooled_unimodal=bool(pooled_ok and check_unimodal(trace.rates, pooled)),
        sigma=profile.sigma,
        measured_sigma=measure_lipschitz(profile, max(horizon, 1)),
    )


def shuffle_rates(trace: TraceFile, order: Sequence[int]) -> TraceFile:
    """Relabel rows so that rate id ``k`` carries the outcomes of ``order[k]``."""
    inv = {old: new for new, old in enumerate(order)}
    rows = tuple(TraceRow(r.start_ms, inv[r.rate_id], r.attempts, r.successes) for r in trace.rows)
    return TraceFile(trace.rates, trace.slot_ms, rows, trace.interval_ms, trace.modes)
