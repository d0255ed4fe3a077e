import math

import numpy as np
import pytest

from ratebandit.environment import DOT11G_RATES, STEEP, preset
from ratebandit.trace import (COLUMNS, TimestampOrderError, TraceError, TraceFile,
                              TraceFormatError, TraceRow, UnknownRateError, interval_counts,
                              parse_trace, read_trace, render_trace, shuffle_rates, synth_trace,
                              trace_env, trace_scenario, validate_trace, write_trace)

HEADER = "#rates=6,9,12,18,24,36,48,54;slot_ms=0.5"


def test_round_trip(tmp_path):
    t = synth_trace("steep", 2000, seed=1)
    text = render_trace(t)
    assert text.startswith(HEADER + ";interval_ms=10\n" + COLUMNS + "\n")
    assert parse_trace(text) == t
    path = tmp_path / "t.csv"
    write_trace(t, path)
    assert read_trace(path) == t
    assert path.read_bytes() == text.encode()
    labelled = TraceFile((1.0, 2.5), 0.5, (TraceRow(0.0, 1, 3, 2),), 5.0, ("SS", "DS"))
    assert parse_trace(render_trace(labelled)) == labelled


def test_empty_body_and_single_row():
    t = parse_trace(HEADER + "\n")
    assert t.rows == () and t.K == 8
    t = parse_trace(HEADER + "\n0,5,1000,700\n")
    assert t.success_ratio()[5] == pytest.approx(0.7)
    assert np.isnan(t.success_ratio()[0])
    t = parse_trace(HEADER + "\n" + COLUMNS + "\n0,5,1000,700\n")
    assert t.rows == (TraceRow(0.0, 5, 1000, 700),)


def test_per_packet_rows():
    t = parse_trace(HEADER + "\n0.0,1,1\n0.5,1,0\n0.5,2,1\n")
    assert [r.attempts for r in t.rows] == [1, 1, 1]
    assert t.totals()[1].tolist() == [0, 1, 1, 0, 0, 0, 0, 0]
    with pytest.raises(TraceFormatError):
        parse_trace(HEADER + "\n0.0,1,2\n")


def test_distinct_errors():
    with pytest.raises(TraceFormatError):
        parse_trace("")
    with pytest.raises(TraceFormatError):
        parse_trace("rates=1,2\n")
    with pytest.raises(TraceFormatError):
        parse_trace("#rates=2,1;slot_ms=0.5\n")
    with pytest.raises(TraceFormatError):
        parse_trace(HEADER + "\n0,1,x,2\n")
    with pytest.raises(TraceFormatError):
        parse_trace(HEADER + "\n0,1,5,6\n")
    with pytest.raises(UnknownRateError):
        parse_trace(HEADER + "\n0,8,5,2\n")
    with pytest.raises(TimestampOrderError):
        parse_trace(HEADER + "\n10,1,5,2\n0,1,5,2\n")
    assert len({TraceFormatError, UnknownRateError, TimestampOrderError}) == 3
    assert issubclass(UnknownRateError, TraceError)


def test_trace_env_constant_trace():
    rows = tuple(TraceRow(float(10 * i), k, 10, 10 - k) for i in range(5) for k in range(8))
    prof = trace_env(TraceFile(DOT11G_RATES, 0.5, rows, 10.0))
    assert prof.n_intervals == 5 and prof.interval_slots == 20
    assert prof.sigma == 0.0
    np.testing.assert_allclose(prof.theta_at(1), [1 - k / 10 for k in range(8)])
    np.testing.assert_allclose(prof.theta_at(100), prof.theta_at(1))


def test_trace_env_two_intervals_sigma():
    rows = (TraceRow(0.0, 0, 10, 9), TraceRow(0.0, 1, 10, 5),
            TraceRow(10.0, 0, 10, 6), TraceRow(10.0, 1, 10, 4))
    prof = trace_env(TraceFile((6.0, 9.0), 0.5, rows, 10.0))
    assert prof.sigma == pytest.approx(0.3 / 20)
    np.testing.assert_allclose(prof.theta_at(20), [0.9, 0.5])
    np.testing.assert_allclose(prof.theta_at(21), [0.6, 0.4])


def test_trace_env_missing_rate():
    rows = (TraceRow(0.0, 0, 10, 9), TraceRow(0.0, 1, 10, 5), TraceRow(10.0, 0, 10, 6))
    t = TraceFile((6.0, 9.0), 0.5, rows, 10.0)
    with pytest.raises(TraceError):
        trace_env(t)
    prof = trace_env(t, interpolate=True)
    np.testing.assert_allclose(prof.values, [[0.9, 0.5], [0.6, 0.5]])
    with pytest.raises(TraceError):
        trace_env(TraceFile((6.0,), 0.5, (TraceRow(0.0, 0, 1, 1),)))  # no interval known
    with pytest.raises(TraceError):
        trace_env(parse_trace(HEADER + "\n"), 10.0)


def test_three_hundred_seconds_at_ten_ms():
    rows = tuple(TraceRow(float(10 * i), k, 1, 1) for i in range(30_000) for k in range(8))
    t = TraceFile(DOT11G_RATES, 0.5, rows, 10.0)
    att, _, _ = interval_counts(t)
    assert att.shape == (30_000, 8)
    assert trace_env(t).n_intervals == 30_000


def test_synth_matches_preset_within_three_se():
    T = 200_000
    t = synth_trace("steep", T, seed=3)
    att, suc = t.totals()
    theta = np.asarray(STEEP)
    se = np.sqrt(theta * (1 - theta) / att)
    assert np.all(np.abs(suc / att - theta) <= 3 * se)
    prof = trace_env(t, interval_ms=T * 0.5)
    np.testing.assert_allclose(prof.theta_at(1), suc / att)


def test_synth_deterministic_and_coupled():
    a, b = synth_trace("lossy", 5000, seed=8), synth_trace("lossy", 5000, seed=8)
    assert render_trace(a) == render_trace(b)
    assert render_trace(a) != render_trace(synth_trace("lossy", 5000, seed=9))
    att, suc, _ = interval_counts(a)
    assert np.all(np.diff(suc, axis=1) <= 0)


def test_synth_morph_tracks_profile():
    sc = preset("morph")
    t = synth_trace(sc, 20_000, seed=0, interval_ms=1000.0, batch=400)
    prof = trace_env(t)
    for slot in (1, 10_001, 18_001):
        np.testing.assert_allclose(prof.theta_at(slot), sc.theta_at(slot), atol=0.1)
    assert trace_scenario(t).K == 8


def test_validate_synth_steep_passes():
    t = synth_trace("steep", 600_000, seed=0)
    rep = validate_trace(t, interval_ms=10_000.0)
    assert rep.intervals == 30
    assert rep.correlated_pass == 1.0 and rep.unimodal_pass == 1.0
    assert rep.pooled_correlated and rep.pooled_unimodal
    assert rep.sigma < 1e-4
    assert rep.lines()[0] == "intervals,30"


def test_validate_shuffled_fails():
    t = synth_trace("steep", 600_000, seed=0)
    bad = shuffle_rates(t, [0, 1, 2, 3, 7, 5, 6, 4])
    rep = validate_trace(bad, interval_ms=10_000.0)
    assert rep.unimodal_pass < 1.0 and not rep.pooled_unimodal
    assert rep.correlated_pass < 1.0
