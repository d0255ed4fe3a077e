import shutil
import subprocess
import sys

import pytest

from ratebandit.bounds import c_prime_theta, c_theta
from ratebandit.cli import main
from ratebandit.environment import DOT11G_RATES, LOSSY
from ratebandit.graph import graph_to_text, mimo_default_graph
from ratebandit.sim import read_csv_strict
from ratebandit.trace import parse_trace, shuffle_rates, synth_trace, write_trace


def _kv(text):
    out = {}
    for line in text.splitlines():
        key, _, val = line.partition(",")
        out.setdefault(key, val)
    return out


def test_run_writes_one_csv_per_policy(tmp_path, capsys):
    out = tmp_path / "o"
    rc = main(["run", "--scenario", "steep", "--policy", "ors,klrucb", "--policy", "samplerate",
               "--T", "2000", "--runs", "3", "--seed", "7", "--out", str(out), "--stride", "500"])
    assert rc == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["steep_klrucb.csv", "steep_ors.csv", "steep_samplerate.csv"]
    rows = read_csv_strict((out / "steep_ors.csv").read_text(), ["slot", "mean_regret", "stderr"])
    assert [r[0] for r in rows] == [500, 1000, 1500, 2000]
    assert len(capsys.readouterr().out.splitlines()) == 3


def test_run_is_byte_identical(tmp_path):
    args = ["run", "--scenario", "morph", "--policy", "sw-ors", "--tau", "2000", "--T", "5000",
            "--runs", "2", "--seed", "3", "--metric", "throughput", "--window", "500"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"])
    a = (tmp_path / "a" / "morph_sw-ors.csv").read_bytes()
    assert a == (tmp_path / "b" / "morph_sw-ors.csv").read_bytes()
    read_csv_strict(a.decode(), ["slot", "throughput"])


def test_run_packet_mode(tmp_path):
    assert main(["run", "--scenario", "steep", "--policy", "oracle", "--T", "1000", "--runs", "1",
                 "--mode", "packets", "--out", str(tmp_path)]) == 0
    rows = read_csv_strict((tmp_path / "steep_oracle.csv").read_text(),
                           ["slot", "mean_regret", "stderr"])
    assert abs(rows[-1][1]) < 1e-6


def test_run_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--scenario", "steep", "--policy", "minstrel", "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "--scenario", "steep", "--policy", "ors", "--T", "0"])
    assert main(["run", "--scenario", "steep", "--policy", "sw-ors", "--T", "10",
                 "--out", str(tmp_path)]) == 1  # missing --tau
    assert main(["run", "--scenario", "nowhere", "--policy", "ors", "--T", "10",
                 "--out", str(tmp_path)]) == 1


def test_run_on_trace_and_graph(tmp_path):
    trace = tmp_path / "tr.csv"
    write_trace(synth_trace("lossy", 4000, seed=0, interval_ms=500.0, batch=50), trace)
    assert main(["run", "--scenario", str(trace), "--policy", "ors", "--T", "4000", "--runs", "1",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "tr_ors.csv").exists()
    gpath = tmp_path / "g.txt"
    gpath.write_text(graph_to_text(mimo_default_graph()))
    assert main(["run", "--scenario", "steep", "--graph", str(gpath), "--policy", "gors",
                 "--T", "10", "--out", str(tmp_path)]) == 1  # 16 vertices vs 8 rates


def test_bounds_command(capsys):
    assert main(["bounds", "--scenario", "steep"]) == 0
    kv = _kv(capsys.readouterr().out)
    assert kv["k_star"] == "4" and kv["N_kstar"] == "5" and kv["k0"] == "4"
    assert float(kv["c"]) == pytest.approx(c_theta(DOT11G_RATES, (0.99, 0.98, 0.96, 0.93, 0.9,
                                                                  0.1, 0.06, 0.04)), rel=1e-9)
    assert float(kv["c"]) == pytest.approx(32.69, abs=0.01)
    assert float(kv["c_prime"]) == pytest.approx(135.7, abs=0.05)
    assert main(["bounds", "--scenario", "lossy"]) == 0
    kv = _kv(capsys.readouterr().out)
    assert float(kv["c"]) == pytest.approx(c_theta(DOT11G_RATES, LOSSY), rel=1e-9)
    assert float(kv["c_prime"]) == pytest.approx(c_prime_theta(DOT11G_RATES, LOSSY), rel=1e-9)
    assert main(["bounds", "--rates", "6", "--theta", "0.7"]) == 0
    kv = _kv(capsys.readouterr().out)
    assert kv["c"] == "0" and kv["c_prime"] == "0"


def test_bounds_reports_violations(capsys):
    assert main(["bounds", "--rates", "1,2,3", "--theta", "0.9,0.95,0.5"]) == 0
    out = capsys.readouterr().out
    assert "violation," in out and "c,nan" in out
    assert main(["bounds", "--scenario", "morph"]) == 1


def test_validate_command(tmp_path, capsys):
    t = synth_trace("steep", 600_000, seed=0)
    good, bad, empty = tmp_path / "good.csv", tmp_path / "bad.csv", tmp_path / "empty.csv"
    write_trace(t, good)
    write_trace(shuffle_rates(t, [0, 1, 2, 3, 7, 5, 6, 4]), bad)
    empty.write_text("#rates=6,9;slot_ms=0.5\n")
    assert main(["validate", str(good), "--interval-ms", "10000"]) == 0
    kv = _kv(capsys.readouterr().out)
    assert float(kv["unimodal_pass_rate"]) == 1.0 and float(kv["correlated_pass_rate"]) == 1.0
    assert main(["validate", str(bad), "--interval-ms", "10000"]) == 0
    assert float(_kv(capsys.readouterr().out)["unimodal_pass_rate"]) < 1.0
    assert main(["validate", str(empty)]) == 1
    broken = tmp_path / "broken.csv"
    broken.write_text("#rates=6,9;slot_ms=0.5\n0,4,1,1\n")
    assert main(["validate", str(broken)]) == 1


def test_gen_trace_command(tmp_path, capsys):
    assert main(["gen-trace", "--scenario", "gradual", "--T", "400", "--seed", "2"]) == 0
    text = capsys.readouterr().out
    t = parse_trace(text)
    assert t.interval_ms == 10.0 and len(t.rows) == 20 * 8
    out = tmp_path / "t.csv"
    assert main(["gen-trace", "--scenario", "gradual", "--T", "400", "--seed", "2",
                 "--out", str(out)]) == 0
    assert out.read_text() == text


def test_graph_check_command(tmp_path, capsys):
    assert main(["graph-check"]) == 0
    kv = _kv(capsys.readouterr().out)
    assert kv["vertices"] == "16" and kv["gamma"] == "3" and kv["connected"] == "1"
    path = tmp_path / "line.txt"
    path.write_text("vertex (SS, 6)\nvertex (SS, 9)\nvertex (SS, 12)\n"
                    "edge (SS, 6) (SS, 9)\nedge (SS, 9) (SS, 12)\n")
    assert main(["graph-check", "--graph", str(path), "--theta", "0.9,0.8,0.2"]) == 0
    kv = _kv(capsys.readouterr().out)
    assert kv["unimodal"] == "1" and float(kv["c_graph"]) == pytest.approx(
        c_theta((6, 9, 12), (0.9, 0.8, 0.2)), rel=1e-9)
    assert main(["graph-check", "--graph", str(path), "--theta", "0.9,0.8"]) == 1


def test_console_script_subprocess(tmp_path):
    exe = shutil.which("ratebandit")
    cmd = [exe] if exe else [sys.executable, "-m", "ratebandit.cli"]
    outs = []
    for name in ("a", "b"):
        res = subprocess.run(cmd + ["run", "--scenario", "steep", "--policy", "klrucb", "--T",
                                    "3000", "--runs", "2", "--seed", "5", "--out",
                                    str(tmp_path / name)], capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        outs.append((tmp_path / name / "steep_klrucb.csv").read_bytes())
    assert outs[0] == outs[1]
    res = subprocess.run(cmd + ["run", "--scenario", "steep", "--policy", "nope"],
                         capture_output=True, text=True)
    assert res.returncode == 2
