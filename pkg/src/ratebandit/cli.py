"""Command-line front end: ``ratebandit {run,bounds,validate,gen-trace,graph-check}``."""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import bounds as bnd
from .environment import PRESET_NAMES, Scenario, StationaryProfile, preset, scenario_from_text
from .graph import TieError, check_graph_unimodal, graph_from_text, mimo_default_graph
from .policies import PolicyConfig, canonical_name
from .sim import DEFAULT_RUNS, PACKET_BITS, monte_carlo, regret_csv, throughput_csv
from .trace import (TraceError, parse_trace, read_trace, render_trace, synth_trace,
                    trace_scenario, validate_trace)


class CliError(Exception):
    pass


def _policy_name(text: str) -> str:
    try:
        return canonical_name(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a value >= 1, got {v}")
    return v


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def load_scenario(source: str, horizon: int | None = None, graph_path: str | None = None,
                  interval_ms: float | None = None) -> Scenario:
    """A preset name, a trace CSV, or a ``key=value`` scenario config file."""
    if source.lower() in PRESET_NAMES:
        sc = preset(source, horizon) if source.lower() == "morph" and horizon else preset(source)
    else:
        if not os.path.exists(source):
            raise CliError(f"scenario {source!r} is neither a preset ({', '.join(PRESET_NAMES)}) "
                           "nor an existing file")
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
        if text.lstrip().startswith("#rates="):
            sc = trace_scenario(parse_trace(text), interval_ms,
                                name=os.path.splitext(os.path.basename(source))[0])
        else:
            sc = scenario_from_text(text)
    if graph_path:
        with open(graph_path, encoding="utf-8") as fh:
            graph = graph_from_text(fh.read())
        if len(graph) != sc.K:
            raise CliError(f"graph has {len(graph)} vertices but the scenario has {sc.K} decisions")
        sc = Scenario(sc.name, sc.rates, sc.profile, graph)
    return sc


# ---------------------------------------------------------------- run

def cmd_run(args) -> int:
    sc = load_scenario(args.scenario, args.T, args.graph, args.interval_ms)
    os.makedirs(args.out, exist_ok=True)
    names = [p for group in args.policy for p in group]
    for name in names:
        cfg = PolicyConfig(name, c=args.c, tau=args.tau, divisor=args.divisor,
                           window=args.sr_window)
        res = monte_carlo(cfg, sc, args.T, args.runs, args.seed, jobs=args.jobs,
                          coupled=not args.independent, realized=args.realized, mode=args.mode,
                          packet_bits=args.packet_bits)
        if args.metric == "throughput":
            text = throughput_csv(res, args.window, args.stride)
        else:
            text = regret_csv(res, args.stride)
        path = os.path.join(args.out, f"{sc.name}_{cfg.name}.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(path)
    return 0


# ---------------------------------------------------------------- bounds

def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.10g}"


def cmd_bounds(args) -> int:
    if args.theta is not None:
        rates = args.rates if args.rates is not None else [float(k + 1) for k in range(len(args.theta))]
        if len(rates) != len(args.theta):
            raise CliError("--rates and --theta must have equal lengths")
        sc = Scenario("custom", tuple(rates), StationaryProfile(tuple(args.theta)))
    else:
        sc = load_scenario(args.scenario)
    if not sc.profile.stationary:
        raise CliError("bounds need a stationary scenario")
    theta = sc.theta_at(1)
    rep = bnd.bounds_report(sc.rates, theta)
    out = [
        f"scenario,{sc.name}",
        f"k_star,{rep.k_star}",
        f"k_star_rate,{sc.rates[rep.k_star]:g}",
        f"N_kstar,{' '.join(str(k) for k in rep.N_kstar)}",
        f"k0,{rep.k0}",
        f"c,{_fmt(rep.c)}",
        f"c_prime,{_fmt(rep.c_prime)}",
    ]
    for v in rep.violations:
        out.append(f"violation,{v}")
    out.append("term,constant,k,rate,gap,divergence,value")
    for label, terms in (("c", rep.c_terms), ("c_prime", rep.c_prime_terms)):
        for t in terms:
            out.append(f"term,{label},{t.k},{sc.rates[t.k]:g},{_fmt(t.gap)},{_fmt(t.divergence)},"
                       f"{_fmt(t.value)}")
    print("\n".join(out))
    return 0


# ---------------------------------------------------------------- validate / gen-trace

def cmd_validate(args) -> int:
    trace = read_trace(args.trace)
    if not trace.rows:
        raise CliError("trace is empty")
    rep = validate_trace(trace, args.interval_ms, args.interpolate)
    print("\n".join(rep.lines()))
    return 0


def cmd_gen_trace(args) -> int:
    sc = load_scenario(args.scenario, args.T)
    trace = synth_trace(sc, args.T, args.seed, interval_ms=args.interval_ms, batch=args.batch)
    text = render_trace(trace)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return 0


# ---------------------------------------------------------------- graph-check

def cmd_graph_check(args) -> int:
    if args.graph:
        with open(args.graph, encoding="utf-8") as fh:
            graph = graph_from_text(fh.read())
    else:
        graph = mimo_default_graph()
    out = [
        f"vertices,{len(graph)}",
        f"edges,{len(graph.edges)}",
        f"gamma,{graph.gamma}",
        f"connected,{int(graph.is_connected())}",
    ]
    for i, d in enumerate(graph.vertices):
        nb = " ".join(str(j) for j in graph.neighbor_ids(i))
        out.append(f"vertex,{i},{graph.mode_label(d.mode)},{d.rate:g},{graph.degree(i)},{nb}")
    if args.theta is not None:
        if len(args.theta) != len(graph):
            raise CliError(f"--theta needs {len(graph)} values")
        mu = np.asarray(graph.rates) * np.asarray(args.theta)
        try:
            ok = check_graph_unimodal(graph, mu)
            out.append(f"unimodal,{int(ok)}")
            if ok:
                out.append(f"c_graph,{_fmt(bnd.c_graph(graph, None, args.theta))}")
        except TieError:
            out.append("unimodal,tie")
        except bnd.StructureError as exc:
            out.append(f"violation,{exc}")
    print("\n".join(out))
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ratebandit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="Monte-Carlo regret or throughput curves, one CSV per policy")
    r.add_argument("--scenario", required=True, help="preset name, trace CSV or scenario config")
    r.add_argument("--policy", required=True, action="append",
                   type=lambda s: [_policy_name(x) for x in s.split(",")],
                   help="policy name; repeat or comma-separate for several")
    r.add_argument("--T", "--horizon", dest="T", type=_positive_int, default=100_000,
                   help="horizon in slots (wall time in packet mode)")
    r.add_argument("--runs", type=_positive_int, default=DEFAULT_RUNS)
    r.add_argument("--seed", type=int, default=0, help="seed of the first run")
    r.add_argument("--out", default=".", help="output directory")
    r.add_argument("--tau", type=_positive_int, default=None, help="window for sw-* policies")
    r.add_argument("--c", type=float, default=3.0, help="exploration constant")
    r.add_argument("--divisor", type=_positive_int, default=None,
                   help="forced-leader divisor override")
    r.add_argument("--sr-window", type=_positive_int, default=500, help="SampleRate window (packets)")
    r.add_argument("--mode", choices=("slots", "packets"), default="slots")
    r.add_argument("--packet-bits", type=float, default=PACKET_BITS)
    r.add_argument("--metric", choices=("regret", "throughput"), default="regret")
    r.add_argument("--window", type=_positive_int, default=1000,
                   help="trailing window (slots) for the throughput metric")
    r.add_argument("--stride", type=_positive_int, default=100, help="CSV row spacing in slots")
    r.add_argument("--graph", default=None, help="decision graph config for gors / sw-gors")
    r.add_argument("--interval-ms", type=float, default=None, help="re-binning for trace scenarios")
    r.add_argument("--independent", action="store_true", help="independent draws per rate")
    r.add_argument("--realized", action="store_true", help="realized instead of pseudo-regret")
    r.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bounds", help="print lower-bound constants")
    b.add_argument("--scenario", default="steep")
    b.add_argument("--rates", type=_floats, default=None)
    b.add_argument("--theta", type=_floats, default=None, help="custom stationary instance")
    b.set_defaults(func=cmd_bounds)

    v = sub.add_parser("validate", help="check a trace against the structural assumptions")
    v.add_argument("trace")
    v.add_argument("--interval-ms", type=float, default=None, help="smoothing interval")
    v.add_argument("--interpolate", action="store_true")
    v.set_defaults(func=cmd_validate)

    g = sub.add_parser("gen-trace", help="synthesize a round-robin probing trace")
    g.add_argument("--scenario", default="steep")
    g.add_argument("--T", "--horizon", dest="T", type=_positive_int, default=20_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--interval-ms", type=float, default=10.0)
    g.add_argument("--batch", type=_positive_int, default=8)
    g.add_argument("--out", default="-")
    g.set_defaults(func=cmd_gen_trace)

    c = sub.add_parser("graph-check", help="inspect a decision graph")
    c.add_argument("--graph", default=None, help="graph config (default: two-mode MIMO graph)")
    c.add_argument("--theta", type=_floats, default=None, help="success probabilities per vertex")
    c.set_defaults(func=cmd_graph_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, TraceError, ValueError, OSError) as exc:
        print(f"ratebandit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
