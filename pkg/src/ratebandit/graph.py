"""Decision graphs for (mode, rate) selection and graphical unimodality."""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SS_RATES = (13.5, 27.0, 40.5, 54.0, 81.0, 108.0, 121.5, 135.0)
DS_RATES = (27.0, 54.0, 81.0, 108.0, 162.0, 216.0, 243.0, 270.0)


class TieError(ValueError):
    """The reward vector has several maximizers."""


@dataclass(frozen=True)
class Decision:
    mode: int
    rate_index: int
    rate: float


@dataclass(frozen=True)
class DecisionGraph:
    """Undirected graph over decisions; vertex ids are positions in ``vertices``."""

    vertices: tuple[Decision, ...]
    edges: frozenset
    mode_names: tuple[str, ...] = ()

    def __post_init__(self):
        verts = tuple(self.vertices)
        if not verts:
            raise ValueError("graph has no vertices")
        n = len(verts)
        norm = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop at vertex {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a}, {b}) references an unknown vertex")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", frozenset(norm))
        self._check_modes()
        adj = [[] for _ in range(n)]
        for a, b in sorted(norm):
            adj[a].append(b)
            adj[b].append(a)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(x)) for x in adj))

    def _check_modes(self):
        by_mode: dict[int, list[tuple[int, int, float]]] = {}
        for i, d in enumerate(self.vertices):
            by_mode.setdefault(d.mode, []).append((d.rate_index, i, d.rate))
        for mode, items in by_mode.items():
            items.sort()
            idx = [ri for ri, _, _ in items]
            if idx != list(range(len(items))):
                raise ValueError(f"mode {mode}: rate indexes must be 0..n-1, got {idx}")
            rates = [r for _, _, r in items]
            if any(a >= b for a, b in zip(rates, rates[1:])):
                raise ValueError(f"mode {mode}: rates must increase with rate_index")
            for (_, i, _), (_, j, _) in zip(items, items[1:]):
                if (min(i, j), max(i, j)) not in self.edges:
                    raise ValueError(f"mode {mode}: consecutive rates {i} and {j} are not linked")

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def gamma(self) -> int:
        return max(len(a) for a in self._adj)

    @property
    def rates(self) -> tuple[float, ...]:
        return tuple(d.rate for d in self.vertices)

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def neighbor_ids(self, i: int) -> tuple[int, ...]:
        """Sorted ids adjacent to vertex ``i`` (``i`` itself excluded)."""
        if not 0 <= i < len(self.vertices):
            raise KeyError(f"unknown vertex id {i}")
        return self._adj[i]

    def index_of(self, d: Decision) -> int:
        try:
            return self.vertices.index(d)
        except ValueError:
            raise KeyError(f"{d} is not a vertex of this graph") from None

    def is_connected(self) -> bool:
        seen = {0}
        todo = deque([0])
        while todo:
            v = todo.popleft()
            for w in self._adj[v]:
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return len(seen) == len(self.vertices)

    def mode_label(self, mode: int) -> str:
        if 0 < mode <= len(self.mode_names):
            return self.mode_names[mode - 1]
        return str(mode)


def neighbors(graph: DecisionGraph, d: Decision | int) -> set[Decision]:
    """Decisions adjacent to ``d``, excluding ``d``."""
    i = d if isinstance(d, (int, np.integer)) else graph.index_of(d)
    return {graph.vertices[j] for j in graph.neighbor_ids(int(i))}


def line_graph(K: int, rates: Sequence[float] | None = None) -> DecisionGraph:
    """Single-mode path ``1 - 2 - ... - K``."""
    if K < 1:
        raise ValueError("line graph needs K >= 1")
    if rates is None:
        rates = [float(k + 1) for k in range(K)]
    if len(rates) != K:
        raise ValueError("need one rate per vertex")
    verts = tuple(Decision(1, k, float(r)) for k, r in enumerate(rates))
    return DecisionGraph(verts, frozenset((k, k + 1) for k in range(K - 1)))


def mimo_default_graph(ss_rates: Sequence[float] = SS_RATES,
                       ds_rates: Sequence[float] = DS_RATES) -> DecisionGraph:
    """Two-mode (single stream, double stream) graph.

    Each mode is a rate line. Cross-mode links exist only where neither mode
    dominates: the upper half of the single-stream rates connects one-to-one
    to the lower half of the double-stream rates. This is a reconstruction;
    pass a graph config to use another topology.
    """
    n_ss, n_ds = len(ss_rates), len(ds_rates)
    verts = [Decision(1, k, float(r)) for k, r in enumerate(ss_rates)]
    verts += [Decision(2, k, float(r)) for k, r in enumerate(ds_rates)]
    edges = {(k, k + 1) for k in range(n_ss - 1)}
    edges |= {(n_ss + k, n_ss + k + 1) for k in range(n_ds - 1)}
    half = n_ss // 2
    for k in range(half, n_ss):
        if k - half < n_ds:
            edges.add((k, n_ss + k - half))
    return DecisionGraph(tuple(verts), frozenset(edges), ("SS", "DS"))


def check_graph_unimodal(graph: DecisionGraph, mu: Sequence[float]) -> bool:
    """True iff every non-optimal vertex has a neighbor with strictly larger reward.

    With a unique maximizer this is equivalent to the existence of a strictly
    ascending path from every vertex to the optimum.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (len(graph),):
        raise ValueError("need one reward per vertex")
    best = int(np.argmax(mu))
    if np.count_nonzero(mu == mu[best]) > 1:
        raise TieError("reward vector has a tied maximum")
    for v in range(len(graph)):
        if v == best:
            continue
        if not any(mu[w] > mu[v] for w in graph.neighbor_ids(v)):
            return False
    return True


def check_correlated_modes(graph: DecisionGraph, theta: Sequence[float]) -> bool:
    """Within every mode, success probability is non-increasing in the rate."""
    theta = np.asarray(theta, dtype=float)
    by_mode: dict[int, list[tuple[int, float]]] = {}
    for d, t in zip(graph.vertices, theta):
        by_mode.setdefault(d.mode, []).append((d.rate_index, t))
    for items in by_mode.values():
        items.sort()
        ts = [t for _, t in items]
        if any(b > a for a, b in zip(ts, ts[1:])):
            return False
    return True


# ---------------------------------------------------------------- config I/O

_PAIR = re.compile(r"\(\s*([^,()\s]+)\s*,\s*([^,()\s]+)\s*\)")


def graph_to_text(graph: DecisionGraph) -> str:
    """Render as ``vertex (mode, rate)`` and ``edge (mode, rate) (mode, rate)`` lines."""
    def label(d: Decision) -> str:
        return f"({graph.mode_label(d.mode)}, {d.rate:g})"

    lines = [f"vertex {label(d)}" for d in graph.vertices]
    for a, b in sorted(graph.edges):
        lines.append(f"edge {label(graph.vertices[a])} {label(graph.vertices[b])}")
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> DecisionGraph:
    """Parse the format written by :func:`graph_to_text`.

    Modes are numbered by first appearance; within a mode, rate indexes follow
    increasing rate. ``#`` starts a comment.
    """
    raw_vertices: list[tuple[str, float]] = []
    raw_edges: list[tuple[tuple[str, float], tuple[str, float]]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        kind, _, rest = line.partition(" ")
        pairs = [(m, float(r)) for m, r in _PAIR.findall(rest)]
        if kind == "vertex" and len(pairs) == 1:
            raw_vertices.append(pairs[0])
        elif kind == "edge" and len(pairs) == 2:
            raw_edges.append((pairs[0], pairs[1]))
        else:
            raise ValueError(f"line {lineno}: cannot parse {line!r}")
    if len(set(raw_vertices)) != len(raw_vertices):
        raise ValueError("duplicate vertex")
    modes: list[str] = []
    for m, _ in raw_vertices:
        if m not in modes:
            modes.append(m)
    rank = {}
    for m in modes:
        rs = sorted(r for mm, r in raw_vertices if mm == m)
        for i, r in enumerate(rs):
            rank[(m, r)] = i
    verts = tuple(Decision(modes.index(m) + 1, rank[(m, r)], r) for m, r in raw_vertices)
    ids = {v: i for i, v in enumerate(raw_vertices)}
    edges = set()
    for a, b in raw_edges:
        if a not in ids or b not in ids:
            raise ValueError(f"edge {a} - {b} references an undeclared vertex")
        edges.add((ids[a], ids[b]))
    return DecisionGraph(verts, frozenset(edges), tuple(modes))


def candidate_lists(graph: DecisionGraph) -> list[tuple[int, ...]]:
    """For every vertex, the sorted ids of its closed neighborhood."""
    return [tuple(sorted(set(graph.neighbor_ids(i)) | {i})) for i in range(len(graph))]


def brute_force_ascending(graph: DecisionGraph, mu: Iterable[float]) -> bool:
    """Exhaustive search for a strictly ascending path from every vertex to the optimum."""
    mu = np.asarray(list(mu), dtype=float)
    best = int(np.argmax(mu))
    for start in range(len(graph)):
        seen = {start}
        todo = deque([start])
        found = start == best
        while todo and not found:
            v = todo.popleft()
            for w in graph.neighbor_ids(v):
                if mu[w] > mu[v] and w not in seen:
                    if w == best:
                        found = True
                        break
                    seen.add(w)
                    todo.append(w)
        if not found:
            return False
    return True
