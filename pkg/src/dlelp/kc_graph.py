"""Dual knowledge-concept structure: prerequisite DAG plus weighted similarity graph."""
from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import networkx as nx
import numpy as np

from .errors import GraphFormatError, InvalidInputError


@dataclass(frozen=True)
class Concept:
    id: int
    name: str
    description: str = ""


@dataclass(frozen=True)
class ConceptGraph:
    """Immutable KC graph.

    ``prereq_edges`` holds ``(src, dst)`` pairs meaning *src is a prerequisite of dst*.
    ``sim_edges`` maps an unordered pair, stored as ``(min, max)``, to a weight in (0, 1].
    Construction does not validate; use :func:`validate_graph`.
    """

    concepts: tuple[Concept, ...]
    prereq_edges: frozenset[tuple[int, int]] = frozenset()
    sim_edges: Mapping[tuple[int, int], float] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        names: Iterable[str],
        prereqs: Iterable[tuple[int, int]] = (),
        sims: Iterable[tuple[int, int, float]] = (),
        descriptions: Iterable[str] | None = None,
    ) -> "ConceptGraph":
        names = list(names)
        descs = list(descriptions) if descriptions is not None else [""] * len(names)
        concepts = tuple(Concept(i, n, d) for i, (n, d) in enumerate(zip(names, descs)))
        sim = {}
        for a, b, w in sims:
            sim[(min(a, b), max(a, b))] = float(w)
        return cls(concepts, frozenset((int(a), int(b)) for a, b in prereqs), sim)

    def __hash__(self):
        return hash((self.concepts, self.prereq_edges, tuple(sorted(self.sim_edges.items()))))

    @property
    def n(self) -> int:
        return len(self.concepts)

    def names(self) -> list[str]:
        return [c.name for c in self.concepts]

    @cached_property
    def parents(self) -> tuple[tuple[int, ...], ...]:
        out = [[] for _ in range(self.n)]
        for a, b in self.prereq_edges:
            if 0 <= b < self.n:
                out[b].append(a)
        return tuple(tuple(sorted(p)) for p in out)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        out = [[] for _ in range(self.n)]
        for a, b in self.prereq_edges:
            if 0 <= a < self.n:
                out[a].append(b)
        return tuple(tuple(sorted(c)) for c in out)

    @cached_property
    def _sim_adjacency(self) -> tuple[tuple[tuple[int, float], ...], ...]:
        out = [[] for _ in range(self.n)]
        for (a, b), w in self.sim_edges.items():
            if a == b:
                continue
            out[a].append((b, w))
            out[b].append((a, w))
        return tuple(tuple(sorted(adj, key=lambda t: (-t[1], t[0]))) for adj in out)

    def check_id(self, kc: int) -> int:
        if not isinstance(kc, (int, np.integer)) or not 0 <= kc < self.n:
            raise InvalidInputError(f"unknown concept id {kc!r} (graph has {self.n} concepts)")
        return int(kc)

    def ancestors(self, kc: int) -> set[int]:
        seen: set[int] = set()
        stack = list(self.parents[kc])
        while stack:
            v = stack.pop()
            if v not in seen:
                seen.add(v)
                stack.extend(self.parents[v])
        return seen

    def topological_order(self) -> list[int]:
        """Kahn's algorithm with smallest-id-first tie breaking."""
        indeg = [len(p) for p in self.parents]
        heap = [i for i, d in enumerate(indeg) if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            v = heapq.heappop(heap)
            order.append(v)
            for c in self.children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        return order

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "concepts": [{"id": c.id, "name": c.name, "description": c.description} for c in self.concepts],
            "prerequisites": [{"from": a, "to": b} for a, b in sorted(self.prereq_edges)],
            "similarities": [{"a": a, "b": b, "weight": w} for (a, b), w in sorted(self.sim_edges.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ConceptGraph":
        try:
            raw = sorted(data["concepts"], key=lambda c: c["id"])
            ids = [c["id"] for c in raw]
            if ids != list(range(len(raw))):
                raise GraphFormatError("concept ids must be dense 0..N-1")
            concepts = tuple(Concept(int(c["id"]), str(c["name"]), str(c.get("description", ""))) for c in raw)
            prereqs = frozenset((int(e["from"]), int(e["to"])) for e in data.get("prerequisites", []))
            sims = {}
            for e in data.get("similarities", []):
                a, b = int(e["a"]), int(e["b"])
                sims[(min(a, b), max(a, b))] = float(e.get("weight", 0.5))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, GraphFormatError):
                raise
            raise GraphFormatError(f"malformed graph document: {exc}") from exc
        return cls(concepts, prereqs, sims)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ConceptGraph":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise GraphFormatError(f"cannot read graph file {path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True)
class GoalSet:
    ids: frozenset[int]
    n: int

    def __post_init__(self):
        if not self.ids:
            raise InvalidInputError("goal set must be non-empty")
        if any(not 0 <= g < self.n for g in self.ids):
            raise InvalidInputError(f"goal ids {sorted(self.ids)} out of range for {self.n} concepts")

    @classmethod
    def of(cls, ids: Iterable[int], n: int) -> "GoalSet":
        return cls(frozenset(int(i) for i in ids), n)

    @property
    def one_hot(self) -> np.ndarray:
        v = np.zeros(self.n)
        v[sorted(self.ids)] = 1.0
        return v

    def sorted_ids(self) -> list[int]:
        return sorted(self.ids)


@dataclass(frozen=True)
class Violation:
    kind: str  # "cycle" | "self_similarity" | "bad_endpoint" | "bad_weight"
    nodes: tuple[int, ...]
    detail: str = ""


def validate_graph(graph: ConceptGraph) -> list[Violation]:
    report = []
    n = graph.n
    for a, b in sorted(graph.prereq_edges):
        if not (0 <= a < n and 0 <= b < n):
            report.append(Violation("bad_endpoint", (a, b), "prerequisite endpoint out of range"))
    for (a, b), w in sorted(graph.sim_edges.items()):
        if not (0 <= a < n and 0 <= b < n):
            report.append(Violation("bad_endpoint", (a, b), "similarity endpoint out of range"))
        elif a == b:
            report.append(Violation("self_similarity", (a,), "similarity self-pair"))
        if not 0.0 < w <= 1.0:
            report.append(Violation("bad_weight", (a, b), f"similarity weight {w} outside (0, 1]"))

    g = nx.DiGraph()
    g.add_edges_from(e for e in graph.prereq_edges if 0 <= e[0] < n and 0 <= e[1] < n)
    for scc in sorted(nx.strongly_connected_components(g), key=min):
        if len(scc) == 1:
            (v,) = scc
            if not g.has_edge(v, v):
                continue
            report.append(Violation("cycle", (v,), "prerequisite self-loop"))
            continue
        cycle = [u for u, _ in nx.find_cycle(g.subgraph(scc), source=min(scc))]
        k = cycle.index(min(cycle))
        report.append(Violation("cycle", tuple(cycle[k:] + cycle[:k]), "prerequisite cycle"))
    return report


def is_mastered(value: float, threshold: float) -> bool:
    # strict: a KC counts as mastered only above the threshold
    return value > threshold


def find_initial_node(graph: ConceptGraph, goal: int, mastery, threshold: float = 0.5) -> int:
    """Trace back from ``goal`` along unmastered prerequisites.

    Stops at the first node whose direct prerequisites are all mastered; otherwise
    descends into the unmastered parent heading the longest unmastered chain
    (ties to the smaller id).
    """
    goal = graph.check_id(goal)
    if not 0.0 < threshold < 1.0:
        raise InvalidInputError("threshold must lie in (0, 1)")
    mastery = np.asarray(mastery, dtype=float)
    chain: dict[int, int] = {}

    def chain_len(v: int) -> int:
        # iterative post-order to avoid recursion limits on deep graphs
        stack = [v]
        while stack:
            u = stack[-1]
            if u in chain:
                stack.pop()
                continue
            pending = [p for p in graph.parents[u] if not is_mastered(mastery[p], threshold) and p not in chain]
            if pending:
                stack.extend(pending)
                continue
            best = max((chain[p] for p in graph.parents[u] if not is_mastered(mastery[p], threshold)), default=0)
            chain[u] = best + 1
            stack.pop()
        return chain[v]

    cur = goal
    while True:
        open_parents = [p for p in graph.parents[cur] if not is_mastered(mastery[p], threshold)]
        if not open_parents:
            return cur
        cur = max(open_parents, key=lambda p: (chain_len(p), -p))


def _distances_to(graph: ConceptGraph, goal: int) -> dict[int, int]:
    dist = {goal: 0}
    queue = deque([goal])
    while queue:
        v = queue.popleft()
        for p in graph.parents[v]:
            if p not in dist:
                dist[p] = dist[v] + 1
                queue.append(p)
    return dist


def candidate_action_space(graph: ConceptGraph, initial: int, goal: int, slack: int = 0) -> set[int]:
    """Concepts on any initial->goal prerequisite path of length <= shortest + slack.

    A* from ``initial`` with the exact reverse-BFS distance as heuristic; a node is kept
    when its best forward cost plus remaining distance fits the bound.
    """
    initial, goal = graph.check_id(initial), graph.check_id(goal)
    if slack < 0:
        raise InvalidInputError("slack must be >= 0")
    h = _distances_to(graph, goal)
    if initial not in h:
        return {initial, goal}
    bound = h[initial] + slack
    g = {initial: 0}
    frontier = [(h[initial], 0, initial)]
    while frontier:
        f, cost, v = heapq.heappop(frontier)
        if cost > g[v] or f > bound:
            continue
        for c in graph.children[v]:
            if c not in h:
                continue
            nc = cost + 1
            if nc + h[c] <= bound and nc < g.get(c, bound + 1):
                g[c] = nc
                heapq.heappush(frontier, (nc + h[c], nc, c))
    return {v for v, cost in g.items() if cost + h[v] <= bound}


def similar_neighbors(graph: ConceptGraph, kc: int) -> list[tuple[int, float]]:
    return list(graph._sim_adjacency[graph.check_id(kc)])
