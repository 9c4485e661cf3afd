"""Explanation refinement and chunk -> extract -> summarize -> assemble graph pipeline."""
from __future__ import annotations

import logging
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx

from ..errors import BackendError, ConfigError, InvalidInputError, MalformedResponseError
from ..kc_graph import ConceptGraph, validate_graph
from . import prompts
from .backends import TextModelBackend

log = logging.getLogger(__name__)

DEFAULT_SIM_WEIGHT = 0.5


@dataclass
class Explanation:
    kc_name: str
    text: str
    iterations_used: int
    approved: bool


def _call(backend: TextModelBackend, prompt: str, allow_empty: bool = False) -> str:
    try:
        out = backend.complete(prompt)
    except (BackendError, MalformedResponseError):
        raise
    except Exception as exc:  # transport errors from arbitrary backends
        raise BackendError(f"backend call failed: {exc}", attempts=getattr(exc, "attempts", 1)) from exc
    if out is None:
        out = ""
    if not allow_empty and not str(out).strip():
        raise MalformedResponseError("backend returned an empty completion")
    return str(out).strip()


def generate_explanation(kc_name: str, backend: TextModelBackend, max_iters: int = 3) -> Explanation:
    """Generate, critique and refine until the evaluator answers APPROVED or the cap is hit."""
    if max_iters < 1:
        raise ConfigError("max_iters must be >= 1")
    analysis = _call(backend, prompts.explain_prompt(kc_name))
    for it in range(1, max_iters + 1):
        verdict = _call(backend, prompts.evaluate_prompt(kc_name, analysis, it))
        if verdict.upper().startswith(prompts.APPROVED):
            return Explanation(kc_name, analysis, it, True)
        if it == max_iters:
            break
        analysis = _call(backend, prompts.refine_prompt(kc_name, analysis, verdict, it))
    return Explanation(kc_name, analysis, max_iters, False)


def chunk_text(corpus: str, chunk_size: int, overlap: int = 0) -> list[str]:
    """Fixed-stride character windows; chunk i starts at ``i * (chunk_size - overlap)``.

    Windows are emitted for every start inside the corpus, so the tail may repeat
    text already covered by the previous window.

    Python strings index by code point, so no split lands inside a character.
    """
    if chunk_size <= overlap or overlap < 0:
        raise ConfigError("need chunk_size > overlap >= 0")
    if not corpus:
        return []
    stride = chunk_size - overlap
    return [corpus[start : start + chunk_size] for start in range(0, len(corpus), stride)]


def reassemble(chunks: Sequence[str], overlap: int) -> str:
    if not chunks:
        return ""
    return chunks[0] + "".join(c[overlap:] for c in chunks[1:])


# -- extraction --------------------------------------------------------------


@dataclass
class ExtractedElements:
    entities: set[str] = field(default_factory=set)
    prereq_claims: dict[tuple[str, str], set[int]] = field(default_factory=dict)
    # unordered pair (sorted tuple) -> list of (chunk index, weight)
    sim_claims: dict[tuple[str, str], list[tuple[int, float]]] = field(default_factory=dict)
    skipped_lines: int = 0
    unknown_names: int = 0

    def support(self, edge: tuple[str, str]) -> int:
        return len(self.prereq_claims.get(edge, ()))


_LINE_RE = re.compile(r"^\((entity|prereq|similar)\|(.*)\)$")


def parse_extraction(text: str):
    """Parse backend output into ``(kind, fields)`` items plus a count of rejected lines."""
    items, bad = [], 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if not m:
            bad += 1
            continue
        kind, parts = m.group(1), [p.strip() for p in m.group(2).split("|")]
        if kind == "entity" and len(parts) == 1 and parts[0]:
            items.append((kind, parts))
        elif kind == "prereq" and len(parts) == 2:
            items.append((kind, parts))
        elif kind == "similar" and len(parts) in (2, 3):
            if len(parts) == 3:
                try:
                    w = float(parts[2])
                except ValueError:
                    bad += 1
                    continue
                if not 0.0 < w <= 1.0:
                    bad += 1
                    continue
                parts[2] = w
            items.append((kind, parts))
        else:
            bad += 1
    return items, bad


def extract_elements(
    chunks: Sequence[str],
    kc_names: Sequence[str],
    backend: TextModelBackend,
    max_in_flight: int = 1,
) -> ExtractedElements:
    if not kc_names:
        raise InvalidInputError("kc_names must be non-empty")
    names = list(kc_names)
    exact = set(names)
    folded = {}
    for n in names:
        folded.setdefault(n.casefold(), n)

    prompts_ = [prompts.extract_prompt(c, names, i) for i, c in enumerate(chunks)]
    if max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            outputs = list(pool.map(lambda p: _call(backend, p, allow_empty=True), prompts_))
    else:
        outputs = [_call(backend, p, allow_empty=True) for p in prompts_]

    el = ExtractedElements()

    def resolve(name: str) -> str | None:
        if name in exact:
            return name
        hit = folded.get(name.casefold())
        if hit is None:
            el.unknown_names += 1
        return hit

    for idx, out in enumerate(outputs):
        items, bad = parse_extraction(out)
        el.skipped_lines += bad
        for kind, parts in items:
            resolved = [resolve(p) for p in parts[:2] if isinstance(p, str)]
            if any(r is None for r in resolved):
                continue
            if kind == "entity":
                el.entities.add(resolved[0])
            elif kind == "prereq":
                a, b = resolved
                if a == b:
                    continue
                el.entities.update((a, b))
                el.prereq_claims.setdefault((a, b), set()).add(idx)
            else:
                a, b = resolved
                if a == b:
                    continue
                w = parts[2] if len(parts) == 3 else DEFAULT_SIM_WEIGHT
                el.entities.update((a, b))
                el.sim_claims.setdefault(tuple(sorted((a, b))), []).append((idx, w))
    if el.unknown_names:
        log.info("discarded %d references to unknown concept names", el.unknown_names)
    if el.skipped_lines:
        log.info("skipped %d unparseable extraction lines", el.skipped_lines)
    return el


# -- assembly ----------------------------------------------------------------


def break_cycles(edges: dict[tuple[str, str], int]) -> dict[tuple[str, str], int]:
    """Drop the weakest edge inside any cycle until none remain.

    Weakest = lowest support; on ties the lexicographically larger ``(from, to)``
    pair goes, so between ``(a, b)`` and ``(b, a)`` the former survives.
    """
    kept = dict(edges)
    while True:
        g = nx.DiGraph()
        g.add_edges_from(kept)
        cyclic = set()
        for scc in nx.strongly_connected_components(g):
            if len(scc) > 1:
                cyclic |= {e for e in g.subgraph(scc).edges}
        if not cyclic:
            return kept
        lowest = min(kept[e] for e in cyclic)
        del kept[max(e for e in cyclic if kept[e] == lowest)]


def assemble_graph(
    elements: ExtractedElements,
    kc_names: Sequence[str],
    descriptions: Sequence[str] | None = None,
) -> ConceptGraph:
    names = list(kc_names)
    index = {n: i for i, n in enumerate(names)}
    support = {
        (a, b): len(chunks)
        for (a, b), chunks in elements.prereq_claims.items()
        if a != b and a in index and b in index
    }
    support = break_cycles(support)
    prereqs = [(index[a], index[b]) for a, b in support]
    sims = []
    for (a, b), claims in elements.sim_claims.items():
        if a == b or a not in index or b not in index:
            continue
        w = sum(wt for _, wt in claims) / len(claims)
        sims.append((index[a], index[b], w))
    graph = ConceptGraph.build(names, sorted(prereqs), sorted(sims), descriptions)
    assert not validate_graph(graph), validate_graph(graph)
    return graph


# -- communities and explanations -------------------------------------------


@dataclass
class CommunitySummary:
    community_id: int
    member_ids: frozenset[int]
    summary_text: str

    def to_dict(self) -> dict:
        return {"community_id": self.community_id, "member_ids": sorted(self.member_ids), "summary_text": self.summary_text}


def communities(graph: ConceptGraph) -> list[frozenset[int]]:
    """Connected components over prerequisite (undirected) and similarity edges; isolated nodes excluded."""
    adj: dict[int, set[int]] = defaultdict(set)
    for a, b in graph.prereq_edges:
        adj[a].add(b)
        adj[b].add(a)
    for a, b in graph.sim_edges:
        if a != b:
            adj[a].add(b)
            adj[b].add(a)
    seen: set[int] = set()
    comps = []
    for v in sorted(adj):
        if v in seen:
            continue
        comp, stack = set(), [v]
        while stack:
            u = stack.pop()
            if u in comp:
                continue
            comp.add(u)
            stack.extend(adj[u] - comp)
        seen |= comp
        comps.append(frozenset(comp))
    return comps


def summarize_communities(graph: ConceptGraph, backend: TextModelBackend) -> list[CommunitySummary]:
    out = []
    names = graph.names()
    for cid, members in enumerate(communities(graph)):
        rel = [f"{names[a]} -> {names[b]}" for a, b in sorted(graph.prereq_edges) if a in members]
        rel += [f"{names[a]} ~ {names[b]}" for a, b in sorted(graph.sim_edges) if a in members]
        text = _call(backend, prompts.summarize_prompt(cid, [names[m] for m in sorted(members)], rel))
        out.append(CommunitySummary(cid, members, text))
    return out


def explain_path(
    path: Sequence[tuple[int, int]],
    summaries: Sequence[CommunitySummary],
    graph: ConceptGraph,
    backend: TextModelBackend,
) -> list[str]:
    """One explanation per ``(exercise_id, concept_id)`` step."""
    for _, kc in path:
        graph.check_id(kc)
    names = graph.names()
    on_path = {kc for _, kc in path}
    summary_of = {m: s.summary_text for s in summaries for m in s.member_ids}
    out = []
    for step, (_, kc) in enumerate(path, start=1):
        parents = [names[p] for p in graph.parents[kc] if p in on_path]
        children = [names[c] for c in graph.children[kc] if c in on_path]
        similar = [names[n] for n, _ in graph._sim_adjacency[kc]]
        prompt = prompts.explain_step_prompt(step, names[kc], parents, children, similar, summary_of.get(kc, ""))
        out.append(_call(backend, prompt))
    return out


# -- end to end --------------------------------------------------------------


@dataclass
class PipelineResult:
    graph: ConceptGraph
    explanations: list[Explanation]
    elements: ExtractedElements
    summaries: list[CommunitySummary]
    chunks: list[str]


def build_graph(
    kc_names: Sequence[str],
    backend: TextModelBackend,
    chunk_size: int = 400,
    overlap: int = 100,
    max_iters: int = 3,
    max_in_flight: int = 1,
    summarize: bool = True,
) -> PipelineResult:
    names = list(dict.fromkeys(kc_names))
    if not names:
        raise InvalidInputError("no concept names given")
    expl = [generate_explanation(n, backend, max_iters) for n in names]
    corpus = "\n\n".join(e.text for e in expl)
    chunks = chunk_text(corpus, chunk_size, overlap)
    elements = extract_elements(chunks, names, backend, max_in_flight)
    graph = assemble_graph(elements, names, [e.text for e in expl])
    summaries = summarize_communities(graph, backend) if summarize else []
    return PipelineResult(graph, expl, elements, summaries, chunks)
