"""Layered synthetic concept graphs with similarity clusters and an exercise bank."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from ..kc_graph import ConceptGraph
from ..student_sim import Exercise


@dataclass(frozen=True)
class SyntheticGraphSpec:
    concepts: int = 50
    layers: int = 4
    prereqs_per_node: int = 1
    sim_clusters: int = 25
    intra_cluster_prob: float = 1.0
    exercises_per_kc: int = 5
    difficulty_spread: float = 0.8

    def __post_init__(self):
        if self.concepts < 1 or self.layers < 1 or self.layers > self.concepts:
            raise ConfigError("need 1 <= layers <= concepts")
        if self.prereqs_per_node < 0 or self.exercises_per_kc < 1:
            raise ConfigError("prereqs_per_node >= 0 and exercises_per_kc >= 1 required")
        if not 0.0 <= self.intra_cluster_prob <= 1.0 or not 0.0 <= self.difficulty_spread <= 1.0:
            raise ConfigError("probabilities and spreads must lie in [0, 1]")
        if self.sim_clusters < 1:
            raise ConfigError("sim_clusters must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def layer_of(spec: SyntheticGraphSpec) -> list[int]:
    """Contiguous id blocks, as even as possible."""
    bounds = np.linspace(0, spec.concepts, spec.layers + 1).round().astype(int)
    out = []
    for layer in range(spec.layers):
        out += [layer] * int(bounds[layer + 1] - bounds[layer])
    return out


def generate_synthetic_graph(spec: SyntheticGraphSpec, seed: int) -> tuple[ConceptGraph, dict[int, list[Exercise]]]:
    rng = np.random.default_rng(seed)
    layers = layer_of(spec)
    by_layer: dict[int, list[int]] = {}
    for v, layer in enumerate(layers):
        by_layer.setdefault(layer, []).append(v)

    prereqs = set()
    for v, layer in enumerate(layers):
        if layer == 0:
            continue
        pool = by_layer[layer - 1]
        k = min(spec.prereqs_per_node, len(pool))
        for j in rng.choice(len(pool), size=k, replace=False):
            prereqs.add((pool[int(j)], v))

    order = rng.permutation(spec.concepts)
    sims = []
    for cluster in np.array_split(order, spec.sim_clusters):
        members = sorted(int(c) for c in cluster)
        for i, a in enumerate(members):
            for b in members[i + 1 :]:
                if rng.random() < spec.intra_cluster_prob:
                    sims.append((a, b, round(float(rng.uniform(0.5, 1.0)), 3)))

    names = [f"kc_{v:03d}" for v in range(spec.concepts)]
    descs = [f"synthetic concept in layer {layer}" for layer in layers]
    graph = ConceptGraph.build(names, sorted(prereqs), sims, descs)

    lo = 0.5 - spec.difficulty_spread / 2
    bank, eid = {}, 0
    grid = np.linspace(lo, lo + spec.difficulty_spread, spec.exercises_per_kc) if spec.exercises_per_kc > 1 else [0.5]
    for v in range(spec.concepts):
        items = []
        for d in grid:
            jitter = rng.uniform(-0.02, 0.02)
            items.append(Exercise(eid, v, round(float(np.clip(d + jitter, 0.0, 1.0)), 4)))
            eid += 1
        bank[v] = items
    return graph, bank


def bank_to_dict(bank: dict[int, list[Exercise]]) -> dict:
    return {
        "exercises": [
            {"id": e.id, "concept_id": e.concept_id, "difficulty": e.difficulty}
            for kc in sorted(bank)
            for e in bank[kc]
        ]
    }


def bank_from_dict(data: dict) -> dict[int, list[Exercise]]:
    bank: dict[int, list[Exercise]] = {}
    for row in data["exercises"]:
        ex = Exercise(int(row["id"]), int(row["concept_id"]), float(row["difficulty"]))
        bank.setdefault(ex.concept_id, []).append(ex)
    return bank


def synthetic_json(spec: SyntheticGraphSpec, seed: int) -> str:
    graph, bank = generate_synthetic_graph(spec, seed)
    doc = graph.to_dict()
    doc.update(bank_to_dict(bank))
    return json.dumps(doc, indent=2, sort_keys=True)
