"""Scripted practice schedules on a target concept and its confusable neighbour."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..kc_graph import ConceptGraph, GoalSet
from ..student_sim import Exercise, SimConfig, init_session

TARGET, NEIGHBOR = 0, 1
INTERLEAVED = ("neighbor", "neighbor", "target")
BLOCKED = ("target", "target", "target")


def pair_graph(weight: float = 0.8) -> ConceptGraph:
    """Two concepts with no prerequisites, joined by one similarity edge."""
    return ConceptGraph.build(["target", "neighbor"], [], [(TARGET, NEIGHBOR, weight)])


def final_target_mastery(schedule: Sequence[str], config: SimConfig, seeds: Sequence[int], difficulty: float = 0.5) -> np.ndarray:
    """Final true mastery of the target after playing ``schedule`` from a fresh learner.

    Both concepts are goals, so both start unmastered and the neighbour can confuse.
    """
    graph = pair_graph()
    ids = {"target": TARGET, "neighbor": NEIGHBOR}
    exercises = {kc: Exercise(kc, kc, difficulty) for kc in ids.values()}
    out = np.empty(len(seeds))
    for i, seed in enumerate(seeds):
        state = init_session(graph, GoalSet.of([TARGET, NEIGHBOR], graph.n), config, int(seed))
        for item in schedule:
            state.practice(exercises[ids[item]])
        out[i] = state.true_mastery[TARGET]
    return out


@dataclass(frozen=True)
class ScheduleComparison:
    confusion_factor: float
    interleaved: float
    blocked: float

    @property
    def advantage(self) -> float:
        return self.interleaved - self.blocked


def compare_schedules(confusion_factor: float, sessions: int = 500, seed: int = 0, config: SimConfig | None = None) -> ScheduleComparison:
    """Same seeded learners under both schedules, so the comparison is paired."""
    cfg = replace(config or SimConfig(), confusion_factor=confusion_factor)
    seeds = [int(s) for s in np.random.SeedSequence([seed, 9]).generate_state(sessions)]
    a = final_target_mastery(INTERLEAVED, cfg, seeds)
    b = final_target_mastery(BLOCKED, cfg, seeds)
    return ScheduleComparison(confusion_factor, float(a.mean()), float(b.mean()))
