"""Simulated learner: hidden mastery dynamics, answering, tracking and the E_p metric.

The dynamics reproduce the *blocked phenomenon*: practice on a KC is slowed when
its prerequisites are unmastered, and slowed further when a similar KC is still
unmastered and has not been practiced recently (no discrimination learning).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, InvalidInputError
from .kc_graph import ConceptGraph, GoalSet, similar_neighbors


@dataclass(frozen=True)
class Exercise:
    id: int
    concept_id: int
    difficulty: float

    def __post_init__(self):
        if not 0.0 <= self.difficulty <= 1.0:
            raise InvalidInputError(f"exercise {self.id}: difficulty {self.difficulty} outside [0, 1]")


@dataclass(frozen=True)
class HistoryRecord:
    exercise_id: int
    concept_id: int
    score: int
    step: int

    def __post_init__(self):
        if self.score not in (0, 1):
            raise InvalidInputError("score must be 0 or 1")


@dataclass(frozen=True)
class SimConfig:
    base_gain: float = 0.15
    gate_factor: float = 0.3
    confusion_factor: float = 0.2
    discrimination_window: int = 3
    slip: float = 0.1
    guess: float = 0.2
    mastery_threshold: float = 0.5
    answer_sharpness: float = 5.0
    tracker_decay: float = 0.7

    def __post_init__(self):
        if self.base_gain < 0:
            raise ConfigError("base_gain must be >= 0")
        for name in ("gate_factor", "confusion_factor"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        for name in ("slip", "guess"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.slip + self.guess > 1.0:
            raise ConfigError("slip + guess must not exceed 1")
        if self.discrimination_window < 0:
            raise ConfigError("discrimination_window must be >= 0")
        if self.answer_sharpness <= 0:
            raise ConfigError("answer_sharpness must be > 0")
        if not 0.0 < self.mastery_threshold < 1.0:
            raise ConfigError("mastery_threshold must lie in (0, 1)")
        if not 0.0 < self.tracker_decay < 1.0:
            raise ConfigError("tracker_decay must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SessionState:
    graph: ConceptGraph
    config: SimConfig
    goals: GoalSet
    true_mastery: np.ndarray
    est_mastery: np.ndarray
    rng_seed: int
    rng: np.random.Generator = field(repr=False)
    history: list[HistoryRecord] = field(default_factory=list)
    step: int = 0

    def practice(self, exercise: Exercise) -> int:
        """One full interaction: answer, learn, track. Returns the score."""
        score = answer_exercise(self, exercise)
        apply_learning(self, exercise)
        self.step += 1
        update_estimate(self, exercise.concept_id)
        return score


def init_session(graph: ConceptGraph, goals: GoalSet, config: SimConfig, seed: int) -> SessionState:
    if goals.n != graph.n:
        raise InvalidInputError("goal vector length does not match the graph")
    rng = np.random.default_rng(seed)
    near = set(goals.ids)
    for g in goals.ids:
        near |= graph.ancestors(g)
    upper = np.full(graph.n, 0.7)
    upper[sorted(near)] = 0.4
    true = rng.uniform(0.0, 1.0, size=graph.n) * upper
    return SessionState(
        graph=graph,
        config=config,
        goals=goals,
        true_mastery=true,
        est_mastery=np.full(graph.n, 0.5),
        rng_seed=int(seed),
        rng=rng,
    )


def success_probability(mastery: float, difficulty: float, config: SimConfig) -> float:
    z = config.answer_sharpness * (mastery - difficulty)
    sig = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    return config.guess + (1.0 - config.slip - config.guess) * sig


def answer_exercise(state: SessionState, exercise: Exercise) -> int:
    kc = state.graph.check_id(exercise.concept_id)
    p = success_probability(state.true_mastery[kc], exercise.difficulty, state.config)
    score = int(state.rng.random() < p)
    state.history.append(HistoryRecord(exercise.id, kc, score, state.step))
    return score


def _recently_practiced(history: Sequence[HistoryRecord], kc: int, now: int, window: int) -> bool:
    for rec in reversed(history):
        if now - rec.step > window:
            return False
        if rec.concept_id == kc and rec.step < now:
            return True
    return False


def learning_gain(state: SessionState, kc: int, config: SimConfig | None = None) -> float:
    cfg = config or state.config
    m = state.true_mastery
    gain = cfg.base_gain * (1.0 - m[kc])
    if any(m[p] < cfg.mastery_threshold for p in state.graph.parents[kc]):
        gain *= cfg.gate_factor
    for n, _ in similar_neighbors(state.graph, kc):
        if m[n] < cfg.mastery_threshold and not _recently_practiced(
            state.history, n, state.step, cfg.discrimination_window
        ):
            gain *= cfg.confusion_factor
            break
    return gain


def apply_learning(state: SessionState, exercise: Exercise, config: SimConfig | None = None) -> SessionState:
    kc = state.graph.check_id(exercise.concept_id)
    gain = learning_gain(state, kc, config)
    state.true_mastery[kc] = min(1.0, state.true_mastery[kc] + gain)
    return state


def decayed_average(scores: Sequence[int], decay: float) -> float:
    num = den = 0.0
    w = 1.0
    for s in reversed(scores):
        num += w * s
        den += w
        w *= decay
    return num / den


def kt_estimate(history: Sequence[HistoryRecord], n: int, decay: float) -> np.ndarray:
    """Per-KC exponentially decayed mean of scores, latest attempt weighted 1."""
    per_kc: dict[int, list[int]] = {}
    for rec in history:
        per_kc.setdefault(rec.concept_id, []).append(rec.score)
    est = np.full(n, 0.5)
    for kc, scores in per_kc.items():
        est[kc] = decayed_average(scores, decay)
    return est


def update_estimate(state: SessionState, kc: int) -> None:
    scores = [r.score for r in state.history if r.concept_id == kc]
    state.est_mastery[kc] = decayed_average(scores, state.config.tracker_decay) if scores else 0.5


def evaluate_goals(state: SessionState, threshold: float = 0.5) -> int:
    return sum(1 for g in state.goals.ids if state.true_mastery[g] > threshold)


class Effectiveness(NamedTuple):
    value: float
    degenerate: bool = False


def compute_ep(e_start: float, e_end: float, e_sup: float) -> Effectiveness:
    if e_sup < e_start:
        raise InvalidInputError(f"e_sup ({e_sup}) is below e_start ({e_start})")
    if e_sup == e_start:
        return Effectiveness(1.0, True)
    return Effectiveness((e_end - e_start) / (e_sup - e_start), False)


# -- learner populations -----------------------------------------------------


@dataclass(frozen=True)
class PopulationSpec:
    """How goals are drawn for simulated learners.

    ``goal_pool`` restricts goals to listed concept ids; ``None`` means every concept
    whose prerequisite depth lies in ``goal_depths``.
    """

    goals_per_learner: int = 1
    goal_pool: tuple[int, ...] | None = None
    goal_depths: tuple[int, ...] = (1,)

    def pool(self, graph: ConceptGraph) -> list[int]:
        if self.goal_pool is not None:
            return sorted(self.goal_pool)
        depth = prerequisite_depths(graph)
        pool = [v for v in range(graph.n) if depth[v] in self.goal_depths]
        return pool or list(range(graph.n))

    def sample_goals(self, graph: ConceptGraph, rng: np.random.Generator) -> GoalSet:
        pool = self.pool(graph)
        k = min(self.goals_per_learner, len(pool))
        picks = rng.choice(len(pool), size=k, replace=False)
        return GoalSet.of((pool[i] for i in picks), graph.n)


def prerequisite_depths(graph: ConceptGraph) -> list[int]:
    depth = [0] * graph.n
    for v in graph.topological_order():
        for c in graph.children[v]:
            depth[c] = max(depth[c], depth[v] + 1)
    return depth


def sample_session(graph: ConceptGraph, config: SimConfig, population: PopulationSpec, seed: int) -> SessionState:
    goal_rng = np.random.default_rng([int(seed), 7])
    goals = population.sample_goals(graph, goal_rng)
    return init_session(graph, goals, config, seed)
