"""Episode orchestration for the prerequisite, similarity and difficulty agents."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import policy_core as pc
from .errors import ConfigError, InvalidInputError, NoExerciseError, TrainingAbortedError
from .kc_graph import (
    ConceptGraph,
    GoalSet,
    candidate_action_space,
    find_initial_node,
    is_mastered,
    similar_neighbors,
)
from .student_sim import (
    Exercise,
    PopulationSpec,
    SessionState,
    SimConfig,
    compute_ep,
    evaluate_goals,
    sample_session,
)

log = logging.getLogger(__name__)

ExerciseBank = Mapping[int, Sequence[Exercise]]

SELECTORS = ("policy", "random", "prereq_greedy")


@dataclass(frozen=True)
class AgentConfig:
    tau: float = 0.001
    epsilon_clip: float = 0.2
    gamma: float = 0.99
    max_steps: int = 10
    subpath_cap: int = 2
    slack: int = 0
    mastery_threshold: float = 0.5
    use_s_agent: bool = True
    hidden: tuple[int, ...] = (64,)
    lr: float = 1e-3
    batch_episodes: int = 16
    ppo_epochs: int = 4
    entropy_coef: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.subpath_cap < 1:
            raise ConfigError("subpath_cap must be >= 1")
        if self.slack < 0:
            raise ConfigError("slack must be >= 0")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError(f"hidden layer sizes must be >= 1, got {self.hidden}")
        if self.batch_episodes < 1 or self.ppo_epochs < 1:
            raise ConfigError("batch_episodes and ppo_epochs must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class PathStep:
    exercise_id: int
    concept_id: int
    source: str  # "P" or "S"
    score: int


@dataclass
class EpisodeResult:
    path: list[PathStep]
    trajectory: pc.Trajectory | None
    e_p: float
    degenerate: bool
    s_agent_activations: int
    e_start: int
    e_end: int
    e_sup: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "path": [asdict(s) for s in self.path],
            "e_p": self.e_p,
            "degenerate": self.degenerate,
            "s_agent_activations": self.s_agent_activations,
            "e_start": self.e_start,
            "e_end": self.e_end,
            "e_sup": self.e_sup,
            "trajectory": self.trajectory.to_dict() if self.trajectory is not None else None,
        }


# -- building blocks ---------------------------------------------------------


def encode_state(est_mastery, goals: GoalSet) -> np.ndarray:
    est = np.asarray(est_mastery, dtype=np.float64)
    if est.shape != (goals.n,):
        raise InvalidInputError(f"mastery length {est.shape} does not match goal vector length {goals.n}")
    return np.concatenate([est, goals.one_hot])


def p_agent_select(
    state: np.ndarray,
    candidates: Iterable[int],
    policy_params: pc.ApproximatorParams,
    rng: np.random.Generator,
    greedy: bool = False,
) -> tuple[int, float]:
    cands = sorted(candidates)
    if not cands:
        raise InvalidInputError("empty candidate action space")
    mask = np.zeros(policy_params.sizes[-1], dtype=bool)
    mask[cands] = True
    probs = pc.forward_policy(policy_params, state, mask)
    if greedy:
        a = int(np.argmax(probs))  # first maximum -> lowest id
    else:
        a = int(rng.choice(len(probs), p=probs))
    return a, float(np.log(probs[a]))


def s_agent_trigger(est_prev2, est_prev1, c_t: int, tau: float) -> bool:
    """True when the tracked mastery of ``c_t`` rose by less than ``tau``."""
    if est_prev2 is None:
        return False
    return bool(est_prev1[c_t] - est_prev2[c_t] < tau)


def s_agent_subpath(graph: ConceptGraph, c_t: int, est_mastery, cap: int, threshold: float = 0.5) -> list[int]:
    if cap < 1:
        raise InvalidInputError("cap must be >= 1")
    confusable = [n for n, _ in similar_neighbors(graph, c_t) if not is_mastered(est_mastery[n], threshold)]
    return confusable[:cap] + [c_t]


def d_agent_select(exercises: Sequence[Exercise], h_kc: float) -> Exercise:
    if not exercises:
        raise NoExerciseError("no exercises available for this concept")
    return min(exercises, key=lambda e: (abs(e.difficulty - h_kc), e.id))


def default_exercise_bank(graph: ConceptGraph, per_kc: int = 3) -> dict[int, list[Exercise]]:
    """Evenly spread difficulties; used when a graph comes without an exercise bank."""
    bank, eid = {}, 0
    for kc in range(graph.n):
        items = []
        for j in range(per_kc):
            items.append(Exercise(eid, kc, (j + 1) / (per_kc + 1)))
            eid += 1
        bank[kc] = items
    return bank


def goal_candidates(graph: ConceptGraph, goals: GoalSet, est, config: AgentConfig) -> set[int]:
    cands: set[int] = set()
    for g in goals.sorted_ids():
        start = find_initial_node(graph, g, est, config.mastery_threshold)
        cands |= candidate_action_space(graph, start, g, config.slack)
    return cands


def make_networks(n: int, config: AgentConfig, rng: np.random.Generator):
    policy = pc.ApproximatorParams.init((2 * n, *config.hidden, n), rng)
    value = pc.ApproximatorParams.init((2 * n, *config.hidden, 1), rng, out_scale=1.0)
    return policy, value


# -- episodes ----------------------------------------------------------------


class _Selector:
    def __init__(self, kind, graph, candidates, policy_params, threshold):
        if kind not in SELECTORS:
            raise InvalidInputError(f"unknown selector {kind!r}")
        if kind == "policy" and policy_params is None:
            raise InvalidInputError("policy selector needs policy parameters")
        self.kind = kind
        self.candidates = sorted(candidates)
        self.policy_params = policy_params
        self.threshold = threshold
        if kind == "prereq_greedy":
            rank = {v: i for i, v in enumerate(graph.topological_order())}
            self.ordered = sorted(self.candidates, key=lambda v: (rank[v], v))

    def __call__(self, state_vec, est, rng, greedy):
        if self.kind == "policy":
            return p_agent_select(state_vec, self.candidates, self.policy_params, rng, greedy)
        if self.kind == "random":
            a = self.candidates[int(rng.integers(len(self.candidates)))]
            return a, -math.log(len(self.candidates))
        for v in self.ordered:
            if not is_mastered(est[v], self.threshold):
                return v, 0.0
        return self.ordered[-1], 0.0


def run_episode(
    session: SessionState,
    graph: ConceptGraph,
    bank: ExerciseBank,
    policy_params: pc.ApproximatorParams | None,
    value_params: pc.ApproximatorParams | None,
    config: AgentConfig,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    selector: str = "policy",
) -> EpisodeResult:
    """Play one session to the step budget.

    ``mode='train'`` samples from the policy; ``'eval'`` takes the argmax.
    S-agent steps consume budget but are not recorded as P-agent decisions.
    """
    if mode not in ("train", "eval"):
        raise InvalidInputError(f"mode must be 'train' or 'eval', got {mode!r}")
    rng = rng if rng is not None else np.random.default_rng([session.rng_seed, 1])
    greedy = mode == "eval"
    threshold = config.mastery_threshold
    goals = session.goals
    e_start = evaluate_goals(session, threshold)
    e_sup = len(goals.ids)

    cands = goal_candidates(graph, goals, session.est_mastery, config)
    select = _Selector(selector, graph, cands, policy_params, threshold)
    n = graph.n

    path: list[PathStep] = []
    states, actions, masks, logps, values = [], [], [], [], []
    activations = 0
    mask_vec = np.zeros(n, dtype=bool)
    mask_vec[sorted(cands)] = True

    def do(kc: int, source: str) -> None:
        items = bank.get(kc, ())
        if not items:
            raise NoExerciseError(f"no exercises for concept {kc}")
        ex = d_agent_select(items, float(session.est_mastery[kc]))
        score = session.practice(ex)
        path.append(PathStep(ex.id, kc, source, score))

    while len(path) < config.max_steps:
        s = encode_state(session.est_mastery, goals)
        c, logp = select(s, session.est_mastery, rng, greedy)
        states.append(s)
        actions.append(c)
        masks.append(mask_vec)
        logps.append(logp)
        values.append(pc.forward_value(value_params, s) if value_params is not None else 0.0)

        first = len(path) == 0
        before = session.est_mastery.copy()
        do(c, "P")
        if (
            config.use_s_agent
            and len(path) < config.max_steps
            and s_agent_trigger(None if first else before, session.est_mastery, c, config.tau)
        ):
            activations += 1
            for kc in s_agent_subpath(graph, c, session.est_mastery, config.subpath_cap, threshold):
                if len(path) >= config.max_steps:
                    break
                do(kc, "S")

    e_end = evaluate_goals(session, threshold)
    ep = compute_ep(e_start, e_end, e_sup)
    rewards = np.zeros(len(actions))
    if len(rewards):
        rewards[-1] = ep.value
    traj = pc.Trajectory(
        np.array(states).reshape(len(states), 2 * n),
        actions,
        np.array(masks).reshape(len(masks), n),
        logps,
        rewards,
        values,
    )
    return EpisodeResult(path, traj, ep.value, ep.degenerate, activations, e_start, e_end, e_sup, session.rng_seed)


def play(
    graph: ConceptGraph,
    bank: ExerciseBank,
    sim_config: SimConfig,
    population: PopulationSpec,
    config: AgentConfig,
    seeds: Sequence[int],
    policy_params=None,
    value_params=None,
    mode: str = "eval",
    selector: str = "policy",
    threads: int = 1,
) -> list[EpisodeResult]:
    """Run one episode per seed; results come back in seed order regardless of threads."""

    def one(seed: int) -> EpisodeResult:
        session = sample_session(graph, sim_config, population, seed)
        return run_episode(session, graph, bank, policy_params, value_params, config, mode, selector=selector)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, seeds))
    return [one(s) for s in seeds]


# -- training ----------------------------------------------------------------


@dataclass
class TrainResult:
    policy: pc.ApproximatorParams
    value: pc.ApproximatorParams
    policy_opt: pc.AdamState
    value_opt: pc.AdamState
    curve: list[float] = field(default_factory=list)  # mean E_p per batch
    episode_ep: list[float] = field(default_factory=list)
    episodes: int = 0
    seed: int = 0


def episode_seeds(seed: int, count: int, stream: int) -> list[int]:
    ss = np.random.SeedSequence([int(seed), int(stream)])
    return [int(x) for x in ss.generate_state(count, dtype=np.uint32)]


def train(
    graph: ConceptGraph,
    sim_config: SimConfig,
    agent_config: AgentConfig,
    episodes: int,
    seed: int,
    bank: ExerciseBank | None = None,
    population: PopulationSpec | None = None,
    threads: int = 1,
    progress: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """PPO on freshly sampled learners; one batch of episodes per update round."""
    if episodes < 1:
        raise InvalidInputError("episodes must be >= 1")
    bank = bank if bank is not None else default_exercise_bank(graph)
    population = population or PopulationSpec()
    rng = np.random.default_rng([int(seed), 11])
    policy, value = make_networks(graph.n, agent_config, rng)
    popt = pc.AdamState.for_params(policy, lr=agent_config.lr)
    vopt = pc.AdamState.for_params(value, lr=agent_config.lr)
    seeds = episode_seeds(seed, episodes, stream=1)
    result = TrainResult(policy, value, popt, vopt, seed=int(seed))

    for b0 in range(0, episodes, agent_config.batch_episodes):
        batch_seeds = seeds[b0 : b0 + agent_config.batch_episodes]
        results = play(
            graph, bank, sim_config, population, agent_config, batch_seeds,
            policy, value, mode="train", threads=threads,
        )
        traj = pc.Trajectory.concat([r.trajectory for r in results])
        old = policy.copy()
        adv = pc.advantages(traj, value, agent_config.gamma)
        for _ in range(agent_config.ppo_epochs):
            ploss, pgrad = pc.ppo_clip_loss(traj, policy, old, agent_config.epsilon_clip, adv, agent_config.entropy_coef)
            vloss, vgrad = pc.value_loss(traj, value, agent_config.gamma)
            if not (np.isfinite(ploss) and np.isfinite(vloss)):
                raise TrainingAbortedError(
                    f"non-finite loss at episode {b0} (policy={ploss}, value={vloss})",
                    snapshot={"episode": b0, "policy": policy.to_dict(), "value": value.to_dict()},
                )
            pvals, popt = pc.optimizer_step(policy.values, pgrad, popt)
            vvals, vopt = pc.optimizer_step(value.values, vgrad, vopt)
            policy, value = policy.with_values(pvals), value.with_values(vvals)
        eps = [r.e_p for r in results]
        result.episode_ep.extend(eps)
        result.curve.append(float(np.mean(eps)))
        if progress:
            progress(b0 + len(batch_seeds), result.curve[-1])

    result.policy, result.value, result.policy_opt, result.value_opt = policy, value, popt, vopt
    result.episodes = episodes
    return result
