"""Non-learning comparison arms and the method table used by experiments."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from ..agents import AgentConfig, ExerciseBank, EpisodeResult, play
from ..errors import InvalidInputError
from ..kc_graph import ConceptGraph
from ..student_sim import PopulationSpec, SimConfig

BASELINES = ("random", "prereq_greedy", "no_s")


@dataclass(frozen=True)
class MethodSpec:
    selector: str  # policy | random | prereq_greedy
    use_s_agent: bool

    @property
    def trained(self) -> bool:
        return self.selector == "policy"


METHOD_SPECS = {
    "full": MethodSpec("policy", True),
    "no_s": MethodSpec("policy", False),
    "random": MethodSpec("random", False),
    "prereq_greedy": MethodSpec("prereq_greedy", False),
    "random+s": MethodSpec("random", True),
    "prereq_greedy+s": MethodSpec("prereq_greedy", True),
}


def method_spec(name: str) -> MethodSpec:
    try:
        return METHOD_SPECS[name]
    except KeyError:
        raise InvalidInputError(f"unknown method {name!r}; choose from {sorted(METHOD_SPECS)}") from None


def run_baseline(
    name: str,
    graph: ConceptGraph,
    bank: ExerciseBank,
    sim_config: SimConfig,
    population: PopulationSpec,
    config: AgentConfig,
    seeds: Sequence[int],
    policy_params=None,
    value_params=None,
    threads: int = 1,
) -> list[EpisodeResult]:
    """``random`` and ``prereq_greedy`` ignore the policy; ``no_s`` needs trained parameters."""
    if name not in BASELINES:
        raise InvalidInputError(f"unknown baseline {name!r}; choose from {BASELINES}")
    spec = METHOD_SPECS[name]
    if spec.trained and policy_params is None:
        raise InvalidInputError("the no_s baseline needs policy parameters")
    cfg = replace(config, use_s_agent=False)
    return play(
        graph, bank, sim_config, population, cfg, seeds,
        policy_params, value_params, mode="eval", selector=spec.selector, threads=threads,
    )
