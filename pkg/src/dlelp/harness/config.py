"""Experiment configuration: one JSON document, defaults mirror the published setup."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..agents import AgentConfig
from ..errors import ConfigError
from ..student_sim import PopulationSpec, SimConfig
from .synthetic import SyntheticGraphSpec

METHODS = ("full", "no_s", "random", "prereq_greedy", "random+s", "prereq_greedy+s")
TRAINED = ("full", "no_s")


@dataclass(frozen=True)
class GraphSource:
    kind: str = "synthetic"  # synthetic | file | pipeline
    path: str | None = None  # graph JSON (file) or planted ontology JSON (pipeline)
    exercises: str | None = None  # optional exercise bank JSON for kind=file
    synthetic: SyntheticGraphSpec = field(default_factory=SyntheticGraphSpec)
    seed: int = 0
    chunk_size: int = 400
    overlap: int = 100

    def __post_init__(self):
        if self.kind not in ("synthetic", "file", "pipeline"):
            raise ConfigError(f"unknown graph source kind {self.kind!r}")
        if self.kind != "synthetic" and not self.path:
            raise ConfigError(f"graph source {self.kind!r} needs a path")


@dataclass(frozen=True)
class ExperimentConfig:
    graph: GraphSource = field(default_factory=GraphSource)
    sim: SimConfig = field(default_factory=SimConfig)
    agent: AgentConfig = field(default_factory=lambda: AgentConfig(batch_episodes=32, ppo_epochs=8))
    population: PopulationSpec = field(default_factory=lambda: PopulationSpec(goals_per_learner=2, goal_depths=(0, 1)))
    steps: tuple[int, ...] = (5, 10, 15, 20)
    eval_episodes: int = 200
    train_episodes: int = 4000
    seeds: tuple[int, ...] = (0,)
    methods: tuple[str, ...] = ("full", "no_s")
    reference: str = "full"
    permutation_resamples: int = 10_000
    records: str | None = None  # optional learning-records CSV used to fit the tracker decay
    threads: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.steps or any(s < 1 for s in self.steps):
            raise ConfigError("steps must be a non-empty list of positive integers")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ConfigError(f"unknown methods {unknown}; choose from {METHODS}")
        if self.reference not in self.methods:
            raise ConfigError(f"reference method {self.reference!r} is not among the methods")
        if self.eval_episodes < 1 or self.train_episodes < 1:
            raise ConfigError("episode counts must be >= 1")
        if self.permutation_resamples < 1 or self.threads < 1:
            raise ConfigError("permutation_resamples and threads must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agent"] = self.agent.to_dict()
        return _lists(d)

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("threads")
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        kw = {}
        try:
            if "graph" in data:
                g = dict(data.pop("graph"))
                if "synthetic" in g:
                    g["synthetic"] = SyntheticGraphSpec(**g["synthetic"])
                kw["graph"] = GraphSource(**g)
            if "sim" in data:
                kw["sim"] = SimConfig(**data.pop("sim"))
            if "agent" in data:
                a = dict(data.pop("agent"))
                if "hidden" in a:
                    a["hidden"] = tuple(a["hidden"])
                kw["agent"] = AgentConfig(**a)
            if "population" in data:
                p = dict(data.pop("population"))
                if p.get("goal_pool") is not None:
                    p["goal_pool"] = tuple(p["goal_pool"])
                if "goal_depths" in p:
                    p["goal_depths"] = tuple(p["goal_depths"])
                kw["population"] = PopulationSpec(**p)
            allowed = {f.name for f in fields(cls)}
            extra = set(data) - allowed
            if extra:
                raise ConfigError(f"unknown config keys: {sorted(extra)}")
            kw.update(data)
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)


def _lists(obj):
    if isinstance(obj, dict):
        return {k: _lists(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_lists(v) for v in obj]
    return obj
