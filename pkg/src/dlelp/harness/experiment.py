"""Seeded train/evaluate grid over methods, step budgets and seeds."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..agents import AgentConfig, EpisodeResult, TrainResult, default_exercise_bank, episode_seeds, play, train
from ..errors import DLELPError, GraphFormatError
from ..graph_gen.backends import PlantedOntology, StubBackend
from ..graph_gen.pipeline import build_graph
from ..kc_graph import ConceptGraph, validate_graph
from ..policy_core import ApproximatorParams
from .baselines import method_spec
from .config import ExperimentConfig, GraphSource
from .records import fit_tracker, load_records
from .stats import paired_t_pvalue, sign_flip_pvalue
from .synthetic import bank_from_dict, generate_synthetic_graph

log = logging.getLogger(__name__)

TRAIN_STREAM, EVAL_STREAM, TEST_STREAM = 3, 2, 5


@dataclass
class Cell:
    method: str
    steps: int
    seed: int
    n: int = 0
    mean_ep: float | None = None
    aggregate_ep: float | None = None
    std: float | None = None
    p_value: float | None = None
    t_pvalue: float | None = None
    degenerate: int = 0
    mean_s_activations: float | None = None
    train_final_ep: float | None = None
    error: str | None = None
    episode_ep: list[float] = field(default_factory=list)

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.method, self.steps, self.seed)


@dataclass
class Report:
    rows: list[Cell] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"rows": [asdict(c) for c in self.rows], "provenance": self.provenance}

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        names = {f.name for f in fields(Cell)}
        return cls([Cell(**{k: v for k, v in row.items() if k in names}) for row in data["rows"]], dict(data["provenance"]))

    def cell(self, method: str, steps: int, seed: int | None = None) -> Cell:
        for c in self.rows:
            if c.method == method and c.steps == steps and (seed is None or c.seed == seed):
                return c
        raise KeyError((method, steps, seed))


# -- graph sources -----------------------------------------------------------


def load_valid_graph(path) -> ConceptGraph:
    graph = ConceptGraph.load(path)
    problems = validate_graph(graph)
    if problems:
        raise GraphFormatError(f"{path}: {len(problems)} violations, first: {problems[0]}")
    return graph


def load_environment(source: GraphSource):
    """Resolve a graph source to ``(graph, exercise bank, description)``."""
    if source.kind == "synthetic":
        graph, bank = generate_synthetic_graph(source.synthetic, source.seed)
        return graph, bank, {"kind": "synthetic", "spec": source.synthetic.to_dict(), "seed": source.seed}
    if source.kind == "file":
        graph = load_valid_graph(source.path)
        if source.exercises:
            try:
                bank = bank_from_dict(json.loads(Path(source.exercises).read_text(encoding="utf-8")))
            except (OSError, ValueError, KeyError) as exc:
                raise GraphFormatError(f"cannot read exercise bank {source.exercises}: {exc}") from exc
        else:
            bank = default_exercise_bank(graph)
        return graph, bank, {"kind": "file", "path": source.path, "exercises": source.exercises}
    ontology = PlantedOntology.load(source.path)
    result = build_graph(list(ontology.concepts), StubBackend(ontology), source.chunk_size, source.overlap, summarize=False)
    graph = result.graph
    return graph, default_exercise_bank(graph), {"kind": "pipeline", "ontology": source.path, "backend": "stub"}


# -- seeds -------------------------------------------------------------------


def _derived(seed: int, steps: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(steps), stream]).generate_state(1)[0])


def training_seed(seed: int, steps: int) -> int:
    """Shared by every trained method in a (steps, seed) group so arms are paired."""
    return _derived(seed, steps, TRAIN_STREAM)


def eval_seeds(seed: int, count: int) -> list[int]:
    return episode_seeds(seed, count, stream=EVAL_STREAM)


# -- cells -------------------------------------------------------------------


def method_config(agent: AgentConfig, method: str, steps: int) -> AgentConfig:
    return replace(agent, max_steps=int(steps), use_s_agent=method_spec(method).use_s_agent)


def train_method(graph, bank, config: ExperimentConfig, method: str, steps: int, seed: int) -> TrainResult:
    cfg = method_config(config.agent, method, steps)
    return train(graph, config.sim, cfg, config.train_episodes, training_seed(seed, steps), bank, config.population)


def aggregate_ep(results: list[EpisodeResult]) -> float:
    """Pooled form: total gain over total attainable gain; 1.0 when nothing was attainable."""
    gain = sum(r.e_end - r.e_start for r in results)
    room = sum(r.e_sup - r.e_start for r in results)
    return float(gain / room) if room > 0 else 1.0


def summarize(cell: Cell, results: list[EpisodeResult]) -> Cell:
    eps = np.array([r.e_p for r in results], dtype=float)
    cell.n = len(results)
    cell.episode_ep = [float(x) for x in eps]
    cell.mean_ep = float(eps.mean())
    cell.std = float(eps.std(ddof=1)) if len(eps) > 1 else 0.0
    cell.aggregate_ep = aggregate_ep(results)
    cell.degenerate = int(sum(r.degenerate for r in results))
    cell.mean_s_activations = float(np.mean([r.s_agent_activations for r in results]))
    return cell


def evaluate_method(
    graph, bank, config: ExperimentConfig, method: str, steps: int, seed: int,
    policy: ApproximatorParams | None = None, value: ApproximatorParams | None = None,
) -> list[EpisodeResult]:
    spec = method_spec(method)
    cfg = method_config(config.agent, method, steps)
    return play(
        graph, bank, config.sim, config.population, cfg, eval_seeds(seed, config.eval_episodes),
        policy, value, mode="eval", selector=spec.selector,
    )


def run_cell(graph, bank, config: ExperimentConfig, method: str, steps: int, seed: int) -> Cell:
    cell = Cell(method, int(steps), int(seed))
    try:
        policy = value = None
        if method_spec(method).trained:
            tr = train_method(graph, bank, config, method, steps, seed)
            policy, value = tr.policy, tr.value
            tail = tr.episode_ep[-100:]
            cell.train_final_ep = float(np.mean(tail))
        summarize(cell, evaluate_method(graph, bank, config, method, steps, seed, policy, value))
    except (DLELPError, ArithmeticError, ValueError) as exc:
        log.error("cell %s/%d/%d failed: %s", method, steps, seed, exc)
        cell.error = f"{type(exc).__name__}: {exc}"
        cell.n = 0
    log.info("cell %s steps=%d seed=%d mean_ep=%s", method, steps, seed, cell.mean_ep)
    return cell


def attach_pvalues(rows: list[Cell], reference: str, resamples: int) -> None:
    ref = {(c.steps, c.seed): c for c in rows if c.method == reference}
    for c in rows:
        r = ref.get((c.steps, c.seed))
        if c.method == reference or r is None or c.error or r.error:
            continue
        diffs = np.asarray(r.episode_ep) - np.asarray(c.episode_ep)
        c.p_value = sign_flip_pvalue(diffs, resamples, seed=_derived(c.seed, c.steps, TEST_STREAM))
        c.t_pvalue = paired_t_pvalue(r.episode_ep, c.episode_ep)


def provenance(config: ExperimentConfig, graph: ConceptGraph, bank, source_info: dict, notes: list[str]) -> dict:
    # where the report goes and how many threads ran it do not change its content
    recorded = {k: v for k, v in config.to_dict().items() if k not in ("output_dir", "threads")}
    return {
        "config": recorded,
        "config_hash": config.digest(),
        "seeds": list(config.seeds),
        "version": __version__,
        "graph": {
            **source_info,
            "concepts": graph.n,
            "prerequisites": len(graph.prereq_edges),
            "similarities": len(graph.sim_edges),
            "exercises": sum(len(v) for v in bank.values()),
        },
        "notes": notes,
    }


def base_notes(config: ExperimentConfig) -> list[str]:
    notes = [
        "p_value: two-sided paired sign-flip permutation test against the reference method; "
        "t_pvalue: paired t-test on the same differences, for comparability.",
        "E_p of a learner whose goals were all mastered at the start is the flagged sentinel 1.0.",
        "aggregate_ep pools gains over all learners; mean_ep averages per-learner E_p.",
    ]
    if config.records:
        rs = load_records(config.records)
        fit = fit_tracker(rs)
        notes.append(
            f"records {config.records}: {rs.learners} learners, {rs.records} records, "
            f"positive rate {rs.positive_rate:.4f}, {rs.malformed} malformed; tracker decay fitted on the first "
            f"60% of each log = {fit.decay} (held-out Brier {fit.brier:.4f} over {fit.scored} records). "
            "The simulated learners keep their configured tracker; full reproduction on real data is out of scope."
        )
    else:
        notes.append("Tracker: first-60% train split is a no-op for simulated learners (nothing to fit).")
    return notes


def run_experiment(config: ExperimentConfig, environment=None) -> Report:
    """Train where needed, evaluate on shared seeded sessions, attach paired tests.

    A failing cell records its error and the rest of the grid still runs.
    """
    graph, bank, info = environment if environment is not None else load_environment(config.graph)
    notes = base_notes(config)
    tasks = [(m, s, seed) for m in config.methods for s in config.steps for seed in config.seeds]

    def one(task):
        return run_cell(graph, bank, config, *task)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(one, tasks))
    else:
        rows = [one(t) for t in tasks]
    rows.sort(key=lambda c: c.key)
    attach_pvalues(rows, config.reference, config.permutation_resamples)
    return Report(rows, provenance(config, graph, bank, info, notes))
