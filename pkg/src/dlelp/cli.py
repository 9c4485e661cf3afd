"""Command-line entry point: ``dlelp <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import (
    ConfigError,
    DLELPError,
    GraphFormatError,
    IngestionError,
    InvalidInputError,
    MalformedResponseError,
    NoExerciseError,
)
from .graph_gen.backends import HttpBackend, HttpBackendConfig, PlantedOntology, StubBackend
from .graph_gen.pipeline import build_graph, explain_path, summarize_communities
from .policy_core import load_checkpoint, save_checkpoint
from .harness.config import TRAINED, ExperimentConfig
from .harness.experiment import (
    Cell,
    Report,
    attach_pvalues,
    base_notes,
    evaluate_method,
    load_environment,
    load_valid_graph,
    provenance,
    run_experiment,
    summarize,
    train_method,
)
from .harness.report import emit_report
from .harness.synthetic import SyntheticGraphSpec, bank_to_dict, generate_synthetic_graph

log = logging.getLogger("dlelp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
DATA_ERRORS = (ConfigError, GraphFormatError, IngestionError, InvalidInputError, MalformedResponseError, NoExerciseError)
SIMULATE_METHODS = ("random", "prereq_greedy", "random+s", "prereq_greedy+s")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers -----------------------------------------------------------------


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def _backend(args, names_source: PlantedOntology | None):
    if args.backend == "http":
        if not args.base_url or not args.model:
            raise UsageError("--backend http needs --base-url and --model")
        return HttpBackend(HttpBackendConfig(args.base_url, args.model, api_key_env=args.api_key_env))
    if names_source is None:
        raise UsageError("--backend stub needs --ontology")
    return StubBackend(names_source)


def _print_rows(report: Report) -> None:
    for c in report.rows:
        mean = "error" if c.error else f"{c.mean_ep:.4f}"
        p = "" if c.p_value is None else f" p={c.p_value:.4f}"
        print(f"{c.method:>16} steps={c.steps:<3} seed={c.seed:<4} n={c.n:<5} mean_ep={mean}{p}")


# -- subcommands -------------------------------------------------------------


def cmd_gen_graph(args) -> int:
    out = Path(args.out)
    if args.spec is not None:
        spec = SyntheticGraphSpec(**json.loads(Path(args.spec).read_text(encoding="utf-8"))) if args.spec else SyntheticGraphSpec()
        graph, bank = generate_synthetic_graph(spec, args.seed or 0)
        graph.save(out)
        ex_path = out.with_suffix(".exercises.json")
        ex_path.write_text(json.dumps(bank_to_dict(bank), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"wrote {out} ({graph.n} concepts) and {ex_path}")
        return EXIT_OK
    ontology = PlantedOntology.load(args.ontology) if args.ontology else None
    if args.names:
        names = [ln.strip() for ln in Path(args.names).read_text(encoding="utf-8").splitlines() if ln.strip()]
    elif ontology is not None:
        names = list(ontology.concepts)
    else:
        raise UsageError("gen-graph needs one of --spec, --names or --ontology")
    backend = _backend(args, ontology)
    result = build_graph(names, backend, args.chunk_size, args.overlap, max_in_flight=args.threads or 1)
    result.graph.save(out)
    summaries = out.with_suffix(".communities.json")
    summaries.write_text(json.dumps([s.to_dict() for s in result.summaries], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(
        f"wrote {out}: {result.graph.n} concepts, {len(result.graph.prereq_edges)} prerequisites, "
        f"{len(result.graph.sim_edges)} similarities from {len(result.chunks)} chunks"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    graph, bank, _ = load_environment(cfg.graph)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    methods = [m for m in cfg.methods if m in TRAINED]
    if not methods:
        raise ConfigError(f"no trainable method among {cfg.methods}; choose from {TRAINED}")
    for method in methods:
        for steps in cfg.steps:
            for seed in cfg.seeds:
                tr = train_method(graph, bank, cfg, method, steps, seed)
                path = out / f"{method}_steps{steps}_seed{seed}.json"
                extra = {"method": method, "steps": steps, "seed": seed, "config_hash": cfg.digest(), "curve": tr.curve}
                save_checkpoint(path, tr.policy, tr.value, tr.policy_opt, tr.value_opt, tr.seed, tr.episodes, extra)
                print(f"{path}: final batch mean E_p {tr.curve[-1]:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    ckpt = load_checkpoint(args.checkpoint)
    meta = ckpt["extra"]
    try:
        method, steps, seed = meta["method"], int(meta["steps"]), int(meta["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"checkpoint {args.checkpoint} lacks method/steps/seed metadata") from exc
    if args.seed is not None:
        seed = args.seed
    graph, bank, info = load_environment(cfg.graph)
    if ckpt["policy"].sizes[0] != 2 * graph.n:
        raise ConfigError("checkpoint input size does not match the configured graph")
    cell = summarize(Cell(method, steps, seed), evaluate_method(graph, bank, cfg, method, steps, seed, ckpt["policy"], ckpt["value"]))
    report = Report([cell], provenance(cfg, graph, bank, info, base_notes(cfg) + [f"checkpoint: {args.checkpoint}"]))
    attach_pvalues(report.rows, method, cfg.permutation_resamples)
    emit_report(report, cfg.output_dir)
    _print_rows(report)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = replace(_config(args), methods=("full", "no_s"), reference="full")
    report = run_experiment(cfg)
    paths = emit_report(report, cfg.output_dir)
    _print_rows(report)
    print(f"wrote {paths[0]} and {paths[1]}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    """Heuristic arms under each confusion factor (no training)."""
    base = _config(args)
    factors = args.confusion_factors or [base.sim.confusion_factor]
    env = load_environment(base.graph)
    for cf in factors:
        cfg = replace(
            base,
            sim=replace(base.sim, confusion_factor=cf),
            methods=SIMULATE_METHODS,
            reference="prereq_greedy+s",
            output_dir=str(Path(base.output_dir) / f"cf_{cf:g}"),
        )
        report = run_experiment(cfg, environment=env)
        emit_report(report, cfg.output_dir)
        print(f"confusion_factor={cf:g}")
        _print_rows(report)
    return EXIT_OK


def _read_path(path_file: str) -> list[tuple[int, int]]:
    try:
        data = json.loads(Path(path_file).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read path file {path_file}: {exc}") from exc
    steps = data["path"] if isinstance(data, dict) and "path" in data else data
    out = []
    for item in steps:
        if isinstance(item, dict):
            out.append((int(item["exercise_id"]), int(item["concept_id"])))
        elif isinstance(item, (list, tuple)):
            out.append((int(item[0]), int(item[1])))
        else:
            out.append((-1, int(item)))
    return out


def cmd_explain(args) -> int:
    graph = load_valid_graph(args.graph)
    path = _read_path(args.path_file)
    if args.backend == "stub" and not args.ontology:
        # a graph-derived ontology is enough for the stub's deterministic replies
        names = graph.names()
        ontology = PlantedOntology(
            tuple(names),
            frozenset((names[a], names[b]) for a, b in graph.prereq_edges),
            {frozenset((names[a], names[b])): w for (a, b), w in graph.sim_edges.items()},
        )
    else:
        ontology = PlantedOntology.load(args.ontology) if args.ontology else None
    backend = _backend(args, ontology)
    summaries = summarize_communities(graph, backend)
    for (ex, kc), text in zip(path, explain_path(path, summaries, graph, backend)):
        print(json.dumps({"exercise_id": ex, "concept_id": kc, "explanation": text}))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def global_flags(top: bool) -> argparse.ArgumentParser:
        # subcommands accept the global flags too; SUPPRESS keeps them from resetting top-level values
        g = argparse.ArgumentParser(add_help=False)
        d = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
        g.add_argument("--seed", type=int, default=d(None), help="override the configured seed list with one seed")
        g.add_argument("--threads", type=int, default=d(None), help="worker threads for cells or extraction")
        g.add_argument("--log-level", default=d("WARNING"), choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        return g

    common = global_flags(top=False)
    p = _Parser(prog="dlelp", description="Learning-path recommendation with prerequisite and similarity agents.", parents=[global_flags(top=True)])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def backend_flags(sp):
        sp.add_argument("--backend", choices=["stub", "http"], default="stub")
        sp.add_argument("--ontology", help="planted ontology JSON driving the stub backend")
        sp.add_argument("--base-url", help="HTTP backend base URL")
        sp.add_argument("--model", help="HTTP backend model name")
        sp.add_argument("--api-key-env", default="OPENAI_API_KEY", help="environment variable holding the API key")

    g = sub.add_parser("gen-graph", parents=[common], help="build a concept graph (pipeline or synthetic)")
    g.add_argument("--names", help="text file with one concept name per line")
    g.add_argument("--spec", nargs="?", const="", default=None, help="synthetic generator spec JSON (empty for defaults)")
    g.add_argument("--chunk-size", type=int, default=400)
    g.add_argument("--overlap", type=int, default=100)
    g.add_argument("--out", required=True, help="graph JSON to write")
    backend_flags(g)
    g.set_defaults(func=cmd_gen_graph)

    t = sub.add_parser("train", parents=[common], help="train the trainable methods and save checkpoints")
    t.add_argument("--config")
    t.add_argument("--out", help="checkpoint directory (defaults to the config output_dir)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    e.add_argument("--config")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", help="report directory")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", parents=[common], help="full system against the no-similarity-agent arm")
    a.add_argument("--config")
    a.add_argument("--out", help="report directory")
    a.set_defaults(func=cmd_ablate)

    x = sub.add_parser("explain", parents=[common], help="explain each step of a learning path")
    x.add_argument("--path-file", required=True, help="JSON list of concept ids, [exercise, concept] pairs, or an episode")
    x.add_argument("--graph", required=True)
    backend_flags(x)
    x.set_defaults(func=cmd_explain)

    s = sub.add_parser("simulate", parents=[common], help="heuristic arms across confusion factors")
    s.add_argument("--config")
    s.add_argument("--out", help="report directory root")
    s.add_argument("--confusion-factors", type=float, nargs="+")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dlelp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (*DATA_ERRORS, json.JSONDecodeError, FileNotFoundError, KeyError, TypeError) as exc:
        print(f"dlelp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DLELPError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"dlelp: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
