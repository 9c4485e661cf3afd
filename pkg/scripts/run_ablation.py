#!/usr/bin/env python3
"""Full system against the no-similarity-agent arm on the default 50-KC synthetic graph.

    python3 scripts/run_ablation.py --out out/ablation --threads 4
"""
import argparse
import dataclasses
import time

from dlelp.harness.config import ExperimentConfig
from dlelp.harness.experiment import run_experiment
from dlelp.harness.report import emit_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="experiment config JSON (defaults otherwise)")
    ap.add_argument("--out", default="out/ablation")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg = dataclasses.replace(cfg, methods=("full", "no_s"), reference="full", threads=args.threads, output_dir=args.out)
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    emit_report(report, cfg.output_dir)
    print(f"{'steps':>5} {'seed':>5} {'full':>7} {'no_s':>7} {'diff':>7} {'p':>8}")
    for steps in cfg.steps:
        for seed in cfg.seeds:
            f, n = report.cell("full", steps, seed), report.cell("no_s", steps, seed)
            if f.error or n.error:
                print(f"{steps:>5} {seed:>5} error: {f.error or n.error}")
                continue
            print(f"{steps:>5} {seed:>5} {f.mean_ep:7.3f} {n.mean_ep:7.3f} {f.mean_ep - n.mean_ep:+7.3f} {n.p_value:8.4f}")
    print(f"wall time {time.perf_counter() - t0:.1f}s, report in {cfg.output_dir}")


if __name__ == "__main__":
    main()
