#!/usr/bin/env python3
"""Train the full system at steps=10 and compare against untrained arms.

Writes the per-batch curve as CSV and prints quartile means of per-episode E_p.
"""
import argparse
import csv
import dataclasses
from pathlib import Path

import numpy as np

from dlelp.harness.config import ExperimentConfig
from dlelp.harness.experiment import evaluate_method, load_environment, train_method


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/learning_curve.csv")
    args = ap.parse_args()

    cfg = dataclasses.replace(ExperimentConfig(), train_episodes=args.episodes)
    graph, bank, _ = load_environment(cfg.graph)
    tr = train_method(graph, bank, cfg, "full", args.steps, args.seed)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["batch", "episodes", "mean_ep"])
        for i, v in enumerate(tr.curve):
            w.writerow([i, min((i + 1) * cfg.agent.batch_episodes, args.episodes), v])

    eps = np.asarray(tr.episode_ep)
    q = len(eps) // 4
    print(f"training quartiles: first {eps[:q].mean():.3f}  last {eps[-q:].mean():.3f}")
    learned = evaluate_method(graph, bank, cfg, "full", args.steps, args.seed, tr.policy, tr.value)
    print(f"{'full (trained)':>18}: {np.mean([r.e_p for r in learned]):.3f}")
    for m in ("random+s", "prereq_greedy+s", "random", "prereq_greedy"):
        res = evaluate_method(graph, bank, cfg, m, args.steps, args.seed)
        print(f"{m:>18}: {np.mean([r.e_p for r in res]):.3f}")
    print(f"curve written to {out}")


if __name__ == "__main__":
    main()
