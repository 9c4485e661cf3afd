#!/usr/bin/env python3
"""Interleaved [neighbor, neighbor, target] against blocked [target, target, target].

Prints mean final target mastery over seeded learners for a sweep of confusion factors.
"""
import argparse

import numpy as np

from dlelp.harness.discrimination import compare_schedules


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sessions", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--factors", type=float, nargs="+", default=list(np.round(np.linspace(0, 1, 11), 2)))
    args = ap.parse_args()
    print(f"{'cf':>5} {'interleaved':>12} {'blocked':>8} {'advantage':>10}")
    for cf in args.factors:
        c = compare_schedules(cf, args.sessions, args.seed)
        print(f"{cf:5.2f} {c.interleaved:12.4f} {c.blocked:8.4f} {c.advantage:+10.4f}")


if __name__ == "__main__":
    main()
