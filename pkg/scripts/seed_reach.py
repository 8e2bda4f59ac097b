#!/usr/bin/env python3
"""How often a single phase-1 job flags each planted target, per strategy.

Skips the coordinator and phase 2: each (target, strategy, seed) runs one
``fuzz_method`` in a fresh sandbox and records the stop reason and generation.
"""
import argparse
import statistics

from microfuzz.clock import RealClock, calibrate
from microfuzz.config import profile
from microfuzz.corpus import REGISTRY
from microfuzz.engine import fuzz_method
from microfuzz.sandbox import Sandbox

TARGETS = ["ac/colliding_table_insert", "ac/comment_scan", "ac/decimal_add", "ac/regex_split"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--profile", default="desk")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--target", action="append", help="default: the planted targets")
    args = ap.parse_args()

    base = profile(args.profile, clock_hz=calibrate(RealClock()).hz)
    for target in args.target or TARGETS:
        for strategy in ("ivi", "sri"):
            cfg = base.with_strategy(strategy)
            gens, hits = [], 0
            for seed in range(args.seeds):
                with Sandbox(REGISTRY, cfg.lam) as sb:
                    rep = fuzz_method(REGISTRY[target], cfg, sb, seed=seed)
                if rep.stop_reason == "witness":
                    hits += 1
                    gens.append(rep.generations)
            med = statistics.median(gens) if gens else float("nan")
            print(f"{target:28s} {strategy}  flagged {hits}/{args.seeds}  median generation {med}",
                  flush=True)


if __name__ == "__main__":
    main()
