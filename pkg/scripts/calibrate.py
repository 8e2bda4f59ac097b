#!/usr/bin/env python3
"""Calibrate the cycle clock and check that busy-loop cycles scale with n."""
import argparse
import statistics

from microfuzz.clock import RealClock, calibrate
from microfuzz.corpus import REGISTRY
from microfuzz.measure import MeasureContext, measure_call
from microfuzz.values import Number


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=15)
    ap.add_argument("--max-exp", type=int, default=7)
    args = ap.parse_args()

    clock = RealClock()
    cal = calibrate(clock)
    print(f"clock source {clock.source}: {cal.hz / 1e9:.3f} GHz")

    ctx = MeasureContext()
    loop = REGISTRY["bench/busy_loop"]
    prev = None
    for e in range(3, args.max_exp + 1):
        n = 10**e
        cycles = [measure_call(ctx, loop, [Number.of("i64", n)]).cycles for _ in range(args.reps)]
        med = statistics.median(cycles)
        ratio = f"x{med / prev:5.1f}" if prev else ""
        print(f"n=10^{e}  median {med:>14,.0f} cycles  {med / cal.hz * 1e3:9.3f} ms  {ratio}")
        prev = med


if __name__ == "__main__":
    main()
