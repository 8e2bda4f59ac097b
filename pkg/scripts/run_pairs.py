#!/usr/bin/env python3
"""Run seeded IVI/SRI campaign pairs over the corpus and tabulate the outcome.

    python3 scripts/run_pairs.py --config configs/desk.json --seeds 10 --out runs/pairs
"""
import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

from microfuzz.clock import RealClock, calibrate
from microfuzz.config import load_campaign
from microfuzz.orchestrator import run_campaign


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default="configs/desk.json")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--out", default="runs/pairs")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()

    base = load_campaign(args.config)
    if not base.config.clock_hz:
        base = replace(base, config=replace(base.config, clock_hz=calibrate(RealClock()).hz))
    out = Path(args.out)
    rows = []
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        spec = replace(base, seed=seed, store=str(out / f"seed{seed}"),
                       strategies=["ivi", "sri"], workers=args.workers or base.workers)
        t0 = time.monotonic()
        s = run_campaign(spec)
        row = {
            "seed": seed,
            "wall": round(time.monotonic() - t0, 1),
            "ivi": s.row("ivi")["witnesses_confirmed"],
            "sri": s.row("sri")["witnesses_confirmed"],
            "results": s.results,
        }
        rows.append(row)
        confirmed = sorted(t for t, r in s.results.items() if r["sri"]["verdict"] == "Confirmed")
        print(f"seed {seed:3d}  ivi={row['ivi']}  sri={row['sri']}  {row['wall']:6.1f}s  "
              f"sri confirmed: {', '.join(confirmed)}", flush=True)

    ge = sum(r["sri"] >= r["ivi"] for r in rows)
    gt = sum(r["sri"] > r["ivi"] for r in rows)
    print(f"\nsri >= ivi in {ge}/{len(rows)} pairs, sri > ivi in {gt}/{len(rows)}")
    targets = sorted({t for r in rows for t in r["results"]})
    print(f"\n{'target':32s} {'ivi':>5s} {'sri':>5s}   (confirmed / flagged)")
    for t in targets:
        cells = []
        for k in ("ivi", "sri"):
            res = [r["results"][t][k] for r in rows if t in r["results"]]
            cells.append(f"{sum(x['verdict'] == 'Confirmed' for x in res)}/{sum(x['flagged'] for x in res)}")
        print(f"{t:32s} {cells[0]:>5s} {cells[1]:>5s}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "pairs.json").write_text(json.dumps(rows, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
