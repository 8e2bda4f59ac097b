"""Command-line entry point: ``microfuzz <command> ...``.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 campaign
finished with failed jobs.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import load_campaign
from .errors import ConfigurationError
from .orchestrator import UsageError, enumerate_targets, report, run_campaign
from .registry import load_registry
from .store import ResultsStore
from .values import descriptor_to_json
from .witness import WitnessManifest, export_program, triage_trace, validate

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_FAILED_JOBS = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="microfuzz", description="Micro-fuzz typed targets for slow inputs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("enumerate", help="list fuzzable targets")
    e.add_argument("--registry", default="microfuzz.corpus:REGISTRY")
    e.add_argument("--include", action="append", default=None)
    e.add_argument("--exclude", action="append", default=None)
    e.add_argument("--json", action="store_true", help="print signatures as JSON")

    f = sub.add_parser("fuzz", help="run a campaign")
    f.add_argument("--config", required=True)
    f.add_argument("--strategy", choices=("ivi", "sri", "both"), default=None)
    f.add_argument("--store")
    f.add_argument("--seed", type=int)
    f.add_argument("--workers", type=int)
    f.add_argument("--no-validate", action="store_true")

    v = sub.add_parser("validate", help="replay witness manifests")
    v.add_argument("--witness-dir", required=True)
    v.add_argument("--sigma", type=float, help="default: sigma from the manifest's config")
    v.add_argument("--threshold", type=float, default=None)

    r = sub.add_parser("report", help="emit CSV tables or a text digest")
    r.add_argument("--store", required=True)
    r.add_argument("--format", default="csv")
    r.add_argument("--out")

    t = sub.add_parser("trace", help="write a triage trace for a manifest")
    t.add_argument("--manifest", required=True)
    t.add_argument("--max-events", type=int, default=2000)
    t.add_argument("--timeout", type=float, default=5.0)
    t.add_argument("--out")

    x = sub.add_parser("export-program", help="emit a standalone replay script")
    x.add_argument("--manifest", required=True)
    x.add_argument("--out")
    return p


def cmd_enumerate(args) -> int:
    registry = load_registry(args.registry)
    sigs = enumerate_targets(registry, args.include or ["*"], args.exclude or [])
    if args.json:
        print(json.dumps([{"target": s.target, "params": [descriptor_to_json(d) for d in s.params]}
                          for s in sigs], indent=2))
    else:
        for s in sigs:
            print(s.target)
    return EXIT_OK


def cmd_fuzz(args) -> int:
    spec = load_campaign(args.config)
    if args.strategy:
        spec.strategies = ["ivi", "sri"] if args.strategy == "both" else [args.strategy]
    if args.store:
        spec.store = args.store
    if args.seed is not None:
        spec.seed = args.seed
    if args.workers is not None:
        spec.workers = args.workers
    if args.no_validate:
        spec.validate = False
    spec = dataclasses.replace(spec)  # re-run validation after overrides
    summary = run_campaign(spec)
    for row in summary.rows:
        print(", ".join(f"{k}={v}" for k, v in row.items()))
    print(f"store: {summary.store}  jobs: {summary.jobs}  failed: {len(summary.failed_jobs)}")
    return EXIT_FAILED_JOBS if summary.failed_jobs else EXIT_OK


def cmd_validate(args) -> int:
    d = Path(args.witness_dir)
    paths = sorted(p for p in d.glob("*.json"))
    if not paths:
        raise UsageError(f"no manifests in {d}")
    out = d / "verdicts.jsonl"
    with open(out, "a", encoding="utf-8") as f:
        for path in paths:
            m = WitnessManifest.load(path)
            cfg = m.phase1.get("config", {})
            sigma = args.sigma if args.sigma is not None else cfg.get("sigma")
            if sigma is None:
                raise ConfigurationError(f"{path}: no sigma in manifest; pass --sigma")
            threshold = args.threshold if args.threshold is not None else cfg.get("cpu_bound_threshold", 0.9)
            v = validate(path, sigma, threshold)
            f.write(json.dumps(v.to_json(), sort_keys=True) + "\n")
            print(f"{path.name}: {v.verdict}" + (f" ({v.reason})" if v.reason else ""))
    return EXIT_OK


def cmd_report(args) -> int:
    if not Path(args.store).is_dir():
        raise ConfigurationError(f"no store at {args.store}")
    for path in report(ResultsStore(args.store), args.format, args.out):
        print(path)
    return EXIT_OK


def cmd_trace(args) -> int:
    m = WitnessManifest.load(args.manifest)
    out = args.out or str(Path(args.manifest).with_suffix(".trace.jsonl"))
    events = triage_trace(m, out, max_events=args.max_events, lam=args.timeout)
    print(f"{len(events)} events -> {out}")
    return EXIT_OK


def cmd_export(args) -> int:
    src = export_program(WitnessManifest.load(args.manifest))
    if args.out:
        Path(args.out).write_text(src)
    else:
        sys.stdout.write(src)
    return EXIT_OK


COMMANDS = {
    "enumerate": cmd_enumerate, "fuzz": cmd_fuzz, "validate": cmd_validate,
    "report": cmd_report, "trace": cmd_trace, "export-program": cmd_export,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"microfuzz: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, OSError, json.JSONDecodeError, KeyError) as e:
        print(f"microfuzz: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
