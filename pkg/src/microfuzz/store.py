"""Append-only JSONL results store.

Layout of a store directory::

    testcases.jsonl  witnesses.jsonl  verdicts.jsonl  coverage.jsonl  events.jsonl
    summary.json     manifests/<witness>.json

Only the campaign coordinator writes, so appends never interleave.
"""
from __future__ import annotations

import json
import re
import shutil
from pathlib import Path

STREAMS = ("testcases", "witnesses", "verdicts", "coverage", "events")


def _line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"


def safe_name(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", s).strip("_")


class ResultsStore:
    def __init__(self, root, fresh: bool = False):
        self.root = Path(root)
        if fresh:
            for s in STREAMS:
                (self.root / f"{s}.jsonl").unlink(missing_ok=True)
            (self.root / "summary.json").unlink(missing_ok=True)
            shutil.rmtree(self.root / "manifests", ignore_errors=True)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "manifests").mkdir(exist_ok=True)

    def path(self, stream: str) -> Path:
        if stream not in STREAMS:
            raise KeyError(f"unknown stream {stream!r}")
        return self.root / f"{stream}.jsonl"

    def append(self, stream: str, record: dict) -> None:
        with open(self.path(stream), "a", encoding="utf-8") as f:
            f.write(_line(record))

    def extend(self, stream: str, records) -> None:
        with open(self.path(stream), "a", encoding="utf-8") as f:
            for r in records:
                f.write(_line(r))

    def read(self, stream: str) -> list[dict]:
        p = self.path(stream)
        if not p.exists():
            return []
        with open(p, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

    def write_summary(self, summary: dict) -> None:
        (self.root / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True, ensure_ascii=False) + "\n")

    def read_summary(self) -> dict | None:
        p = self.root / "summary.json"
        return json.loads(p.read_text()) if p.exists() else None

    def manifest_path(self, witness_id: str) -> Path:
        return self.root / "manifests" / f"{safe_name(witness_id)}.json"

    def integrity_problems(self) -> list[str]:
        """Dangling references between verdicts, witnesses and test cases."""
        problems = []
        tests = {t["id"] for t in self.read("testcases")}
        witnesses = {}
        for w in self.read("witnesses"):
            witnesses[w["id"]] = w
            if w["test_case"] not in tests:
                problems.append(f"witness {w['id']} -> missing test case {w['test_case']}")
        for v in self.read("verdicts"):
            if v["witness"] not in witnesses:
                problems.append(f"verdict for unknown witness {v['witness']}")
        return problems
