"""Campaign coordination: target enumeration, worker pool, phase 2 and reports.

The coordinator forks N workers and feeds them (target, strategy) jobs FIFO
over pipes. Each worker probes its environment before a job, fuzzes the
target through its own :class:`~microfuzz.sandbox.Sandbox`, and sends the
whole report back; only the coordinator writes to the results store. A
worker that dies mid-job is replaced and the job is retried once. A worker
whose probe fails is retired and its job handed to a fresh worker.
"""
from __future__ import annotations

import collections
import csv
import fnmatch
import io
import logging
import multiprocessing as mp
import os
import signal
from dataclasses import asdict, dataclass, field, replace
from multiprocessing.connection import wait
from pathlib import Path
from typing import Sequence

from .clock import make_clock, calibrate
from .config import CampaignSpec
from .engine import FuzzReport, fuzz_method, probe_environment
from .errors import ConfigurationError
from .registry import Registry, Signature, load_registry
from .sandbox import Sandbox
from .store import ResultsStore, safe_name
from .values import dumps
from .witness import SynthesisError, synthesize, validate

log = logging.getLogger("microfuzz")

MAX_ATTEMPTS = 2  # first run plus one requeue after a crash
MAX_POISONINGS = 3
SUMMARY_COLUMNS = ("strategy", "witnesses_detected", "witnesses_confirmed", "methods_covered",
                   "fuzzing_hours", "tests_per_hour")


class UsageError(Exception):
    pass


def enumerate_targets(registry: Registry | Sequence, include: Sequence[str] = ("*",),
                      exclude: Sequence[str] = ()) -> list[Signature]:
    """Signatures in lexicographic target-id order, filtered by glob patterns."""
    entries = list(registry)
    if not entries:
        raise ConfigurationError("registry has no targets")
    counts = collections.Counter(e.id for e in entries)
    dups = sorted(k for k, n in counts.items() if n > 1)
    if dups:
        raise ConfigurationError(f"duplicate target ids: {dups}")
    out = []
    for e in sorted(entries, key=lambda e: e.id):
        if include and not any(fnmatch.fnmatchcase(e.id, g) for g in include):
            continue
        if any(fnmatch.fnmatchcase(e.id, g) for g in exclude):
            continue
        out.append(e.signature)
    return out


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) // 2)


@dataclass
class Job:
    target: str
    strategy: str
    attempts: int = 0
    poisonings: int = 0

    @property
    def id(self) -> str:
        return f"{self.strategy}/{self.target}"


# --------------------------------------------------------------------------
# worker side


def _leak_descriptors():
    import resource
    soft, _ = resource.getrlimit(resource.RLIMIT_NOFILE)
    resource.setrlimit(resource.RLIMIT_NOFILE, (min(soft, 256), resource.getrlimit(resource.RLIMIT_NOFILE)[1]))
    leaked = []
    try:
        while True:
            leaked.append(open(os.devnull))
    except OSError:
        pass
    return leaked


def _worker_main(conn, spec: CampaignSpec, registry: Registry):
    signal.signal(signal.SIGINT, signal.SIG_IGN)
    leaked = []
    while True:
        try:
            job = conn.recv()
        except EOFError:
            return
        if job is None:
            return
        env = probe_environment()
        if not env.healthy:
            conn.send(("poisoned", job, list(env.failures)))
            return
        # fault injection for tests: die on the first n attempts of a job
        if job.attempts <= spec.faults.get("kill_worker", {}).get(job.target, 0):
            os.kill(os.getpid(), signal.SIGKILL)
        config = spec.config.with_strategy(job.strategy)
        clock = make_clock(spec.clock)
        with Sandbox(registry, config.lam, spec.clock, spec.pinning) as sb:
            report = fuzz_method(registry[job.target], config, sb, clock, seed=spec.seed)
            report.notes.append(sb.note)
            if sb.kills:
                report.notes.append(f"sandbox restarted {sb.kills} time(s)")
        conn.send(("done", job, report))
        if job.target in spec.faults.get("leak_fds", ()):
            leaked.extend(_leak_descriptors())


@dataclass
class _Slot:
    index: int
    generation: int
    proc: mp.Process
    conn: object
    job: Job | None = None


# --------------------------------------------------------------------------
# coordinator


@dataclass
class CampaignSummary:
    rows: list[dict] = field(default_factory=list)
    jobs: int = 0
    failed_jobs: list[str] = field(default_factory=list)
    respawns: int = 0
    requeues: int = 0
    wall: float = 0.0
    clock_hz: float | None = None
    store: str = ""
    results: dict = field(default_factory=dict)  # target -> strategy -> outcome

    def row(self, strategy: str) -> dict | None:
        return next((r for r in self.rows if r["strategy"] == strategy), None)

    def to_json(self) -> dict:
        return asdict(self)


class Coordinator:
    def __init__(self, spec: CampaignSpec, registry: Registry | None = None):
        self.spec = spec
        self.registry = registry or load_registry(spec.registry)
        self.store = ResultsStore(spec.store, fresh=True)
        self.clock = make_clock(spec.clock)
        self.t0 = self.clock.now()
        self.slots: dict[int, _Slot] = {}
        self.generations = collections.Counter()
        self.respawns = 0
        self.requeues = 0
        self.failed: list[str] = []
        self.reports: list[FuzzReport] = []

    def event(self, kind: str, **fields):
        self.store.append("events", {"event": kind, "t": round(self.clock.now() - self.t0, 6), **fields})

    def _spawn(self, index: int) -> _Slot:
        ctx = mp.get_context("fork")
        parent, child = ctx.Pipe()
        proc = ctx.Process(target=_worker_main, args=(child, self.spec, self.registry),
                           name=f"microfuzz-worker-{index}")
        proc.start()
        child.close()
        self.generations[index] += 1
        slot = _Slot(index, self.generations[index], proc, parent)
        self.slots[index] = slot
        return slot

    def _retire(self, slot: _Slot, reason: str):
        try:
            slot.conn.close()
        except OSError:
            pass
        if slot.proc.is_alive():
            slot.proc.kill()
        slot.proc.join(timeout=5)
        self.event("worker_retired", worker=slot.index, generation=slot.generation, reason=reason)
        self.respawns += 1
        new = self._spawn(slot.index)
        self.event("worker_spawned", worker=new.index, generation=new.generation)

    def _record(self, report: FuzzReport):
        self.reports.append(report)
        self.store.extend("testcases", (t.to_json() for t in report.test_cases))
        self.store.extend("witnesses", (w.to_json() for w in report.witnesses))
        self.store.append("coverage", report.coverage_record())

    def phase1(self, jobs: list[Job]):
        queue = collections.deque(jobs)
        n = min(self.spec.workers or default_workers(), max(1, len(queue)))
        for i in range(n):
            s = self._spawn(i)
            self.event("worker_spawned", worker=s.index, generation=s.generation)
        try:
            while queue or any(s.job for s in self.slots.values()):
                for s in sorted(self.slots.values(), key=lambda s: s.index):
                    if s.job is None and queue:
                        job = queue.popleft()
                        job.attempts += 1
                        s.job = job
                        self.event("job_start", job=job.id, worker=s.index, generation=s.generation,
                                   attempt=job.attempts)
                        s.conn.send(job)
                busy = [s for s in self.slots.values() if s.job is not None]
                ready = wait([s.conn for s in busy] + [s.proc.sentinel for s in busy])
                for s in busy:
                    if s.conn in ready or s.proc.sentinel in ready:
                        self._service(s, queue)
        finally:
            for s in self.slots.values():
                try:
                    s.conn.send(None)
                except OSError:
                    pass
            for s in self.slots.values():
                s.proc.join(timeout=5)
                if s.proc.is_alive():
                    s.proc.kill()

    def _service(self, slot: _Slot, queue):
        job = slot.job
        msg = None
        try:
            if slot.conn.poll():
                msg = slot.conn.recv()
        except (EOFError, OSError):
            msg = None
        if msg is None:
            if slot.proc.is_alive():
                return  # spurious wakeup
            slot.job = None
            self.event("worker_crash", job=job.id, worker=slot.index, exitcode=slot.proc.exitcode)
            if job.attempts < MAX_ATTEMPTS:
                self.requeues += 1
                queue.appendleft(job)
                self.event("job_requeued", job=job.id, attempt=job.attempts)
            else:
                self.failed.append(job.id)
                self.event("job_failed", job=job.id, reason="worker crashed twice")
            self._retire(slot, "crash")
            return
        kind = msg[0]
        slot.job = None
        if kind == "done":
            report = msg[2]
            self._record(report)
            self.event("job_done", job=job.id, worker=slot.index, generation=slot.generation,
                       stop=report.stop_reason,
                       tests=len(report.test_cases), witnesses=len(report.witnesses))
        elif kind == "poisoned":
            job.attempts -= 1
            job.poisonings += 1
            self.event("worker_poisoned", job=job.id, worker=slot.index,
                       generation=slot.generation, failures=msg[2])
            if job.poisonings >= MAX_POISONINGS:
                self.failed.append(job.id)
                self.event("job_failed", job=job.id, reason="poisoned workers")
            else:
                queue.appendleft(job)
            self._retire(slot, "poisoned")

    def phase2(self, sigma: float, threshold: float) -> list[dict]:
        verdicts = []
        for report in self.reports:
            for w in report.witnesses:
                try:
                    m = synthesize(w, self.spec.registry, self.spec.config.to_json(), self.registry)
                except SynthesisError as e:
                    self.event("synthesis_failed", witness=w.id, error=str(e))
                    continue
                m.save(self.store.manifest_path(w.id))
                v = validate(m, sigma, threshold)
                rec = v.to_json()
                self.store.append("verdicts", rec)
                self.event("validated", witness=w.id, verdict=v.verdict, reason=v.reason)
                verdicts.append(rec)
        return verdicts


def _resolve_hz(spec: CampaignSpec) -> CampaignSpec:
    if spec.config.clock_hz:
        return spec
    clock = make_clock(spec.clock)
    hz = clock.hz if clock.hz else calibrate(clock).hz
    return replace(spec, config=replace(spec.config, clock_hz=hz))


def run_campaign(spec: CampaignSpec, registry: Registry | None = None) -> CampaignSummary:
    spec = _resolve_hz(spec)
    coord = Coordinator(spec, registry)
    sigs = enumerate_targets(coord.registry, spec.include, spec.exclude)
    jobs = [Job(sig.target, s) for sig in sigs for s in spec.strategies]
    coord.event("campaign_start", jobs=len(jobs), strategies=spec.strategies, seed=spec.seed,
                config=spec.config.to_json())
    if jobs:
        coord.phase1(jobs)
    verdicts = coord.phase2(spec.config.sigma, spec.config.cpu_bound_threshold) if spec.validate else []
    summary = summarize(coord.reports, verdicts, spec.strategies)
    summary.jobs = len(jobs)
    summary.failed_jobs = coord.failed
    summary.respawns = coord.respawns
    summary.requeues = coord.requeues
    summary.wall = round(coord.clock.now() - coord.t0, 6)
    summary.clock_hz = spec.config.clock_hz
    summary.store = str(coord.store.root)
    coord.event("campaign_done", failed=len(coord.failed))
    coord.store.write_summary(summary.to_json())
    return summary


def summarize(reports: Sequence[FuzzReport], verdicts: Sequence[dict],
              strategies: Sequence[str]) -> CampaignSummary:
    confirmed = {v["witness"] for v in verdicts if v["verdict"] == "Confirmed"}
    by_witness = {v["witness"]: v for v in verdicts}
    summary = CampaignSummary()
    for strategy in strategies:
        mine = [r for r in reports if r.strategy == strategy]
        hours = sum(r.elapsed for r in mine) / 3600.0
        tests = sum(1 for r in mine for t in r.test_cases if t.outcome == "completed")
        witnesses = [w for r in mine for w in r.witnesses]
        summary.rows.append({
            "strategy": strategy,
            "witnesses_detected": len(witnesses),
            "witnesses_confirmed": sum(1 for w in witnesses if w.id in confirmed),
            "methods_covered": sum(1 for r in mine if r.covered),
            "fuzzing_hours": round(hours, 6),
            "tests_per_hour": round(tests / hours, 3) if hours > 0 else 0.0,
        })
    for r in reports:
        w = r.witnesses[0] if r.witnesses else None
        v = by_witness.get(w.id) if w else None
        summary.results.setdefault(r.target, {})[r.strategy] = {
            "covered": r.covered, "stop": r.stop_reason, "flagged": w is not None,
            "verdict": (v["verdict"] if v else None), "reason": (v["reason"] if v else None),
        }
    return summary


# --------------------------------------------------------------------------
# reports


def report(store: ResultsStore | str, fmt: str, out_dir: str | Path | None = None) -> list[Path]:
    store = store if isinstance(store, ResultsStore) else ResultsStore(store)
    out = Path(out_dir) if out_dir else store.root / "report"
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        return _report_csv(store, out)
    if fmt == "text":
        path = out / "digest.txt"
        path.write_text(digest(store))
        return [path]
    raise UsageError(f"unknown report format {fmt!r} (csv or text)")


def _report_csv(store: ResultsStore, out: Path) -> list[Path]:
    written = []
    by_job: dict[str, list[dict]] = collections.defaultdict(list)
    for t in store.read("testcases"):
        by_job[f"{t['strategy']}/{t['target']}"].append(t)
    fitness_dir = out / "fitness"
    fitness_dir.mkdir(exist_ok=True)
    for job, tests in sorted(by_job.items()):
        path = fitness_dir / f"{safe_name(job)}.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["test_index", "cycles", "flagged"])
            for t in sorted(tests, key=lambda t: t["index"]):
                w.writerow([t["index"], "" if t["cycles"] is None else t["cycles"], int(t["flagged"])])
        written.append(path)
    summary = store.read_summary() or {}
    path = out / "summary.csv"
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in summary.get("rows", []):
            w.writerow(row)
    written.append(path)
    return written


def digest(store: ResultsStore) -> str:
    verdicts = {v["witness"]: v for v in store.read("verdicts")}
    buf = io.StringIO()
    witnesses = store.read("witnesses")
    buf.write(f"{len(witnesses)} witness(es) in {store.root}\n")
    for w in witnesses:
        preview = dumps(w["args"])
        if len(preview) > 72:
            preview = preview[:69] + "..."
        v = verdicts.get(w["id"])
        status = "not validated" if v is None else (
            v["verdict"] if v["verdict"] == "Confirmed" else f"Rejected ({v['reason']})")
        runtime = f"{w['seconds']:.3f}s" + (" (timeout)" if w["outcome"] == "timeout" else "")
        buf.write(f"\n{w['target']} [{w['strategy']}] {status}\n")
        buf.write(f"  runtime: {runtime}  generation: {w['generation']}  input size: {w['value_size']} bytes\n")
        buf.write(f"  args: {preview}\n")
        if v is not None and v.get("wall") is not None:
            buf.write(f"  replay: wall {v['wall']:.3f}s cpu/wall {v['cpu_bound_ratio']:.2f}"
                      f"{' (killed at cap)' if v['killed'] else ''}\n")
    summary = store.read_summary()
    if summary:
        buf.write("\n" + ",".join(SUMMARY_COLUMNS) + "\n")
        for row in summary.get("rows", []):
            buf.write(",".join(str(row[c]) for c in SUMMARY_COLUMNS) + "\n")
    return buf.getvalue()
