"""Witness manifests, isolated replay validation, triage traces and export.

Validation launches ``python -O -m microfuzz.replay`` with hooks compiled
out, so the replay runs the plain corpus code. Wall time is counted from the
child's START line (interpreter and import startup are reported separately
as ``startup``), CPU time is the child's rusage total minus its CPU clock at
START.
"""
from __future__ import annotations

import json
import os
import queue
import signal
import subprocess
import sys
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .measure import trace_call, write_trace
from .registry import Registry, load_registry
from .replay import MANIFEST_VERSION
from .values import DecodeError, dumps, from_json

KILL_FACTOR = 10
STARTUP_CAP = 60.0


class SynthesisError(Exception):
    pass


@dataclass
class WitnessManifest:
    registry: str
    target: str
    args: list
    phase1: dict = field(default_factory=dict)
    version: int = MANIFEST_VERSION
    id: str = ""

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "WitnessManifest":
        return cls(registry=d["registry"], target=d["target"], args=d["args"],
                   phase1=d.get("phase1", {}), version=d.get("version"), id=d.get("id", ""))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False))
        return path

    @classmethod
    def load(cls, path) -> "WitnessManifest":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def decode_args(self, registry: Registry | None = None):
        registry = registry or load_registry(self.registry)
        entry = registry[self.target]
        if len(self.args) != len(entry.params):
            raise DecodeError(f"{self.target} takes {len(entry.params)} args")
        return entry, [from_json(a, p, registry.descriptors) for a, p in zip(self.args, entry.params)]


def synthesize(candidate, registry_spec: str, config: dict | None = None,
               registry: Registry | None = None) -> WitnessManifest:
    """Build a self-contained manifest; the args must decode against the signature."""
    m = WitnessManifest(
        registry=registry_spec, target=candidate.target, args=list(candidate.args),
        phase1={"cycles": candidate.cycles, "seconds": candidate.seconds,
                "outcome": candidate.outcome, "config": config or {}},
        id=candidate.id,
    )
    try:
        m.decode_args(registry)
        json.dumps(m.to_json())
    except Exception as e:
        raise SynthesisError(f"{candidate.id}: {e}") from e
    return m


# --------------------------------------------------------------------------
# validation


@dataclass
class Verdict:
    witness: str
    target: str
    verdict: str  # Confirmed | Rejected
    reason: str | None  # NotCpuBound | TooFast | ReplayError
    wall: float | None = None
    cpu: float | None = None
    cpu_bound_ratio: float | None = None
    killed: bool = False
    startup: float | None = None
    sigma: float = 0.0
    threshold: float = 0.9
    replayed_args: str | None = None
    detail: str = ""

    @property
    def confirmed(self) -> bool:
        return self.verdict == "Confirmed"

    def to_json(self) -> dict:
        return asdict(self)


def _reader(stream, q: queue.Queue):
    for line in iter(stream.readline, ""):
        q.put(line.rstrip("\n"))
    q.put(None)


def replay_env() -> dict:
    env = dict(os.environ)
    env["MICROFUZZ_HOOKS"] = "0"
    env["PYTHONPATH"] = os.pathsep.join(p for p in sys.path if p)
    env.pop("PYTHONOPTIMIZE", None)
    return env


def validate(manifest: WitnessManifest | str | Path, sigma: float,
             cpu_bound_threshold: float = 0.9, python: str | None = None,
             kill_factor: float = KILL_FACTOR) -> Verdict:
    """Replay in a fresh optimized interpreter and apply the CPU-bound + wall rule."""
    if not isinstance(manifest, WitnessManifest):
        path = Path(manifest)
    else:
        path = None
    tmp = None
    if path is None:
        import tempfile
        fd, tmp = tempfile.mkstemp(suffix=".json", prefix="witness-")
        os.close(fd)
        manifest.save(tmp)
        path = Path(tmp)
    try:
        m = manifest if isinstance(manifest, WitnessManifest) else WitnessManifest.load(path)
        return _run_replay(path, m, sigma, cpu_bound_threshold, python or sys.executable, kill_factor)
    finally:
        if tmp:
            os.unlink(tmp)


def _run_replay(path: Path, m: WitnessManifest, sigma: float, threshold: float,
                python: str, kill_factor: float) -> Verdict:
    base = dict(witness=m.id, target=m.target, sigma=sigma, threshold=threshold)

    def reject(reason, detail="", **kw):
        return Verdict(verdict="Rejected", reason=reason, detail=detail, **base, **kw)

    t_spawn = time.perf_counter()
    try:
        proc = subprocess.Popen([python, "-O", "-m", "microfuzz.replay", str(path)],
                                stdout=subprocess.PIPE, stderr=subprocess.DEVNULL,
                                stdin=subprocess.DEVNULL, env=replay_env(), text=True)
    except OSError as e:
        return reject("ReplayError", f"replay failed to start: {e}")
    lines: queue.Queue = queue.Queue()
    threading.Thread(target=_reader, args=(proc.stdout, lines), daemon=True).start()

    replayed = None
    cpu_at_start = None
    t_start = None
    try:
        while t_start is None:
            remaining = STARTUP_CAP - (time.perf_counter() - t_spawn)
            line = lines.get(timeout=max(remaining, 0.01))
            if line is None:
                proc.wait()
                return reject("ReplayError", "replay exited before START")
            if line.startswith("ERROR"):
                proc.wait()
                return reject("ReplayError", line[6:])
            if line.startswith("ARGS "):
                replayed = line[5:]
            elif line.startswith("START "):
                t_start = time.perf_counter()
                cpu_at_start = float(line[6:])
    except queue.Empty:
        proc.kill()
        proc.wait()
        return reject("ReplayError", "replay did not start in time")
    startup = t_start - t_spawn

    cap = kill_factor * sigma
    killed = False
    while True:
        pid, status, usage = os.wait4(proc.pid, os.WNOHANG)
        if pid:
            t_end = time.perf_counter()
            break
        if time.perf_counter() - t_start >= cap:
            os.kill(proc.pid, signal.SIGKILL)
            _, status, usage = os.wait4(proc.pid, 0)
            t_end = time.perf_counter()
            killed = True
            break
        time.sleep(min(0.002, sigma / 20))
    proc.returncode = os.waitstatus_to_exitcode(status)

    wall = t_end - t_start
    cpu = max(0.0, usage.ru_utime + usage.ru_stime - cpu_at_start)
    ratio = cpu / wall if wall > 0 else 0.0
    stats = dict(wall=wall, cpu=cpu, cpu_bound_ratio=ratio, killed=killed, startup=startup,
                 replayed_args=replayed)
    if not killed and proc.returncode != 0:
        tail = ""
        while True:
            try:
                line = lines.get(timeout=1)
            except queue.Empty:
                break
            if line is None:
                break
            tail = line
        return reject("ReplayError", tail or f"exit code {proc.returncode}", **stats)
    if replayed is not None and replayed != dumps(m.args):
        return reject("ReplayError", "replayed arguments differ from the manifest", **stats)
    if wall < sigma:
        return reject("TooFast", **stats)
    if ratio < threshold:
        return reject("NotCpuBound", **stats)
    return Verdict(verdict="Confirmed", reason=None, **base, **stats)


# --------------------------------------------------------------------------
# triage


def triage_trace(manifest: WitnessManifest, out_path, max_events: int = 2000,
                 lam: float | None = 5.0, registry: Registry | None = None):
    """Write the first ``max_events`` trace events of the manifest's call as JSONL."""
    entry, args = manifest.decode_args(registry)
    events = trace_call(entry, args, max_events=max_events, lam=lam)
    write_trace(events, out_path)
    return events


# --------------------------------------------------------------------------
# standalone program export


def _callable_ref(fn) -> tuple[str, str]:
    fn = getattr(fn, "__wrapped__", fn)
    owner = getattr(fn, "__self__", None)
    if isinstance(owner, type):  # classmethod
        return owner.__module__, f"{owner.__qualname__}.{fn.__name__}"
    return fn.__module__, fn.__qualname__


def _literal(v, registry: Registry, imports: dict) -> str:
    from .values import Arr, Bool, CharVal, Null, Number, Obj, Str

    if isinstance(v, Number):
        x = v.value
        if isinstance(x, float) and (x != x or x in (float("inf"), float("-inf"))):
            return f"float({str(x)!r})"
        return repr(x)
    if isinstance(v, Bool):
        return repr(v.flag)
    if isinstance(v, CharVal):
        return repr(v.ch)
    if isinstance(v, Str):
        return repr(v.text)
    if isinstance(v, Null):
        return "None"
    if isinstance(v, Arr):
        return "[" + ", ".join(_literal(x, registry, imports) for x in v.items) + "]"
    if isinstance(v, Obj):
        module, qual = _callable_ref(registry.factories[v.name][v.ctor])
        imports.setdefault(module, set()).add(qual.split(".")[0])
        return f"{qual}(" + ", ".join(_literal(a, registry, imports) for a in v.args) + ")"
    raise TypeError(f"not a value: {v!r}")


def export_program(manifest: WitnessManifest, registry: Registry | None = None) -> str:
    """Python source that calls the target on the manifest's literal arguments."""
    registry = registry or load_registry(manifest.registry)
    entry, args = manifest.decode_args(registry)
    imports: dict[str, set[str]] = {}
    literals = [_literal(a, registry, imports) for a in args]
    t_module, t_qual = _callable_ref(entry.fn)
    lines = [
        "#!/usr/bin/env python3",
        f'"""Standalone replay of witness {manifest.id or "<unnamed>"} for {manifest.target}.',
        "",
        "Runs the call once and prints wall and CPU seconds. Set MICROFUZZ_HOOKS=0",
        'to run without measurement hooks."""',
        "import time",
        "",
    ]
    for module in sorted(imports):
        lines.append(f"from {module} import {', '.join(sorted(imports[module]))}")
    lines.append(f"from {t_module} import {t_qual} as target")
    lines += ["", "ARGS = ["]
    lines += [f"    {lit}," for lit in literals]
    lines += [
        "]",
        "",
        "",
        "def main():",
        "    wall, cpu = time.perf_counter(), time.process_time()",
        "    target(*ARGS)",
        "    print(f\"wall={time.perf_counter() - wall:.3f}s cpu={time.process_time() - cpu:.3f}s\")",
        "",
        "",
        'if __name__ == "__main__":',
        "    main()",
        "",
    ]
    return "\n".join(lines)


def validate_all(manifests: Sequence[WitnessManifest], sigma: float, threshold: float = 0.9,
                 parallel: int = 1) -> list[Verdict]:
    if parallel <= 1:
        return [validate(m, sigma, threshold) for m in manifests]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(parallel) as pool:
        return list(pool.map(lambda m: validate(m, sigma, threshold), manifests))
