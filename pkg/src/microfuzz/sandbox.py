"""Watchdog-supervised execution of measurements in a persistent child process.

The child is forked once and reused for every measurement of a job. A call
that overruns ``lam`` is first interrupted inside the child by an alarm; if
the child does not answer within a short grace period (the target is stuck
in native code, or the alarm was swallowed), it is killed and a fresh child
is forked for the next call.
"""
from __future__ import annotations

import multiprocessing as mp
from typing import Sequence

from .clock import make_clock
from .errors import ConfigurationError, HarnessError
from .measure import (
    MeasureContext, Outcome, Threw, TimedOut, measure_call, pin_cpu,
)
from .registry import Registry, TargetEntry, load_registry
from .values import Value

GRACE = 0.25


def apply_pinning(ctx: MeasureContext, mode: str) -> str:
    """Pin according to ``mode`` ("require", "auto" or "off"); returns a status note."""
    if mode == "off":
        return "pinning disabled"
    try:
        cpu = pin_cpu(ctx)
    except ConfigurationError as e:
        if mode == "require":
            raise
        return f"unpinned: {e}"
    return f"pinned to CPU {cpu}"


def _child_main(conn, registry: Registry, clock_spec: dict, pinning: str):
    ctx = MeasureContext(clock=make_clock(clock_spec))
    try:
        note = apply_pinning(ctx, pinning)
    except ConfigurationError as e:
        conn.send(("fatal", str(e)))
        return
    conn.send(("ready", note))
    while True:
        try:
            msg = conn.recv()
        except (EOFError, KeyboardInterrupt):
            return
        op = msg[0]
        try:
            if op == "measure":
                _, target, args, lam = msg
                conn.send(("ok", measure_call(ctx, registry[target], args, lam)))
            elif op == "build":
                _, target, args = msg
                try:
                    registry[target].materialize(args)
                    conn.send(("ok", None))
                except HarnessError:
                    raise
                except Exception as e:
                    conn.send(("ok", f"{type(e).__name__}: {e}"[:200]))
            elif op == "exit":
                return
            else:
                conn.send(("harness", f"unknown op {op!r}"))
        except HarnessError as e:
            conn.send(("harness", str(e)))


class Sandbox:
    """Measurement runner backed by a forked child and a parent-side watchdog."""

    def __init__(self, registry: Registry | str, lam: float, clock_spec: dict | None = None,
                 pinning: str = "auto", grace: float = GRACE):
        self.registry = load_registry(registry) if isinstance(registry, str) else registry
        self.lam = lam
        self.clock_spec = clock_spec or {"kind": "real"}
        self.pinning = pinning
        self.grace = grace
        self.spawns = 0
        self.kills = 0
        self.note = ""
        self.proc = None
        self.conn = None
        self._spawn()

    def _spawn(self):
        ctx = mp.get_context("fork")
        parent, child = ctx.Pipe()
        self.proc = ctx.Process(target=_child_main, name="microfuzz-sandbox",
                                args=(child, self.registry, self.clock_spec, self.pinning))
        self.proc.start()
        child.close()
        self.conn = parent
        self.spawns += 1
        kind, note = self.conn.recv()
        if kind == "fatal":
            self._reap()
            raise ConfigurationError(note)
        self.note = note

    def _reap(self):
        if self.proc is not None and self.proc.is_alive():
            self.proc.kill()
        if self.proc is not None:
            self.proc.join(timeout=5)
        if self.conn is not None:
            self.conn.close()

    def _restart(self):
        self.kills += 1
        self._reap()
        self._spawn()

    def _call(self, msg, timeout):
        """Send one request; None means the child overran or died."""
        try:
            self.conn.send(msg)
            if not self.conn.poll(timeout):
                self._restart()
                return None
            kind, payload = self.conn.recv()
        except (EOFError, BrokenPipeError, ConnectionResetError, OSError):
            self._restart()
            return ("crashed", None)
        if kind == "harness":
            raise HarnessError(payload)
        return kind, payload

    def measure(self, entry: TargetEntry | str, args: Sequence[Value]) -> Outcome:
        target = entry if isinstance(entry, str) else entry.id
        reply = self._call(("measure", target, tuple(args), self.lam), self.lam + self.grace)
        if reply is None:
            return TimedOut(self.lam)
        if reply[0] == "crashed":
            return Threw("sandbox process died", stage="crash")
        return reply[1]

    def build(self, entry: TargetEntry | str, args: Sequence[Value]) -> str | None:
        """Run only the argument constructors; returns an error string or None."""
        target = entry if isinstance(entry, str) else entry.id
        reply = self._call(("build", target, tuple(args)), self.lam + self.grace)
        if reply is None:
            return "constructor timed out"
        if reply[0] == "crashed":
            return "sandbox process died"
        return reply[1]

    def close(self):
        if self.proc is None:
            return
        try:
            self.conn.send(("exit",))
        except (OSError, BrokenPipeError):
            pass
        self.proc.join(timeout=1)
        self._reap()
        self.proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class InProcessRunner:
    """Same interface as :class:`Sandbox` without isolation (tests, tracing).

    A target stuck outside Python bytecode cannot be interrupted here.
    """

    def __init__(self, registry: Registry, lam: float | None = None, clock_spec: dict | None = None):
        self.registry = registry
        self.lam = lam
        self.ctx = MeasureContext(clock=make_clock(clock_spec))
        self.spawns = 1
        self.kills = 0
        self.note = "in-process"

    def measure(self, entry, args) -> Outcome:
        entry = self.registry[entry] if isinstance(entry, str) else entry
        return measure_call(self.ctx, entry, args, self.lam)

    def build(self, entry, args) -> str | None:
        entry = self.registry[entry] if isinstance(entry, str) else entry
        try:
            entry.materialize(args)
        except HarnessError:
            raise
        except Exception as e:
            return f"{type(e).__name__}: {e}"[:200]
        return None

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False
