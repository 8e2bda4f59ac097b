"""Gated cycle measurement and call tracing for registered targets.

Targets and the internal functions of corpus code are wrapped with
:func:`probe`. A wrapper does nothing but one comparison unless either

* a :class:`MeasureContext` is active and the wrapped function is the
  method under test, in which case the outermost entry records a start
  timestamp and the matching exit stores the inclusive cycle count, or
* a :class:`Tracer` is active, in which case invoke/return events are logged.

Setting ``MICROFUZZ_HOOKS=0`` before import turns :func:`probe` into the
identity, which is how the optimized replay build runs.
"""
from __future__ import annotations

import ctypes
import functools
import json
import os
import signal
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from .clock import Clock, RealClock
from .errors import ConfigurationError, HarnessError

HOOKS_ENABLED = os.environ.get("MICROFUZZ_HOOKS", "1") != "0"


class _State(threading.local):
    ctx: "MeasureContext | None" = None
    tracer: "Tracer | None" = None


_state = _State()


class Interrupted(BaseException):
    """Raised inside a measured or traced call to abandon it."""


class _Deadline(Interrupted):
    pass


class TraceFull(Interrupted):
    pass


# --------------------------------------------------------------------------
# measurement context


@dataclass
class MeasureContext:
    clock: Clock = field(default_factory=RealClock)
    method_under_test: str | None = None
    t_start: int = 0
    t_depth: int = 0
    last_runtime: int | None = None
    pinned_cpu: int | None = None
    records: int = 0  # depth-0 completions stored since creation


def set_method_under_test(ctx: MeasureContext, target: str) -> None:
    ctx.method_under_test = target


def clear_analysis(ctx: MeasureContext) -> None:
    ctx.last_runtime = None
    ctx.t_depth = 0


def get_runtime(ctx: MeasureContext) -> int | None:
    return ctx.last_runtime


def activate(ctx: MeasureContext | None) -> MeasureContext | None:
    """Install ``ctx`` for the current thread; returns the previous one."""
    prev = _state.ctx
    _state.ctx = ctx
    return prev


# --------------------------------------------------------------------------
# probes


def probe(arg: Callable | str | None = None):
    """Mark a function boundary. Use as ``@probe`` or ``@probe("name")``."""

    def deco(fn, label=None):
        if not HOOKS_ENABLED:
            return fn
        label = label or f"{fn.__module__}.{fn.__qualname__}"

        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            st = _state
            ctx = st.ctx
            if st.tracer is None and (ctx is None or ctx.method_under_test != label):
                return fn(*args, **kwargs)
            return _instrumented(fn, label, ctx, st.tracer, args, kwargs)

        wrapper.probe_name = label
        return wrapper

    if callable(arg):
        return deco(arg)
    return lambda fn: deco(fn, arg)


def _instrumented(fn, label, ctx, tracer, args, kwargs):
    measuring = ctx is not None and ctx.method_under_test == label
    if measuring:
        if ctx.t_depth == 0:
            ctx.t_start = ctx.clock.cycles()
        ctx.t_depth += 1
    if tracer is not None:
        tracer.invoke(label, args)
    try:
        result = fn(*args, **kwargs)
    except Exception as e:
        if tracer is not None:
            tracer.ret(label, None, raised=type(e).__name__)
        raise
    finally:
        if measuring:
            ctx.t_depth -= 1
            if ctx.t_depth == 0:
                ctx.last_runtime = max(1, ctx.clock.cycles() - ctx.t_start)
                ctx.records += 1
    if tracer is not None:
        tracer.ret(label, result)
    return result


# --------------------------------------------------------------------------
# outcomes


@dataclass(frozen=True)
class Completed:
    cycles: int
    summary: str = ""

    def __post_init__(self):
        if self.cycles <= 0:
            raise ValueError("a completed measurement has a positive cycle count")


@dataclass(frozen=True)
class Threw:
    error: str
    stage: str = "invoke"  # or "construct" when an argument constructor raised


@dataclass(frozen=True)
class TimedOut:
    budget: float


Outcome = Completed | Threw | TimedOut


def _summary(x: Any, limit: int = 80) -> str:
    try:
        s = repr(x)
    except Exception:
        s = f"<{type(x).__name__}>"
    return s if len(s) <= limit else s[: limit - 3] + "..."


class _alarm:
    """SIGALRM-based deadline; a no-op off the main thread or without a budget."""

    def __init__(self, seconds: float | None):
        self.seconds = seconds
        self.armed = False

    def __enter__(self):
        if self.seconds and threading.current_thread() is threading.main_thread():
            def handler(signum, frame):
                raise _Deadline()
            self.prev = signal.signal(signal.SIGALRM, handler)
            signal.setitimer(signal.ITIMER_REAL, self.seconds)
            self.armed = True
        return self

    def __exit__(self, *exc):
        if self.armed:
            signal.setitimer(signal.ITIMER_REAL, 0)
            signal.signal(signal.SIGALRM, self.prev)
        return False


def measure_call(ctx: MeasureContext, entry, args: Sequence, lam: float | None = None):
    """Invoke ``entry`` on ``args`` and time it as the method under test.

    ``args`` are :mod:`microfuzz.values` values; they are materialized into host
    objects first (constructor calls are not part of the measurement). An
    exception from the target or an argument constructor yields ``Threw``;
    exceeding ``lam`` seconds yields ``TimedOut``. The in-process deadline
    only interrupts Python code; :class:`microfuzz.sandbox.Sandbox` adds a
    hard kill around it.
    """
    prev = activate(ctx)
    set_method_under_test(ctx, entry.id)
    clear_analysis(ctx)
    try:
        try:
            host = entry.materialize(args)
        except HarnessError:
            raise
        except Exception as e:
            return Threw(_summary(e), stage="construct")
        try:
            with _alarm(lam):
                result = entry.fn(*host)
        except _Deadline:
            clear_analysis(ctx)
            return TimedOut(lam)
        except Exception as e:
            return Threw(_summary(e))
        runtime = get_runtime(ctx)
        if runtime is None:
            raise HarnessError(f"target {entry.id} is not instrumented")
        return Completed(runtime, _summary(result))
    finally:
        activate(prev)


# --------------------------------------------------------------------------
# CPU pinning


def pin_cpu(ctx: MeasureContext, mask: Iterable[int] | None = None, apply: bool = True) -> int:
    """Pin the calling process to the lowest CPU of its affinity mask.

    At least two CPUs are required: one for the method under test, the rest
    for the watchdog and bookkeeping.
    """
    cpus = sorted(set(mask)) if mask is not None else sorted(os.sched_getaffinity(0))
    if len(cpus) < 2:
        raise ConfigurationError(
            f"affinity mask {cpus} exposes {len(cpus)} CPU(s); measurement needs at least 2"
        )
    cpu = cpus[0]
    if apply:
        os.sched_setaffinity(0, {cpu})
    ctx.pinned_cpu = cpu
    return cpu


_libc = None


def current_cpu() -> int:
    """The CPU the calling thread is running on (``sched_getcpu``)."""
    global _libc
    if _libc is None:
        _libc = ctypes.CDLL(None, use_errno=True)
    return _libc.sched_getcpu()


# --------------------------------------------------------------------------
# tracing

_LITERALS = (bool, int, float, type(None))
_STR_LIMIT = 256


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: str  # "invoke", "return", or a terminal marker: "error", "timeout", "truncated"
    target: str
    params: tuple = ()
    object_id: int | None = None

    def to_json(self) -> dict:
        d = {"seq": self.seq, "kind": self.kind, "target": self.target, "params": list(self.params)}
        if self.object_id is not None:
            d["object_id"] = self.object_id
        return d


class Tracer:
    def __init__(self, max_events: int | None = None):
        self.events: list[TraceEvent] = []
        self.max_events = max_events
        self._ids: dict[int, int] = {}
        self._keep: list[Any] = []  # pins traced objects so id() values stay unique

    def object_id(self, obj) -> int:
        key = id(obj)
        if key not in self._ids:
            self._ids[key] = len(self._ids) + 1
            self._keep.append(obj)
        return self._ids[key]

    def literal(self, x):
        if isinstance(x, _LITERALS):
            return x
        if isinstance(x, str):
            return x if len(x) <= _STR_LIMIT else x[:_STR_LIMIT] + "…"
        return {"id": self.object_id(x)}

    def _emit(self, ev: TraceEvent):
        if self.max_events is not None and len(self.events) >= self.max_events:
            raise TraceFull()
        self.events.append(ev)

    def invoke(self, label: str, args: tuple):
        params = tuple(self.literal(a) for a in args)
        oid = self.object_id(args[0]) if label.endswith(".__init__") and args else None
        self._emit(TraceEvent(len(self.events), "invoke", label, params, oid))

    def ret(self, label: str, result, raised: str | None = None):
        if raised is not None:
            self._emit(TraceEvent(len(self.events), "return", label, ({"raised": raised},)))
            return
        oid = None
        params: tuple = ()
        if result is not None:
            lit = self.literal(result)
            if isinstance(lit, dict):
                oid = lit["id"]
            else:
                params = (lit,)
        self._emit(TraceEvent(len(self.events), "return", label, params, oid))

    def mark(self, kind: str, detail: str):
        self.events.append(TraceEvent(len(self.events), kind, detail))


def trace_call(entry, args: Sequence, max_events: int | None = 10_000,
               lam: float | None = None) -> list[TraceEvent]:
    """Run ``entry`` under a tracer and return the event stream.

    Argument construction is traced too, so every composite ID first shows up
    in its constructor's invoke event. Stops early with a terminal marker when
    the target raises, ``lam`` expires, or ``max_events`` is reached.
    """
    if not HOOKS_ENABLED:
        raise HarnessError("tracing needs hooks enabled (MICROFUZZ_HOOKS=1)")
    tracer = Tracer(max_events)
    prev_tracer, prev_ctx = _state.tracer, _state.ctx
    _state.tracer, _state.ctx = tracer, None
    try:
        with _alarm(lam):
            host = entry.materialize(args)
            entry.fn(*host)
    except TraceFull:
        tracer.mark("truncated", f"stopped after {max_events} events")
    except _Deadline:
        tracer.mark("timeout", f"interrupted after {lam}s")
    except HarnessError:
        raise
    except Exception as e:
        tracer.mark("error", _summary(e))
    finally:
        _state.tracer, _state.ctx = prev_tracer, prev_ctx
    return tracer.events


def write_trace(events: Sequence[TraceEvent], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ev in events:
            f.write(json.dumps(ev.to_json(), ensure_ascii=False) + "\n")
