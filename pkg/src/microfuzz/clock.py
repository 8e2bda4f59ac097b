"""Cycle counters and wall clocks.

On x86-64 the cycle source is a serialized ``rdtsc`` (``lfence; rdtsc``)
emitted into an executable page and called through ctypes. Elsewhere, or if
the page cannot be mapped executable, a monotonic nanosecond clock stands in
and ``hz`` is exactly 1e9.
"""
from __future__ import annotations

import ctypes
import mmap
import platform
import statistics
import time
from dataclasses import dataclass


class CalibrationError(RuntimeError):
    pass


# lfence; rdtsc; shl rdx, 32; or rax, rdx; ret
_RDTSC_CODE = bytes([0x0F, 0xAE, 0xE8, 0x0F, 0x31, 0x48, 0xC1, 0xE2, 0x20, 0x48, 0x09, 0xD0, 0xC3])


def _build_rdtsc():
    if platform.machine().lower() not in ("x86_64", "amd64"):
        return None
    try:
        buf = mmap.mmap(-1, mmap.PAGESIZE,
                        prot=mmap.PROT_READ | mmap.PROT_WRITE | mmap.PROT_EXEC)
    except (OSError, AttributeError, ValueError):
        return None
    buf.write(_RDTSC_CODE)
    addr = ctypes.addressof(ctypes.c_char.from_buffer(buf))
    fn = ctypes.CFUNCTYPE(ctypes.c_uint64)(addr)
    fn._page = buf  # keep the mapping alive as long as the function
    try:
        a, b = fn(), fn()
    except Exception:
        return None
    return fn if b >= a else None


class Clock:
    """Wall time for budgets plus a cycle counter for fitness."""

    source = "abstract"
    hz: float | None = None

    def now(self) -> float:
        raise NotImplementedError

    def cycles(self) -> int:
        raise NotImplementedError

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)

    def spec(self) -> dict:
        return {"kind": "real"}


class RealClock(Clock):
    def __init__(self, prefer_tsc: bool = True):
        self._tsc = _build_rdtsc() if prefer_tsc else None
        if self._tsc is not None:
            self.source = "rdtsc"
            self.cycles = self._tsc  # bound straight to the stub: one less frame
        else:
            self.source = "monotonic"
            self.hz = 1e9
            self.cycles = time.perf_counter_ns

    def now(self) -> float:
        return time.monotonic()


class FakeClock(Clock):
    """Deterministic clock for reproducible campaigns.

    Every read advances time by a fixed step, so runtimes and budgets depend
    only on how many times the engine looks at the clock.
    """

    source = "fake"

    def __init__(self, step: float = 1e-3, cycle_step: int = 1000, hz: float = 1e9):
        self.step = step
        self.cycle_step = cycle_step
        self.hz = hz
        self._t = 0.0
        self._c = 0

    def now(self) -> float:
        t = self._t
        self._t += self.step
        return t

    def cycles(self) -> int:
        c = self._c
        self._c += self.cycle_step
        return c

    def sleep(self, seconds: float) -> None:
        self._t += seconds

    def spec(self) -> dict:
        return {"kind": "fake", "step": self.step, "cycle_step": self.cycle_step, "hz": self.hz}


def make_clock(spec: dict | None = None) -> Clock:
    spec = spec or {"kind": "real"}
    if spec.get("kind") == "fake":
        return FakeClock(spec.get("step", 1e-3), spec.get("cycle_step", 1000), spec.get("hz", 1e9))
    return RealClock(prefer_tsc=spec.get("tsc", True))


def cycles_to_seconds(cycles: int | float, clock_hz: float) -> float:
    if clock_hz <= 0:
        raise ValueError("clock_hz must be positive")
    return cycles / clock_hz


@dataclass(frozen=True)
class Calibration:
    hz: float
    spread: float
    trials: tuple[float, ...]


_CALIBRATED: dict[str, Calibration] = {}


def calibrate(clock: Clock, trials: int = 9, interval: float = 0.1,
              max_spread: float = 0.05, cache: bool = True) -> Calibration:
    """Cycles per second from ``trials`` sleeps of ``interval`` seconds (median).

    Raises :class:`CalibrationError` when (max - min) / median exceeds
    ``max_spread``; that usually means frequency scaling is active.
    """
    if clock.hz is not None:
        return Calibration(clock.hz, 0.0, (clock.hz,))
    key = f"{clock.source}:{trials}:{interval}"
    if cache and key in _CALIBRATED:
        return _CALIBRATED[key]
    rates = []
    for _ in range(trials):
        c0, t0 = clock.cycles(), time.perf_counter()
        time.sleep(interval)
        c1, t1 = clock.cycles(), time.perf_counter()
        rates.append((c1 - c0) / (t1 - t0))
    hz = statistics.median(rates)
    spread = (max(rates) - min(rates)) / hz
    if spread > max_spread:
        raise CalibrationError(
            f"cycle counter unstable: spread {spread:.1%} over {trials} trials; "
            "pin the CPU frequency (performance governor, no turbo) or set clock_hz"
        )
    cal = Calibration(hz, spread, tuple(rates))
    if cache:
        _CALIBRATED[key] = cal
    return cal


def busy_wait(seconds: float) -> None:
    end = time.perf_counter() + seconds
    while time.perf_counter() < end:
        pass
