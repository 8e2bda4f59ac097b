"""Slow but not CPU-bound: must be flagged by phase 1 and rejected by replay."""
import time

from ..values import I32
from .base import REGISTRY

SLEEP_CAP_MS = 5000


@REGISTRY.target("trap/sleep_trap", [I32], notes="sleeps min(|ms|, 5000) milliseconds")
def sleep_trap(ms: int) -> None:
    time.sleep(min(abs(ms), SLEEP_CAP_MS) / 1000.0)
