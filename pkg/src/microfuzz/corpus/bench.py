"""Calibration targets for the measurement harness (excluded from campaigns)."""
from __future__ import annotations

from ..values import I32, I64
from .base import REGISTRY


@REGISTRY.target("bench/noop", [])
def noop() -> None:
    return None


@REGISTRY.target("bench/busy_loop", [I64])
def busy_loop(n: int) -> int:
    acc = 0
    for i in range(n):
        acc ^= i
    return acc


@REGISTRY.target("bench/factorial", [I32])
def factorial(n: int) -> int:
    return 1 if n <= 1 else n * factorial(n - 1)


@REGISTRY.target("bench/inner", [])
def inner() -> int:
    return busy_loop.__wrapped__(20_000)


@REGISTRY.target("bench/outer", [])
def outer() -> int:
    # same amount of its own work as inner, so inclusive timing roughly doubles
    return inner() ^ busy_loop.__wrapped__(20_000)
