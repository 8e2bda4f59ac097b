"""Seed inputs: identity-value instantiation (IVI) and small recursive
instantiation (SRI).

Both strategies draw constructor choices from the same dedicated stream
(``SeedRng.ctor``) so that SRI with ``alpha == 0`` reproduces IVI bit for bit
when both are driven by equal seeds.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from .values import (
    Arr, Array, Bool, Boolean, Char, CharVal, Composite, Descriptors, FLOAT_KINDS,
    NULL, Number, Numeric, Obj, Ref, Str, String, TypeDescriptor, Value, int_range,
    resolve,
)

IDENTITY_CHAR = " "
PRINTABLE = "".join(chr(c) for c in range(0x20, 0x7F))
DISTRIBUTIONS = ("normal", "uniform", "uniform_positive")


class InstantiationError(Exception):
    """No value of the requested type can be built within the depth cap."""


@dataclass(frozen=True)
class SeedStrategy:
    """How seeds are produced.

    ``distribution`` selects the numeric sampler for SRI: ``normal`` is
    N(0, alpha/3), ``uniform`` is [-alpha, alpha) and ``uniform_positive`` is
    [0, alpha). Lengths of strings and arrays are always uniform on [0, alpha).
    """

    kind: str = "sri"
    alpha: float = 256
    distribution: str = "normal"
    depth_cap: int = 4
    seed: int = 0
    char_pool: str = "printable"

    def __post_init__(self):
        if self.kind not in ("ivi", "sri"):
            raise ValueError(f"unknown seed strategy {self.kind!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.depth_cap < 1:
            raise ValueError("depth_cap must be >= 1")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.char_pool not in ("printable", "unicode"):
            raise ValueError(f"unknown char pool {self.char_pool!r}")

    def to_json(self) -> dict:
        return {
            "strategy": self.kind, "alpha": self.alpha, "distribution": self.distribution,
            "depth_cap": self.depth_cap, "seed": self.seed, "char_pool": self.char_pool,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SeedStrategy":
        return cls(
            kind=d.get("strategy", "sri"), alpha=d.get("alpha", 256),
            distribution=d.get("distribution", "normal"), depth_cap=d.get("depth_cap", 4),
            seed=d.get("seed", 0), char_pool=d.get("char_pool", "printable"),
        )


@dataclass
class SeedRng:
    """Two independent streams: constructor choices and sampled payloads."""

    ctor: random.Random
    value: random.Random

    @classmethod
    def from_seed(cls, seed: int) -> "SeedRng":
        return cls(random.Random(f"ctor:{seed}"), random.Random(f"value:{seed}"))


# --------------------------------------------------------------------------
# termination analysis for depth-capped recursion


def _terminating_ctors(t: Composite, registry: Descriptors | None) -> list[int]:
    """Constructors that can be instantiated without unbounded recursion."""
    ok: dict[str, bool] = {}

    def term(d, visiting):
        if isinstance(d, Ref):
            if d.nullable:
                return True
            d = resolve(d, registry)
        if isinstance(d, Array):
            return True  # empty arrays terminate
        if isinstance(d, Composite):
            if d.name in ok:
                return ok[d.name]
            if d.name in visiting:
                return False
            res = any(all(term(p, visiting | {d.name}) for p in c) for c in d.constructors)
            ok[d.name] = res
            return res
        return True

    return [i for i, c in enumerate(t.constructors)
            if all(term(p, frozenset({t.name})) for p in c)]


def _choose_ctor(t: Composite, depth: int, depth_cap: int, rng: SeedRng, registry) -> int:
    if depth < depth_cap:
        return rng.ctor.randrange(len(t.constructors))
    allowed = _terminating_ctors(t, registry)
    if not allowed:
        raise InstantiationError(f"{t.name} has no terminating constructor at depth {depth}")
    return allowed[rng.ctor.randrange(len(allowed))]


# --------------------------------------------------------------------------
# IVI


def ivi(t: TypeDescriptor, rng: SeedRng, registry: Descriptors | None = None,
        depth_cap: int = 4, _depth: int = 0) -> Value:
    """The identity element of ``t``, built recursively through constructors."""
    if isinstance(t, Ref):
        if t.nullable and _depth >= depth_cap:
            return NULL
        return ivi(resolve(t, registry), rng, registry, depth_cap, _depth)
    if isinstance(t, Numeric):
        return Number.of(t.kind, 0)
    if isinstance(t, Boolean):
        return Bool(False)
    if isinstance(t, Char):
        return CharVal(IDENTITY_CHAR)
    if isinstance(t, String):
        return Str("")
    if isinstance(t, Array):
        return Arr(t.element, ())
    if isinstance(t, Composite):
        k = _choose_ctor(t, _depth, depth_cap, rng, registry)
        return Obj(t.name, k, tuple(ivi(p, rng, registry, depth_cap, _depth + 1)
                                    for p in t.constructors[k]))
    raise TypeError(f"not a descriptor: {t!r}")


# --------------------------------------------------------------------------
# SRI


def _r_num(rng: random.Random, lo: int, hi: int) -> int:
    """Uniform integer in [lo, hi); an empty range collapses to lo."""
    return rng.randrange(lo, hi) if hi > lo else lo


def sample_numeric(kind: str, strategy: SeedStrategy, rng: random.Random) -> Number:
    a = strategy.alpha
    if strategy.distribution == "normal":
        x = rng.gauss(0.0, a / 3.0)
    elif strategy.distribution == "uniform":
        x = rng.uniform(-a, a)
    else:
        x = rng.uniform(0, a)
    if kind in FLOAT_KINDS:
        return Number.of(kind, x)
    lo, hi = int_range(kind)
    return Number.of(kind, min(max(int(round(x)), lo), hi))


def _sample_char(strategy: SeedStrategy, rng: random.Random) -> str:
    if strategy.char_pool == "printable":
        return PRINTABLE[rng.randrange(len(PRINTABLE))]
    while True:
        c = rng.randrange(0x110000)
        if not 0xD800 <= c <= 0xDFFF:
            return chr(c)


def sri(t: TypeDescriptor, strategy: SeedStrategy, rng: SeedRng,
        registry: Descriptors | None = None, _depth: int = 0) -> Value:
    """A small random value of ``t`` bounded by ``strategy.alpha``.

    With ``alpha == 0`` every sampled range is empty and the result is the
    identity element, consuming the constructor stream exactly like :func:`ivi`.
    """
    cap = strategy.depth_cap
    if isinstance(t, Ref):
        if t.nullable and _depth >= cap:
            return NULL
        return sri(resolve(t, registry), strategy, rng, registry, _depth)
    if strategy.alpha == 0 and not isinstance(t, (Composite, Array)):
        return ivi(t, rng, registry, cap, _depth)
    n_max = int(strategy.alpha) if strategy.alpha == int(strategy.alpha) else int(strategy.alpha) + 1
    if isinstance(t, Numeric):
        return sample_numeric(t.kind, strategy, rng.value)
    if isinstance(t, Boolean):
        return Bool(rng.value.random() < 0.5)
    if isinstance(t, Char):
        return CharVal(_sample_char(strategy, rng.value))
    if isinstance(t, String):
        n = _r_num(rng.value, 0, n_max)
        return Str("".join(_sample_char(strategy, rng.value) for _ in range(n)))
    if isinstance(t, Array):
        # past the depth cap arrays take their terminating (empty) branch
        n = _r_num(rng.value, 0, n_max) if _depth < cap else 0
        return Arr(t.element, tuple(sri(t.element, strategy, rng, registry, _depth + 1)
                                    for _ in range(n)))
    if isinstance(t, Composite):
        k = _choose_ctor(t, _depth, cap, rng, registry)
        return Obj(t.name, k, tuple(sri(p, strategy, rng, registry, _depth + 1)
                                    for p in t.constructors[k]))
    raise TypeError(f"not a descriptor: {t!r}")


def instantiate(t: TypeDescriptor, strategy: SeedStrategy, rng: SeedRng,
                registry: Descriptors | None = None) -> Value:
    if strategy.kind == "ivi":
        return ivi(t, rng, registry, strategy.depth_cap)
    return sri(t, strategy, rng, registry)


def seed_individual(params: Sequence[TypeDescriptor], strategy: SeedStrategy, rng: SeedRng,
                    registry: Descriptors | None = None) -> tuple[Value, ...]:
    return tuple(instantiate(p, strategy, rng, registry) for p in params)


def seed_population(params: Sequence[TypeDescriptor], strategy: SeedStrategy, pi: int,
                    rng: SeedRng | None = None, registry: Descriptors | None = None,
                    max_attempts: int | None = None) -> list[tuple[Value, ...]]:
    """``pi`` argument tuples, skipping individuals that fail to instantiate.

    The engine adds the time budget; here the only bound is ``max_attempts``
    (default ``20 * pi``), so the result may be shorter than ``pi``.
    """
    if pi < 1:
        raise ValueError("population size must be >= 1")
    rng = rng or SeedRng.from_seed(strategy.seed)
    attempts = max_attempts if max_attempts is not None else 20 * pi
    out: list[tuple[Value, ...]] = []
    while len(out) < pi and attempts > 0:
        attempts -= 1
        try:
            out.append(seed_individual(params, strategy, rng, registry))
        except InstantiationError:
            continue
    return out
