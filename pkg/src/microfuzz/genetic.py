"""Crossover, mutation and generational selection over structured values.

Fitness is the measured cycle count of one invocation and is maximized.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .seedgen import PRINTABLE
from .values import (
    Arr, Array, Bool, Boolean, Char, CharVal, Null, Number, Numeric, Obj, Str, String,
    Value, bit_width,
)


class OperatorError(Exception):
    """Operands do not share a descriptor (an engine bug, not bad input)."""


@dataclass(frozen=True)
class GAParams:
    pi: int = 100
    chi: float = 0.5
    tau: float = 0.01
    epsilon: float = 0.5
    nu: int = 100

    def __post_init__(self):
        for name in ("chi", "tau", "epsilon"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.pi < 2:
            raise ValueError("pi must be >= 2")
        if self.nu < 1:
            raise ValueError("nu must be >= 1")

    def to_json(self) -> dict:
        return {"pi": self.pi, "chi": self.chi, "tau": self.tau,
                "epsilon": self.epsilon, "nu": self.nu}


@dataclass
class Individual:
    args: tuple[Value, ...]
    fitness: int | None = None


# --------------------------------------------------------------------------
# crossover


def cross_bits(a: int, b: int, width: int, offset: int) -> tuple[int, int]:
    """Exchange the bits to the right of ``offset`` (counted from the MSB)."""
    low = (1 << (width - offset)) - 1
    high = ((1 << width) - 1) ^ low
    return (a & high) | (b & low), (b & high) | (a & low)


def crossover_value(x0: Value, x1: Value, rng: random.Random) -> tuple[Value, Value]:
    if isinstance(x0, Null) or isinstance(x1, Null):
        return x0, x1
    if type(x0) is not type(x1):
        raise OperatorError(f"cannot cross {type(x0).__name__} with {type(x1).__name__}")
    if isinstance(x0, Number):
        if x0.kind != x1.kind:
            raise OperatorError(f"cannot cross {x0.kind} with {x1.kind}")
        w = x0.width
        a, b = cross_bits(x0.bits, x1.bits, w, rng.randrange(1, w))
        return Number(x0.kind, a), Number(x0.kind, b)
    if isinstance(x0, (Bool, CharVal)):
        # single-unit payloads: the only cut points keep or swap the whole value
        return (x1, x0) if rng.random() < 0.5 else (x0, x1)
    if isinstance(x0, Str):
        p = rng.randint(0, min(len(x0.text), len(x1.text)))
        return (Str(x0.text[:p] + x1.text[p:]), Str(x1.text[:p] + x0.text[p:]))
    if isinstance(x0, Arr):
        if x0.element != x1.element:
            raise OperatorError("cannot cross arrays of different element types")
        p = rng.randint(0, min(len(x0.items), len(x1.items)))
        return (Arr(x0.element, x0.items[:p] + x1.items[p:]),
                Arr(x0.element, x1.items[:p] + x0.items[p:]))
    if isinstance(x0, Obj):
        if x0.name != x1.name:
            raise OperatorError(f"cannot cross {x0.name} with {x1.name}")
        if x0.ctor != x1.ctor:
            return x0, x1
        left, right = [], []
        for a, b in zip(x0.args, x1.args):
            l, r = crossover_value(a, b, rng)
            left.append(l)
            right.append(r)
        return Obj(x0.name, x0.ctor, tuple(left)), Obj(x1.name, x1.ctor, tuple(right))
    raise OperatorError(f"not a value: {x0!r}")


def crossover_args(a: Sequence[Value], b: Sequence[Value], rng: random.Random):
    if len(a) != len(b):
        raise OperatorError("argument tuples differ in arity")
    pairs = [crossover_value(x, y, rng) for x, y in zip(a, b)]
    return tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)


# --------------------------------------------------------------------------
# mutation

SEQ_OPS = ("insert", "delete", "replace", "swap")


def flip_bit(x: Number, rng: random.Random) -> Number:
    return Number(x.kind, x.bits ^ (1 << rng.randrange(x.width)))


def _fresh_element(element, items, rng: random.Random):
    """A new element for insert/replace, or None when none can be made.

    Primitive elements are synthesized; anything structured is copied from
    an existing element, so empty arrays of composites stay empty.
    """
    if isinstance(element, Numeric):
        return Number(element.kind, rng.getrandbits(bit_width(element.kind)))
    if isinstance(element, Boolean):
        return Bool(rng.random() < 0.5)
    if isinstance(element, Char):
        return CharVal(PRINTABLE[rng.randrange(len(PRINTABLE))])
    if items:
        return items[rng.randrange(len(items))]
    return None


def _applicable(op: str, n: int, can_make: bool) -> bool:
    if op == "insert":
        return can_make
    if op == "delete":
        return n >= 1
    if op == "replace":
        return n >= 1 and can_make
    return n >= 2  # swap


def mutate_sequence(items: tuple, make: Callable[[], object | None], rng: random.Random,
                    op: str | None = None):
    """Apply one of insert/delete/replace/swap; returns (items, op) or None."""
    n = len(items)
    probe = make()
    ops = [o for o in SEQ_OPS if _applicable(o, n, probe is not None)]
    if op is not None:
        ops = [o for o in ops if o == op]
    if not ops:
        return None
    op = ops[rng.randrange(len(ops))]
    lst = list(items)
    if op == "insert":
        lst.insert(rng.randint(0, n), probe)
    elif op == "delete":
        del lst[rng.randrange(n)]
    elif op == "replace":
        lst[rng.randrange(n)] = probe
    else:
        i, j = rng.sample(range(n), 2)
        lst[i], lst[j] = lst[j], lst[i]
    return tuple(lst), op


def _mutable(v: Value) -> bool:
    if isinstance(v, Null):
        return False
    if isinstance(v, Obj):
        return any(_mutable(a) for a in v.args)
    if isinstance(v, Arr):
        return bool(v.items) or _fresh_element(v.element, v.items, random.Random(0)) is not None
    return True


def mutate_attribute(v: Value, rng: random.Random) -> Value:
    """Apply the kind-appropriate sub-operator to a single attribute."""
    if isinstance(v, Number):
        return flip_bit(v, rng)
    if isinstance(v, Bool):
        return Bool(not v.flag)
    if isinstance(v, CharVal):
        return CharVal(PRINTABLE[rng.randrange(len(PRINTABLE))])
    if isinstance(v, Str):
        res = mutate_sequence(tuple(v.text), lambda: PRINTABLE[rng.randrange(len(PRINTABLE))], rng)
        return v if res is None else Str("".join(res[0]))
    if isinstance(v, Arr):
        res = mutate_sequence(v.items, lambda: _fresh_element(v.element, v.items, rng), rng)
        return v if res is None else Arr(v.element, res[0])
    if isinstance(v, Obj):
        return mutate_value(v, rng)
    return v


def mutate_value(x: Value, rng: random.Random) -> Value:
    """One mutation step: pick a mutable attribute uniformly and mutate it.

    Top-level primitives behave like a one-attribute object. Null attributes
    are never chosen; a value with nothing mutable is returned unchanged.
    """
    if not isinstance(x, Obj):
        return mutate_attribute(x, rng) if _mutable(x) else x
    choices = [i for i, a in enumerate(x.args) if _mutable(a)]
    if not choices:
        return x
    i = choices[rng.randrange(len(choices))]
    args = list(x.args)
    args[i] = mutate_attribute(args[i], rng)
    return Obj(x.name, x.ctor, tuple(args))


def mutate_args(args: Sequence[Value], rng: random.Random) -> tuple[Value, ...]:
    """Mutate an argument tuple as if it were an object with one attribute per arg."""
    choices = [i for i, a in enumerate(args) if _mutable(a)]
    if not choices:
        return tuple(args)
    i = choices[rng.randrange(len(choices))]
    out = list(args)
    out[i] = mutate_attribute(out[i], rng)
    return tuple(out)


# --------------------------------------------------------------------------
# selection


def draw_parent(pop: Sequence[Individual], rng: random.Random) -> Individual:
    """Fitness-proportional draw; uniform when all fitnesses are equal or zero."""
    weights = [max(ind.fitness or 0, 0) for ind in pop]
    total = sum(weights)
    if total <= 0 or min(weights) == max(weights):
        return pop[rng.randrange(len(pop))]
    r = rng.random() * total
    acc = 0
    for ind, w in zip(pop, weights):
        acc += w
        if r < acc:
            return ind
    return pop[-1]


def next_generation(pop: Sequence[Individual], params: GAParams, rng: random.Random,
                    size: int | None = None) -> list[Individual]:
    """Elites carried over verbatim, the rest bred from fitness-proportional parents.

    ``size`` defaults to ``params.pi``; the engine passes a smaller value when
    the seed population came up short.
    """
    if len(pop) < 2:
        raise ValueError("next_generation needs at least two measured individuals")
    if any(ind.fitness is None for ind in pop):
        raise ValueError("every individual must be measured before selection")
    size = params.pi if size is None else size
    ranked = sorted(range(len(pop)), key=lambda i: -pop[i].fitness)
    n_elite = min(size, math.ceil(params.epsilon * size))
    out = [Individual(pop[i].args, pop[i].fitness) for i in ranked[:n_elite]]
    while len(out) < size:
        p0, p1 = draw_parent(pop, rng), draw_parent(pop, rng)
        if rng.random() < params.chi:
            c0, c1 = crossover_args(p0.args, p1.args, rng)
        else:
            c0, c1 = p0.args, p1.args
        for child in (c0, c1):
            if len(out) == size:
                break
            if rng.random() < params.tau:
                child = mutate_args(child, rng)
            out.append(Individual(child))
    return out
