"""Random descriptor/value generators and small oracles shared by the tests."""
from __future__ import annotations

import random

from hypothesis import strategies as st

from microfuzz.seedgen import SeedRng, SeedStrategy, sri
from microfuzz.values import (
    BOOLEAN, CHAR, NUMERIC_KINDS, STRING, Arr, Array, Bool, Boolean, Char, CharVal,
    Composite, Null, Number, Numeric, Obj, Ref, Str, String, bit_width, resolve,
)


def random_descriptor(rng: random.Random, registry: dict, depth: int = 0, max_depth: int = 3):
    """A random descriptor; new composites are added to ``registry`` in place.

    Composites may refer to themselves (nullable or not) and to earlier ones,
    so some generated types have no terminating constructor at all.
    """
    r = rng.random()
    if depth >= max_depth or r < 0.45:
        return rng.choice([Numeric(rng.choice(NUMERIC_KINDS)), BOOLEAN, CHAR, STRING])
    if r < 0.6:
        return Array(random_descriptor(rng, registry, depth + 1, max_depth))
    if r < 0.7 and registry:
        return Ref(rng.choice(sorted(registry)), nullable=rng.random() < 0.5)
    name = f"C{len(registry)}"
    registry[name] = None  # reserve so constructors can refer back
    ctors = []
    for _ in range(rng.randint(1, 3)):
        params = []
        for _ in range(rng.randint(0, 3)):
            if rng.random() < 0.2:
                params.append(Ref(name, nullable=rng.random() < 0.7))
            else:
                params.append(random_descriptor(rng, registry, depth + 1, max_depth))
        ctors.append(tuple(params))
    registry[name] = Composite(name, tuple(ctors))
    return Ref(name) if rng.random() < 0.5 else registry[name]


def oracle_conforms(v, t, registry) -> bool:
    """Independent structural check used against ``values.conforms``."""
    if isinstance(t, Ref):
        if isinstance(v, Null):
            return t.nullable
        t = resolve(t, registry)
    if isinstance(t, Numeric):
        return isinstance(v, Number) and v.kind == t.kind and 0 <= v.bits < (1 << bit_width(t.kind))
    if isinstance(t, Boolean):
        return isinstance(v, Bool)
    if isinstance(t, Char):
        return isinstance(v, CharVal)
    if isinstance(t, String):
        return isinstance(v, Str)
    if isinstance(t, Array):
        return (isinstance(v, Arr) and v.element == t.element
                and all(oracle_conforms(x, t.element, registry) for x in v.items))
    if isinstance(t, Composite):
        if not isinstance(v, Obj) or v.name != t.name or not 0 <= v.ctor < len(t.constructors):
            return False
        ctor = t.constructors[v.ctor]
        return len(ctor) == len(v.args) and all(
            oracle_conforms(a, p, registry) for a, p in zip(v.args, ctor))
    return False


def sri_values(t, registry=None, max_alpha: int = 64):
    """Hypothesis strategy: SRI values of ``t`` over random seeds and spreads."""
    return st.builds(
        lambda seed, alpha: sri(t, SeedStrategy(alpha=alpha), SeedRng.from_seed(seed), registry),
        st.integers(0, 2**32), st.integers(0, max_alpha),
    )


def numbers(kind: str | None = None):
    kinds = st.just(kind) if kind else st.sampled_from(NUMERIC_KINDS)
    return kinds.flatmap(lambda k: st.integers(0, (1 << bit_width(k)) - 1).map(lambda b: Number(k, b)))


def corpus_params():
    """(target id, descriptor) for every parameter of every campaign target."""
    from microfuzz.corpus import REGISTRY
    return [(e.id, p) for e in REGISTRY if not e.id.startswith("bench/") for p in e.params]


def spearman(xs, ys) -> float:
    from scipy.stats import spearmanr
    return float(spearmanr(xs, ys).statistic)
