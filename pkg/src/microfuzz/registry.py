"""Target registry: signatures, host factories for composites, materialization.

A registry maps target ids to callables with typed signatures and maps each
composite name to one host factory per constructor. Target callables are
wrapped with :func:`microfuzz.measure.probe` under their target id, which is
what makes them measurable as the method under test.
"""
from __future__ import annotations

import importlib
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .errors import ConfigurationError, HarnessError
from .measure import probe
from .values import (
    Arr, Bool, CharVal, Composite, DescriptorError, Null, Number, Obj, Str,
    TypeDescriptor, Value, check_descriptor, conforms, descriptor_to_json,
)


@dataclass(frozen=True)
class Signature:
    target: str
    params: tuple[TypeDescriptor, ...]


@dataclass
class TargetEntry:
    id: str
    params: tuple[TypeDescriptor, ...]
    fn: Callable
    registry: "Registry" = field(repr=False)
    notes: str = ""

    @property
    def signature(self) -> Signature:
        return Signature(self.id, self.params)

    def materialize(self, args: Sequence[Value]) -> list:
        return self.registry.materialize_args(self, args)


class Registry:
    def __init__(self, name: str = "registry"):
        self.name = name
        self.descriptors: dict[str, Composite] = {}
        self.factories: dict[str, list[Callable]] = {}
        self.entries: dict[str, TargetEntry] = {}

    # -- construction -------------------------------------------------------

    def composite(self, name: str, constructors: Sequence[tuple[Sequence[TypeDescriptor], Callable]]):
        """Register composite ``name``; each constructor is (params, factory)."""
        if name in self.descriptors:
            raise ConfigurationError(f"duplicate composite {name!r}")
        self.descriptors[name] = Composite(name, tuple(tuple(p) for p, _ in constructors))
        self.factories[name] = [f for _, f in constructors]
        return self.descriptors[name]

    def add(self, target_id: str, params: Sequence[TypeDescriptor], fn: Callable,
            notes: str = "") -> TargetEntry:
        if target_id in self.entries:
            raise ConfigurationError(f"duplicate target id {target_id!r}")
        entry = TargetEntry(target_id, tuple(params), probe(target_id)(fn), self, notes)
        self.entries[target_id] = entry
        return entry

    def target(self, target_id: str, params: Sequence[TypeDescriptor], notes: str = ""):
        """Decorator form of :meth:`add`; returns the instrumented callable."""
        def deco(fn):
            return self.add(target_id, params, fn, notes).fn
        return deco

    def check(self) -> None:
        """Every reference in every signature must resolve."""
        try:
            for c in self.descriptors.values():
                check_descriptor(c, self.descriptors)
            for e in self.entries.values():
                for p in e.params:
                    check_descriptor(p, self.descriptors)
        except DescriptorError as err:
            raise ConfigurationError(str(err)) from err

    # -- lookup -------------------------------------------------------------

    def __getitem__(self, target_id: str) -> TargetEntry:
        try:
            return self.entries[target_id]
        except KeyError:
            raise HarnessError(f"unknown target {target_id!r}") from None

    def __contains__(self, target_id: str) -> bool:
        return target_id in self.entries

    def __iter__(self):
        return iter(self.entries.values())

    def __len__(self) -> int:
        return len(self.entries)

    # -- values to host objects --------------------------------------------

    def materialize(self, v: Value) -> Any:
        if isinstance(v, Number):
            return v.value
        if isinstance(v, Bool):
            return v.flag
        if isinstance(v, CharVal):
            return v.ch
        if isinstance(v, Str):
            return v.text
        if isinstance(v, Arr):
            return [self.materialize(x) for x in v.items]
        if isinstance(v, Null):
            return None
        if isinstance(v, Obj):
            try:
                factory = self.factories[v.name][v.ctor]
            except (KeyError, IndexError):
                raise HarnessError(f"no factory for {v.name}#{v.ctor}") from None
            return factory(*[self.materialize(a) for a in v.args])
        raise HarnessError(f"not a value: {v!r}")

    def materialize_args(self, entry: TargetEntry, args: Sequence[Value]) -> list:
        if len(args) != len(entry.params):
            raise HarnessError(f"{entry.id} takes {len(entry.params)} args, got {len(args)}")
        for a, p in zip(args, entry.params):
            if not conforms(a, p, self.descriptors):
                raise HarnessError(f"argument {a!r} does not conform to {p!r}")
        return [self.materialize(a) for a in args]

    # -- manifest -----------------------------------------------------------

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "descriptors": {k: descriptor_to_json(v) for k, v in sorted(self.descriptors.items())},
            "targets": [
                {"id": e.id, "params": [descriptor_to_json(p) for p in e.params], "notes": e.notes}
                for e in sorted(self.entries.values(), key=lambda e: e.id)
            ],
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), indent=2, sort_keys=True)


def load_registry(spec: str) -> Registry:
    """Import ``"package.module:attr"`` and return the registry it names."""
    module, _, attr = spec.partition(":")
    try:
        obj = getattr(importlib.import_module(module), attr or "REGISTRY")
    except (ImportError, AttributeError) as e:
        raise ConfigurationError(f"cannot load registry {spec!r}: {e}") from e
    if callable(obj) and not isinstance(obj, Registry):
        obj = obj()
    if not isinstance(obj, Registry):
        raise ConfigurationError(f"{spec!r} is not a Registry")
    return obj
