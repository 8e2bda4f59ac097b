"""Type descriptors, structured values, conformance and canonical encoding.

A :class:`TypeDescriptor` describes one parameter type of a fuzzing target.
A :class:`Value` is an immutable tree built from a descriptor's grammar; it is
what the seed generators produce and what crossover and mutation operate on.
Values only become host objects when a target is about to be invoked (see
``microfuzz.registry.materialize``).
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Any, Mapping, Union


class DescriptorError(Exception):
    """A descriptor is malformed or references an unknown name."""


class DecodeError(ValueError):
    """Bytes are not a valid canonical value encoding."""


class ConformanceError(ValueError):
    """A decoded value does not match the descriptor it was decoded against."""


# --------------------------------------------------------------------------
# descriptors

INT_KINDS = {
    "i8": (8, True), "i16": (16, True), "i32": (32, True), "i64": (64, True),
    "u8": (8, False), "u16": (16, False), "u32": (32, False), "u64": (64, False),
}
FLOAT_KINDS = {"f32": 32, "f64": 64}
NUMERIC_KINDS = tuple(INT_KINDS) + tuple(FLOAT_KINDS)


@dataclass(frozen=True)
class Numeric:
    kind: str

    def __post_init__(self):
        if self.kind not in NUMERIC_KINDS:
            raise DescriptorError(f"unknown numeric kind {self.kind!r}")


@dataclass(frozen=True)
class Boolean:
    pass


@dataclass(frozen=True)
class Char:
    pass


@dataclass(frozen=True)
class String:
    pass


@dataclass(frozen=True)
class Array:
    element: "TypeDescriptor"


@dataclass(frozen=True)
class Composite:
    """A class-like type built by one of several constructors."""

    name: str
    constructors: tuple[tuple["TypeDescriptor", ...], ...]

    def __post_init__(self):
        if not self.constructors:
            raise DescriptorError(f"composite {self.name!r} has no constructors")
        object.__setattr__(
            self, "constructors", tuple(tuple(c) for c in self.constructors)
        )


@dataclass(frozen=True)
class Ref:
    """Named reference to a composite; ``nullable`` admits :data:`NULL`."""

    name: str
    nullable: bool = False


TypeDescriptor = Union[Numeric, Boolean, Char, String, Array, Composite, Ref]
Descriptors = Mapping[str, Composite]

I8, I16, I32, I64 = (Numeric(k) for k in ("i8", "i16", "i32", "i64"))
U8, U16, U32, U64 = (Numeric(k) for k in ("u8", "u16", "u32", "u64"))
F32, F64 = Numeric("f32"), Numeric("f64")
BOOLEAN, CHAR, STRING = Boolean(), Char(), String()


def resolve(t: TypeDescriptor, registry: Descriptors | None) -> TypeDescriptor:
    """Follow a :class:`Ref` to its composite; other descriptors pass through."""
    if isinstance(t, Ref):
        if registry is None or t.name not in registry:
            raise DescriptorError(f"unresolved descriptor reference {t.name!r}")
        return registry[t.name]
    return t


def check_descriptor(t: TypeDescriptor, registry: Descriptors | None = None) -> None:
    """Raise :class:`DescriptorError` if any reference inside ``t`` dangles."""
    seen: set[str] = set()

    def walk(d):
        if isinstance(d, Ref):
            if d.name in seen:
                return
            seen.add(d.name)
            walk(resolve(d, registry))
        elif isinstance(d, Array):
            walk(d.element)
        elif isinstance(d, Composite):
            if d.name in seen:
                return
            seen.add(d.name)
            for ctor in d.constructors:
                for p in ctor:
                    walk(p)
        elif not isinstance(d, (Numeric, Boolean, Char, String)):
            raise DescriptorError(f"not a descriptor: {d!r}")

    walk(t)


# --------------------------------------------------------------------------
# values


def bit_width(kind: str) -> int:
    if kind in INT_KINDS:
        return INT_KINDS[kind][0]
    return FLOAT_KINDS[kind]


@dataclass(frozen=True)
class Number:
    """A numeric primitive stored as its exact fixed-width bit pattern."""

    kind: str
    bits: int

    def __post_init__(self):
        if self.kind not in NUMERIC_KINDS:
            raise DescriptorError(f"unknown numeric kind {self.kind!r}")
        if not 0 <= self.bits < (1 << bit_width(self.kind)):
            raise ValueError(f"bit pattern out of range for {self.kind}")

    @property
    def width(self) -> int:
        return bit_width(self.kind)

    @property
    def value(self) -> int | float:
        if self.kind in FLOAT_KINDS:
            if self.kind == "f32":
                return struct.unpack("<f", self.bits.to_bytes(4, "little"))[0]
            return struct.unpack("<d", self.bits.to_bytes(8, "little"))[0]
        width, signed = INT_KINDS[self.kind]
        if signed and self.bits >= 1 << (width - 1):
            return self.bits - (1 << width)
        return self.bits

    @classmethod
    def of(cls, kind: str, x: int | float) -> "Number":
        """Encode ``x``; integers outside the kind's range are clamped."""
        if kind in FLOAT_KINDS:
            fmt, n = ("<f", 4) if kind == "f32" else ("<d", 8)
            x = float(x)
            if kind == "f32" and math.isfinite(x) and abs(x) > 3.4028234663852886e38:
                x = math.copysign(math.inf, x)
            return cls(kind, int.from_bytes(struct.pack(fmt, x), "little"))
        lo, hi = int_range(kind)
        x = min(max(int(x), lo), hi)
        return cls(kind, x & ((1 << bit_width(kind)) - 1))


def int_range(kind: str) -> tuple[int, int]:
    width, signed = INT_KINDS[kind]
    if signed:
        return -(1 << (width - 1)), (1 << (width - 1)) - 1
    return 0, (1 << width) - 1


@dataclass(frozen=True)
class Bool:
    flag: bool


@dataclass(frozen=True)
class CharVal:
    ch: str

    def __post_init__(self):
        if len(self.ch) != 1 or 0xD800 <= ord(self.ch) <= 0xDFFF:
            raise ValueError("CharVal holds exactly one Unicode scalar value")


@dataclass(frozen=True)
class Str:
    text: str


@dataclass(frozen=True)
class Arr:
    element: TypeDescriptor
    items: tuple["Value", ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class Obj:
    name: str
    ctor: int
    args: tuple["Value", ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class Null:
    pass


NULL = Null()
Value = Union[Number, Bool, CharVal, Str, Arr, Obj, Null]


def conforms(v: Value, t: TypeDescriptor, registry: Descriptors | None = None) -> bool:
    """True iff ``v`` can be produced from ``t``'s grammar.

    Unresolvable references raise :class:`DescriptorError` rather than
    returning False.
    """
    if isinstance(t, Ref):
        target = resolve(t, registry)
        if isinstance(v, Null):
            return t.nullable
        return conforms(v, target, registry)
    if isinstance(t, Numeric):
        return isinstance(v, Number) and v.kind == t.kind
    if isinstance(t, Boolean):
        return isinstance(v, Bool)
    if isinstance(t, Char):
        return isinstance(v, CharVal)
    if isinstance(t, String):
        return isinstance(v, Str)
    if isinstance(t, Array):
        if not isinstance(v, Arr) or v.element != t.element:
            return False
        return all(conforms(x, t.element, registry) for x in v.items)
    if isinstance(t, Composite):
        if not isinstance(v, Obj) or v.name != t.name:
            return False
        if not 0 <= v.ctor < len(t.constructors):
            return False
        params = t.constructors[v.ctor]
        if len(params) != len(v.args):
            return False
        return all(conforms(a, p, registry) for a, p in zip(v.args, params))
    raise DescriptorError(f"not a descriptor: {t!r}")


# --------------------------------------------------------------------------
# canonical encoding


def to_json(v: Value) -> Any:
    """The JSON-ready canonical form of ``v`` (kind tag plus payload)."""
    if isinstance(v, Number):
        return {"t": "num", "k": v.kind, "b": v.bits}
    if isinstance(v, Bool):
        return {"t": "bool", "v": v.flag}
    if isinstance(v, CharVal):
        return {"t": "char", "v": v.ch}
    if isinstance(v, Str):
        return {"t": "str", "v": v.text}
    if isinstance(v, Arr):
        return {"t": "arr", "v": [to_json(x) for x in v.items]}
    if isinstance(v, Obj):
        return {"t": "obj", "n": v.name, "c": v.ctor, "v": [to_json(a) for a in v.args]}
    if isinstance(v, Null):
        return {"t": "null"}
    raise TypeError(f"not a Value: {v!r}")


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def serialize(v: Value) -> bytes:
    return dumps(to_json(v)).encode("utf-8")


def value_size(v: Value) -> int:
    """Byte length of the canonical encoding."""
    return len(serialize(v))


def from_json(data: Any, t: TypeDescriptor, registry: Descriptors | None = None) -> Value:
    """Rebuild a value from its JSON form, checking it against ``t``."""
    try:
        v = _from_json(data, t, registry)
    except (KeyError, TypeError, AttributeError) as e:
        raise DecodeError(f"malformed value encoding: {e!r}") from None
    return v


def _fail(t, data):
    raise ConformanceError(f"encoding {str(data)[:60]!r} does not conform to {t!r}")


def _from_json(data, t, registry):
    if not isinstance(data, dict) or "t" not in data:
        raise DecodeError("value encoding must be an object with a 't' tag")
    tag = data["t"]
    if isinstance(t, Ref):
        if tag == "null":
            return NULL if t.nullable else _fail(t, data)
        return _from_json(data, resolve(t, registry), registry)
    if tag == "num":
        if not isinstance(t, Numeric) or data["k"] != t.kind:
            _fail(t, data)
        bits = data["b"]
        if not isinstance(bits, int) or isinstance(bits, bool):
            raise DecodeError("numeric bit pattern must be an integer")
        try:
            return Number(t.kind, bits)
        except ValueError as e:
            raise DecodeError(str(e)) from None
    if tag == "bool":
        if not isinstance(t, Boolean) or not isinstance(data["v"], bool):
            _fail(t, data)
        return Bool(data["v"])
    if tag == "char":
        if not isinstance(t, Char):
            _fail(t, data)
        try:
            return CharVal(data["v"])
        except (ValueError, TypeError) as e:
            raise DecodeError(str(e)) from None
    if tag == "str":
        if not isinstance(t, String) or not isinstance(data["v"], str):
            _fail(t, data)
        return Str(data["v"])
    if tag == "arr":
        if not isinstance(t, Array) or not isinstance(data["v"], list):
            _fail(t, data)
        return Arr(t.element, tuple(_from_json(x, t.element, registry) for x in data["v"]))
    if tag == "obj":
        if not isinstance(t, Composite) or data["n"] != t.name:
            _fail(t, data)
        ctor = data["c"]
        if not isinstance(ctor, int) or not 0 <= ctor < len(t.constructors):
            _fail(t, data)
        params = t.constructors[ctor]
        if not isinstance(data["v"], list) or len(data["v"]) != len(params):
            _fail(t, data)
        return Obj(t.name, ctor, tuple(_from_json(a, p, registry) for a, p in zip(data["v"], params)))
    if tag == "null":
        _fail(t, data)
    raise DecodeError(f"unknown value tag {tag!r}")


def deserialize(data: bytes, t: TypeDescriptor, registry: Descriptors | None = None) -> Value:
    try:
        parsed = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DecodeError(f"cannot decode value bytes: {e}") from None
    return from_json(parsed, t, registry)


# --------------------------------------------------------------------------
# descriptor JSON (registry files)


def descriptor_to_json(t: TypeDescriptor) -> dict:
    if isinstance(t, Numeric):
        return {"kind": "numeric", "type": t.kind}
    if isinstance(t, Boolean):
        return {"kind": "boolean"}
    if isinstance(t, Char):
        return {"kind": "char"}
    if isinstance(t, String):
        return {"kind": "string"}
    if isinstance(t, Array):
        return {"kind": "array", "element": descriptor_to_json(t.element)}
    if isinstance(t, Composite):
        return {
            "kind": "composite",
            "name": t.name,
            "constructors": [[descriptor_to_json(p) for p in c] for c in t.constructors],
        }
    if isinstance(t, Ref):
        return {"kind": "ref", "name": t.name, "nullable": t.nullable}
    raise DescriptorError(f"not a descriptor: {t!r}")


def descriptor_from_json(d: dict) -> TypeDescriptor:
    try:
        kind = d["kind"]
        if kind == "numeric":
            return Numeric(d["type"])
        if kind == "boolean":
            return BOOLEAN
        if kind == "char":
            return CHAR
        if kind == "string":
            return STRING
        if kind == "array":
            return Array(descriptor_from_json(d["element"]))
        if kind == "composite":
            ctors = tuple(tuple(descriptor_from_json(p) for p in c) for c in d["constructors"])
            return Composite(d["name"], ctors)
        if kind == "ref":
            return Ref(d["name"], bool(d.get("nullable", False)))
    except (KeyError, TypeError) as e:
        raise DescriptorError(f"malformed descriptor {d!r}: {e!r}") from None
    raise DescriptorError(f"unknown descriptor kind {kind!r}")


def load_descriptors(text: str) -> dict[str, Composite]:
    """Parse a descriptor registry file: a JSON map from name to composite."""
    raw = json.loads(text)
    out: dict[str, Composite] = {}
    for name, d in raw.items():
        t = descriptor_from_json(d)
        if not isinstance(t, Composite) or t.name != name:
            raise DescriptorError(f"registry entry {name!r} must be a composite named {name!r}")
        out[name] = t
    for t in out.values():
        check_descriptor(t, out)
    return out


def dump_descriptors(registry: Descriptors) -> str:
    return json.dumps({k: descriptor_to_json(v) for k, v in sorted(registry.items())}, indent=2)
