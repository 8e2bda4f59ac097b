import json
import math
import random
import struct

import pytest
from hypothesis import given, strategies as st

from helpers import corpus_params, numbers, oracle_conforms, random_descriptor, sri_values
from microfuzz.seedgen import InstantiationError, SeedRng, SeedStrategy, sri
from microfuzz.values import (
    BOOLEAN, CHAR, F64, I32, NULL, STRING, U8, Arr, Array, Bool, CharVal, Composite, ConformanceError,
    DecodeError, DescriptorError, Number, Numeric, Obj, Ref, Str, conforms, descriptor_from_json,
    descriptor_to_json, deserialize, dump_descriptors, load_descriptors, serialize, value_size,
)

LIST = Composite("List", (((I32, Ref("List", nullable=True))),))
REG = {"List": LIST}


def cons(*xs):
    v = NULL
    for x in reversed(xs):
        v = Obj("List", 0, (Number.of("i32", x), v))
    return v


def test_conforms_examples():
    assert conforms(Number.of("i32", 0), I32)
    assert not conforms(Str(""), Array(CHAR))
    assert conforms(cons(5), LIST, REG)
    assert conforms(cons(5), Ref("List"), REG)
    assert not conforms(NULL, Ref("List"), REG)
    assert conforms(NULL, Ref("List", nullable=True), REG)


def test_conforms_unresolved_reference_is_an_error():
    with pytest.raises(DescriptorError):
        conforms(NULL, Ref("Missing", nullable=True), {})


def test_conforms_rejects_wrong_arity_and_ctor():
    assert not conforms(Obj("List", 0, (Number.of("i32", 1),)), LIST, REG)
    assert not conforms(Obj("List", 1, (Number.of("i32", 1), NULL)), LIST, REG)
    assert not conforms(Arr(I32, (Number.of("i64", 1),)), Array(I32))


def test_conforms_matches_structural_oracle_on_random_pairs():
    rng = random.Random(7)
    agree = mismatched = 0
    for i in range(2000):
        reg: dict = {}
        t = random_descriptor(rng, reg)
        u = random_descriptor(rng, reg)
        try:
            v = sri(t, SeedStrategy(alpha=4), SeedRng.from_seed(i), reg)
        except InstantiationError:
            continue
        for d in (t, u):
            assert conforms(v, d, reg) == oracle_conforms(v, d, reg)
            agree += 1
        mismatched += not conforms(v, u, reg)
    assert agree > 1000 and mismatched > 100


def test_value_size_of_empty_string_is_constant():
    assert value_size(Str("")) == len(b'{"t":"str","v":""}')


@pytest.mark.parametrize("n", [0, 1, 2, 7, 50])
def test_value_size_of_uniform_array(n):
    x = Number.of("i32", 12345)
    header = value_size(Arr(I32, ()))
    elem = value_size(x)
    commas = max(n - 1, 0)
    assert value_size(Arr(I32, (x,) * n)) == header + n * elem + commas


def test_value_size_linear_in_unary_nesting():
    box = {"Box": Composite("Box", ((I32,), (Ref("Box"),)))}
    v = Obj("Box", 0, (Number.of("i32", 1),))
    sizes = []
    for _ in range(8):
        sizes.append(value_size(v))
        v = Obj("Box", 1, (v,))
    assert conforms(v, box["Box"], box)
    steps = {b - a for a, b in zip(sizes, sizes[1:])}
    assert len(steps) == 1


@given(st.text(max_size=40), st.characters(blacklist_categories=("Cs",)))
def test_value_size_monotone_under_string_append(s, c):
    assert value_size(Str(s + c)) > value_size(Str(s))


@given(sri_values(Array(I32)), numbers("i32"))
def test_value_size_monotone_under_array_append(a, x):
    assert value_size(Arr(I32, a.items + (x,))) > value_size(a)


@pytest.mark.parametrize("x", [0.0, -0.0, math.inf, -math.inf, 1e-310])
def test_round_trip_f64(x):
    v = Number.of("f64", x)
    back = deserialize(serialize(v), F64)
    assert back == v and back.bits == v.bits


def test_round_trip_preserves_nan_payload():
    bits = 0x7FF8_0000_0000_1234
    v = Number("f64", bits)
    assert deserialize(serialize(v), F64).bits == bits
    assert math.isnan(v.value)


def test_round_trip_list_example():
    v = cons(3, 1, 4, 1, 5)
    assert deserialize(serialize(v), LIST, REG) == v


def test_truncated_bytes_are_a_decode_error():
    data = serialize(cons(1, 2))
    for cut in (1, len(data) // 2, len(data) - 1):
        with pytest.raises(DecodeError):
            deserialize(data[:cut], LIST, REG)


def test_nonconforming_decode_is_a_conformance_error():
    with pytest.raises(ConformanceError):
        deserialize(serialize(Str("x")), I32)
    with pytest.raises(ConformanceError):
        deserialize(serialize(NULL), Ref("List"), REG)
    with pytest.raises(DecodeError):
        deserialize(b'{"t":"num","k":"u8","b":256}', U8)


def test_f32_clamps_overflow_to_infinity():
    assert Number.of("f32", 1e39).value == math.inf
    assert Number.of("f32", 1.5).value == 1.5
    assert struct.pack("<f", Number.of("f32", 0.1).value) == struct.pack("<f", 0.1)


def test_integer_encoding_clamps_and_wraps_signed():
    assert Number.of("i8", 300).value == 127
    assert Number.of("i8", -1).bits == 0xFF
    assert Number.of("u16", -5).value == 0


@given(numbers())
def test_numbers_round_trip(v):
    assert deserialize(serialize(v), Numeric(v.kind)) == v


@pytest.mark.slow
@pytest.mark.parametrize("target,t", corpus_params(), ids=lambda x: str(x))
def test_round_trip_corpus_descriptors(corpus, target, t):
    rng = random.Random(target)
    reg = corpus.descriptors
    for i in range(10_000):
        strategy = SeedStrategy(alpha=rng.randint(0, 64))
        v = sri(t, strategy, SeedRng.from_seed(i), reg)
        assert deserialize(serialize(v), t, reg) == v


def test_descriptor_json_round_trip():
    rng = random.Random(3)
    for _ in range(300):
        reg: dict = {}
        t = random_descriptor(rng, reg)
        assert descriptor_from_json(json.loads(json.dumps(descriptor_to_json(t)))) == t
        assert load_descriptors(dump_descriptors(reg)) == reg


def test_load_descriptors_rejects_dangling_reference():
    text = json.dumps({"A": {"kind": "composite", "name": "A",
                             "constructors": [[{"kind": "ref", "name": "B"}]]}})
    with pytest.raises(DescriptorError):
        load_descriptors(text)


def test_composite_needs_a_constructor():
    with pytest.raises(DescriptorError):
        Composite("Empty", ())


def test_charval_rejects_surrogates_and_strings():
    with pytest.raises(ValueError):
        CharVal("ab")
    with pytest.raises(ValueError):
        CharVal("\ud800")
    assert CharVal("é").ch == "é"


def test_bool_and_string_payloads():
    assert deserialize(serialize(Bool(True)), BOOLEAN) == Bool(True)
    assert deserialize(serialize(Str("ünï")), STRING) == Str("ünï")
