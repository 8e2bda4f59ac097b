import json
import os
import statistics
import subprocess
import sys

import pytest

from microfuzz.errors import ConfigurationError, HarnessError
from microfuzz.measure import (
    Completed, MeasureContext, Threw, TimedOut, activate, clear_analysis, current_cpu,
    get_runtime, measure_call, pin_cpu, probe, set_method_under_test, trace_call, write_trace,
)
from microfuzz.values import I64, NULL, Arr, Number, Obj, Str


@probe("t/a")
def fn_a():
    return fn_b() + 1


@probe("t/b")
def fn_b():
    return 1


@probe("t/rec")
def countdown(n):
    return 0 if n == 0 else countdown(n - 1)


def num(kind, x):
    return Number.of(kind, x)


@pytest.fixture
def ctx():
    c = MeasureContext()
    prev = activate(c)
    yield c
    activate(prev)


def test_runtime_absent_before_any_call(ctx):
    set_method_under_test(ctx, "t/b")
    assert get_runtime(ctx) is None


def test_runtime_after_call_then_clear(ctx):
    set_method_under_test(ctx, "t/b")
    fn_b()
    assert get_runtime(ctx) > 0
    clear_analysis(ctx)
    assert get_runtime(ctx) is None and ctx.t_depth == 0


def test_gating_records_nothing_for_other_methods(ctx):
    set_method_under_test(ctx, "t/a")
    for _ in range(50):
        fn_b()
    assert ctx.records == 0 and get_runtime(ctx) is None


def test_gating_measures_only_the_outer_label(ctx):
    set_method_under_test(ctx, "t/a")
    fn_a()
    assert ctx.records == 1


def test_recursion_stores_one_runtime_per_tree(ctx):
    set_method_under_test(ctx, "t/rec")
    for depth in (0, 1, 10, 200):
        before = ctx.records
        countdown(depth)
        assert ctx.records == before + 1
        assert ctx.t_depth == 0


def test_noop_completes(corpus):
    out = measure_call(MeasureContext(), corpus["bench/noop"], [])
    assert isinstance(out, Completed) and out.cycles > 0


def test_factorial_one_record_per_call(corpus):
    ctx = MeasureContext()
    out = measure_call(ctx, corpus["bench/factorial"], [num("i32", 30)])
    assert isinstance(out, Completed)
    assert ctx.records == 1


def test_inclusive_timing(corpus):
    ctx = MeasureContext()
    inner, outer = [], []
    for _ in range(30):
        inner.append(measure_call(ctx, corpus["bench/inner"], []).cycles)
        outer.append(measure_call(ctx, corpus["bench/outer"], []).cycles)
    # outer = inner + equal own work; an exclusive timer would report about 1x
    assert statistics.median(outer) > 1.4 * statistics.median(inner)


def test_busy_loop_medians_increase(corpus):
    ctx = MeasureContext()
    meds = []
    for n in (10**3, 10**4, 10**5):
        meds.append(statistics.median(
            measure_call(ctx, corpus["bench/busy_loop"], [num("i64", n)]).cycles for _ in range(15)))
    assert meds == sorted(meds) and len(set(meds)) == 3


def test_target_exception_is_threw(fixtures_registry):
    out = measure_call(MeasureContext(), fixtures_registry["fx/raise_odd"], [num("i32", 3)])
    assert isinstance(out, Threw) and out.stage == "invoke"


def test_constructor_exception_is_threw_at_construct(fixtures_registry):
    out = measure_call(MeasureContext(), fixtures_registry["fx/fragile"],
                       [Obj("Fragile", 0, (num("i32", 1),))])
    assert isinstance(out, Threw) and out.stage == "construct"


def test_nonconforming_args_are_a_harness_error(fixtures_registry):
    with pytest.raises(HarnessError):
        measure_call(MeasureContext(), fixtures_registry["fx/const"], [Str("x")])
    with pytest.raises(HarnessError):
        measure_call(MeasureContext(), fixtures_registry["fx/const"], [])


def test_timeout(fixtures_registry):
    out = measure_call(MeasureContext(), fixtures_registry["fx/spin"],
                       [Number.of("f64", 5.0)], lam=0.2)
    assert out == TimedOut(0.2)


def test_context_restored_after_measurement(corpus):
    prev = activate(None)
    ctx = MeasureContext()
    measure_call(ctx, corpus["bench/noop"], [])
    assert activate(prev) is None


def test_pin_mask_lowest_cpu():
    ctx = MeasureContext()
    assert pin_cpu(ctx, {2, 3, 5}, apply=False) == 2
    assert ctx.pinned_cpu == 2


def test_pin_single_cpu_is_configuration_error():
    with pytest.raises(ConfigurationError, match="at least 2"):
        pin_cpu(MeasureContext(), {0}, apply=False)


@pytest.mark.skipif(len(os.sched_getaffinity(0)) < 2, reason="needs at least two CPUs")
def test_pinned_measurements_stay_on_cpu(corpus):
    code = (
        "from microfuzz.corpus import REGISTRY\n"
        "from microfuzz.measure import MeasureContext, current_cpu, measure_call, pin_cpu\n"
        "ctx = MeasureContext(); cpu = pin_cpu(ctx)\n"
        "seen = set()\n"
        "for _ in range(100):\n"
        "    measure_call(ctx, REGISTRY['bench/noop'], []); seen.add(current_cpu())\n"
        "print(cpu, sorted(seen))\n"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    cpu, seen = out.stdout.split(" ", 1)
    assert json.loads(seen) == [int(cpu)]


def test_current_cpu_is_in_mask():
    assert current_cpu() in os.sched_getaffinity(0)


# -- tracing ---------------------------------------------------------------


def test_trace_noop(corpus):
    events = trace_call(corpus["bench/noop"], [])
    assert [e.kind for e in events] == ["invoke", "return"]
    assert events[0].target == "bench/noop"


def test_trace_list_ids_originate_in_constructors(corpus):
    v = NULL
    for x in (4, 3, 2, 1):
        v = Obj("List", 0, (num("i32", x), v))
    events = trace_call(corpus["control/list_build"], [v])
    first_seen = {}
    for e in events:
        ids = [p["id"] for p in e.params if isinstance(p, dict) and "id" in p]
        if e.object_id is not None:
            ids.append(e.object_id)
        for i in ids:
            first_seen.setdefault(i, e)
    assert first_seen
    for oid, e in first_seen.items():
        if e.target.endswith("Node.__init__"):
            assert e.kind == "invoke" and e.object_id == oid
    ctor_ids = [e.object_id for e in events if e.kind == "invoke" and e.target.endswith("Node.__init__")]
    assert len(ctor_ids) == 8  # four built as arguments, four copies


def _balanced(events):
    stack = []
    for e in events:
        if e.kind == "invoke":
            stack.append(e.target)
        elif e.kind == "return":
            assert stack.pop() == e.target
    return not stack


def test_completed_trace_is_balanced(corpus):
    events = trace_call(corpus["ac/decimal_add"], [
        Obj("Decimal", 0, (Str("12"), num("i32", 0))),
        Obj("Decimal", 0, (Str("3"), num("i32", 3000))),
    ])
    assert _balanced(events)
    assert any(e.target.endswith("_multiply_power_ten") for e in events)


def test_interrupted_trace_shows_unreturned_scaling(corpus):
    args = [Obj("Decimal", 0, (Str("1"), num("i32", 0))),
            Obj("Decimal", 0, (Str("1"), num("i32", 10**7)))]
    events = trace_call(corpus["ac/decimal_add"], args, max_events=None, lam=0.1)
    assert events[-1].kind == "timeout"
    invokes = [e for e in events if e.kind == "invoke" and e.target.endswith("_multiply_power_ten")]
    returns = [e for e in events if e.kind == "return" and e.target.endswith("_multiply_power_ten")]
    assert len(invokes) == 1 and not returns


def test_trace_error_appended(fixtures_registry):
    events = trace_call(fixtures_registry["fx/raise_odd"], [num("i32", 1)])
    assert events[-2].params == ({"raised": "ValueError"},)
    assert events[-1].kind == "error"


def test_trace_truncation_marker(corpus):
    events = trace_call(corpus["bench/factorial"], [num("i32", 50)], max_events=10)
    assert len(events) == 11 and events[-1].kind == "truncated"


def test_write_trace_jsonl(tmp_path, corpus):
    path = tmp_path / "t.jsonl"
    write_trace(trace_call(corpus["control/string_reverse"], [Str("abc")]), path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows[0] == {"seq": 0, "kind": "invoke", "target": "control/string_reverse", "params": ["abc"]}
    assert rows[1]["params"] == ["cba"]


def test_hooks_disabled_makes_probe_identity():
    code = ("from microfuzz.measure import probe\n"
            "def f(): pass\n"
            "print(probe(f) is f)\n")
    env = {**os.environ, "MICROFUZZ_HOOKS": "0"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "True"


def test_vector_sum_args_materialize(corpus):
    out = measure_call(MeasureContext(), corpus["control/vector_sum"],
                       [Arr(I64, tuple(num("i64", i) for i in (1, 2, 3)))])
    assert out.summary == "6"
    assert isinstance(out, Completed)
