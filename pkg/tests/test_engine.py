import multiprocessing as mp
import resource
from dataclasses import replace

import pytest

from microfuzz.clock import FakeClock, make_clock
from microfuzz.config import profile
from microfuzz.engine import fuzz_method, job_seed, probe_environment
from microfuzz.genetic import GAParams
from microfuzz.sandbox import InProcessRunner, Sandbox

FAKE = {"kind": "fake"}


def small(**kw):
    base = dict(ga=GAParams(pi=10, nu=5), clock_hz=2e9)
    base.update(kw)
    return profile("desk", **base)


def run(registry, target, config, clock_spec=None, seed=0):
    clock_spec = clock_spec or {"kind": "real"}
    with InProcessRunner(registry, config.lam, clock_spec) as r:
        return fuzz_method(registry[target], config, r, make_clock(clock_spec), seed=seed)


def test_zero_budget_is_an_empty_report(fixtures_registry):
    rep = run(fixtures_registry, "fx/const", small(gamma=0))
    assert rep.stop_reason == "budget" and rep.test_cases == [] and not rep.covered


def test_constant_target_runs_all_generations(fixtures_registry):
    rep = run(fixtures_registry, "fx/const", small())
    assert rep.stop_reason == "generations" and rep.generations == 5
    assert rep.witnesses == [] and rep.covered
    assert len(rep.test_cases) >= 10


def test_uninstantiable_target_is_not_covered(fixtures_registry):
    rep = run(fixtures_registry, "fx/fragile", small(max_seed_attempts=30))
    assert rep.stop_reason == "not_covered" and not rep.covered and rep.seeds == 0


def test_exceptions_never_enter_the_pool(fixtures_registry):
    rep = run(fixtures_registry, "fx/raise_odd", small(ga=GAParams(pi=20, nu=4)))
    assert rep.discarded > 0
    assert all(t.outcome in ("completed", "timeout") for t in rep.test_cases)
    # every recorded input is even: odd ones threw and were dropped
    assert all(t.cycles is not None for t in rep.test_cases)


def test_single_seed_is_duplicated(fixtures_registry):
    rep = run(fixtures_registry, "fx/const", small(max_seed_attempts=1))
    assert rep.seeds == 1 and rep.population_size == 2


def test_witness_runtime_reaches_omega(fixtures_registry):
    cfg = small(lam=0.5, ga=GAParams(pi=10, nu=20))
    rep = run(fixtures_registry, "fx/spin", cfg)
    assert rep.stop_reason == "witness"
    w = rep.witnesses[0]
    assert w.seconds >= cfg.omega
    flagged = [t for t in rep.test_cases if t.flagged]
    assert len(flagged) == 1 and flagged[0].id == w.test_case and flagged[0].args == w.args


def test_args_stored_only_when_flagged(fixtures_registry):
    rep = run(fixtures_registry, "fx/const", small())
    assert all(t.args is None for t in rep.test_cases)
    rep = run(fixtures_registry, "fx/const", small(store_args=True))
    assert all(t.args is not None for t in rep.test_cases)


def test_budget_bounds_elapsed_time(fixtures_registry):
    cfg = small(gamma=0.5, psi=0.5, ga=GAParams(pi=10, nu=10**6))
    rep = run(fixtures_registry, "fx/sum", cfg)
    assert rep.stop_reason == "budget"
    assert rep.elapsed <= cfg.gamma + cfg.lam


def test_fake_clock_runs_are_identical(fixtures_registry):
    cfg = small(clock_hz=1e9, ga=GAParams(pi=10, nu=6))
    a = run(fixtures_registry, "fx/sum", cfg, FAKE, seed=3)
    b = run(fixtures_registry, "fx/sum", cfg, FAKE, seed=3)
    assert [t.to_json() for t in a.test_cases] == [t.to_json() for t in b.test_cases]
    c = run(fixtures_registry, "fx/sum", cfg, FAKE, seed=4)
    assert [t.args_digest for t in a.test_cases] != [t.args_digest for t in c.test_cases]


def test_job_seed():
    assert job_seed(0, "a", "sri") == job_seed(0, "a", "sri")
    assert len({job_seed(0, "a", "sri"), job_seed(0, "a", "ivi"), job_seed(1, "a", "sri")}) == 3


@pytest.mark.slow
def test_planted_quadratic_flagged_in_nine_of_ten(corpus, hz):
    cfg = replace(profile("desk").with_strategy("sri"), clock_hz=hz)
    hits = 0
    for seed in range(10):
        with Sandbox(corpus, cfg.lam) as sb:
            rep = fuzz_method(corpus["ac/colliding_table_insert"], cfg, sb, seed=seed)
        hits += rep.stop_reason == "witness" and rep.generations <= cfg.ga.nu
    assert hits >= 9


def test_environment_probe_healthy():
    v = probe_environment(FakeClock())
    assert v.healthy and v.label == "Healthy"


def _exhaust_and_probe(conn):
    resource.setrlimit(resource.RLIMIT_NOFILE, (64, resource.getrlimit(resource.RLIMIT_NOFILE)[1]))
    held = []
    try:
        while True:
            held.append(open("/dev/null"))
    except OSError:
        pass
    v = probe_environment()
    conn.send((v.label, v.failures))


def test_environment_probe_poisoned_by_fd_exhaustion():
    ctx = mp.get_context("fork")
    parent, child = ctx.Pipe()
    p = ctx.Process(target=_exhaust_and_probe, args=(child,))
    p.start()
    label, failures = parent.recv()
    p.join()
    assert label == "Poisoned"
    assert any(f.startswith("tempfile") for f in failures)
