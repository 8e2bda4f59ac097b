"""The per-method fuzzing loop: seed, measure, select, and flag slow inputs."""
from __future__ import annotations

import hashlib
import os
import random
import tempfile
import threading
from dataclasses import asdict, dataclass, field
from typing import Any

from .clock import Clock, RealClock, calibrate, cycles_to_seconds
from .config import CampaignConfig
from .genetic import Individual, next_generation
from .measure import Completed, Threw, TimedOut
from .registry import TargetEntry
from .seedgen import InstantiationError, SeedRng, seed_individual
from .values import dumps, to_json, value_size


def job_seed(campaign_seed: int, target: str, strategy: str) -> int:
    h = hashlib.sha256(f"{campaign_seed}:{target}:{strategy}".encode()).digest()
    return int.from_bytes(h[:8], "big")


def args_json(args) -> list:
    return [to_json(a) for a in args]


def args_digest(args) -> str:
    return hashlib.sha256(dumps(args_json(args)).encode()).hexdigest()[:16]


@dataclass
class TestCase:
    __test__ = False  # not a pytest class

    id: str
    target: str
    strategy: str
    index: int
    generation: int
    outcome: str  # "completed" or "timeout"
    cycles: int | None
    seconds: float
    flagged: bool
    args_digest: str
    value_size: int
    timestamp: float
    args: list | None = None

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class WitnessCandidate:
    id: str
    test_case: str
    target: str
    strategy: str
    args: list
    cycles: int | None
    seconds: float
    outcome: str
    generation: int
    value_size: int

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class FuzzReport:
    target: str
    strategy: str
    covered: bool = False
    stop_reason: str = ""
    test_cases: list[TestCase] = field(default_factory=list)
    witnesses: list[WitnessCandidate] = field(default_factory=list)
    generations: int = 0
    seeds: int = 0
    population_size: int = 0
    discarded: int = 0
    timeouts: int = 0
    best_cycles: int | None = None
    best_args: list | None = None
    elapsed: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def job_id(self) -> str:
        return f"{self.strategy}/{self.target}"

    def coverage_record(self) -> dict:
        return {
            "job": self.job_id, "target": self.target, "strategy": self.strategy,
            "covered": self.covered, "stop_reason": self.stop_reason,
            "generations": self.generations, "seeds": self.seeds,
            "population_size": self.population_size, "tests": len(self.test_cases),
            "discarded": self.discarded, "timeouts": self.timeouts,
            "best_cycles": self.best_cycles, "witnesses": len(self.witnesses),
            "elapsed": self.elapsed, "notes": self.notes,
        }


def resolve_clock_hz(config: CampaignConfig, clock: Clock) -> float:
    if config.clock_hz:
        return config.clock_hz
    return calibrate(clock).hz


def fuzz_method(entry: TargetEntry, config: CampaignConfig, runner, clock: Clock | None = None,
                seed: int = 0) -> FuzzReport:
    """Fuzz one target until a witness fires, nu generations pass, or gamma expires.

    ``runner`` provides ``measure(entry, args) -> Outcome`` and
    ``build(entry, args) -> error | None`` (a :class:`~microfuzz.sandbox.Sandbox`
    or :class:`~microfuzz.sandbox.InProcessRunner`). ``clock`` drives the
    budgets and timestamps; it should be the same kind of clock the runner
    measures with so that ``clock_hz`` converts its cycles.
    """
    clock = clock or RealClock()
    strategy = config.strategy
    report = FuzzReport(entry.id, strategy.kind)
    t0 = clock.now()

    def elapsed() -> float:
        return clock.now() - t0

    def finish(reason: str) -> FuzzReport:
        report.stop_reason = reason
        report.elapsed = elapsed()
        return report

    if config.gamma <= 0:
        return finish("budget")
    hz = resolve_clock_hz(config, clock)
    seedval = job_seed(seed, entry.id, strategy.kind)
    seed_rng = SeedRng.from_seed(seedval)
    ga_rng = random.Random(f"ga:{seedval}")
    registry = entry.registry.descriptors
    pi = config.ga.pi

    # seeding: individuals whose constructors throw are skipped
    pop: list[Individual] = []
    attempts = config.max_seed_attempts or 20 * pi
    seed_budget = min(config.psi, config.gamma)
    while len(pop) < pi and attempts > 0 and elapsed() < seed_budget:
        attempts -= 1
        try:
            args = seed_individual(entry.params, strategy, seed_rng, registry)
        except InstantiationError:
            continue
        if runner.build(entry, args) is None:
            pop.append(Individual(args))
    report.seeds = len(pop)
    if not pop:
        report.notes.append("no instantiable seed input")
        return finish("not_covered")
    if len(pop) < pi:
        report.notes.append(f"partial seed population: {len(pop)} of {pi}")
    size = max(2, len(pop))
    while len(pop) < size:
        pop.append(Individual(pop[0].args))
    report.population_size = size

    generation = 0
    while True:
        measured = []
        for ind in pop:
            if ind.fitness is not None:
                measured.append(ind)
                continue
            if elapsed() >= config.gamma:
                report.generations = generation
                return finish("budget")
            outcome = runner.measure(entry, ind.args)
            if isinstance(outcome, Threw):
                report.discarded += 1
                continue
            report.covered = True
            if isinstance(outcome, Completed):
                cycles, seconds = outcome.cycles, cycles_to_seconds(outcome.cycles, hz)
                flagged = seconds >= config.omega
                ind.fitness = cycles
                measured.append(ind)
                if report.best_cycles is None or cycles > report.best_cycles:
                    report.best_cycles = cycles
                    report.best_args = args_json(ind.args)
            else:
                assert isinstance(outcome, TimedOut)
                report.timeouts += 1
                cycles, seconds = None, config.lam
                flagged = config.lam >= config.omega
            tc = _record(report, entry, ind.args, generation, outcome, cycles, seconds,
                         flagged, clock, config.store_args)
            if flagged:
                report.witnesses.append(WitnessCandidate(
                    id=f"{report.job_id}#{tc.index}", test_case=tc.id, target=entry.id,
                    strategy=strategy.kind, args=args_json(ind.args), cycles=cycles,
                    seconds=seconds, outcome=tc.outcome, generation=generation,
                    value_size=tc.value_size,
                ))
                report.generations = generation + 1
                return finish("witness")
        generation += 1
        report.generations = generation
        if generation >= config.ga.nu:
            return finish("generations")
        if not measured:
            report.notes.append("population went extinct")
            return finish("extinct")
        if len(measured) == 1:
            measured.append(Individual(measured[0].args, measured[0].fitness))
        pop = next_generation(measured, config.ga, ga_rng, size=size)


def _record(report, entry, args, generation, outcome, cycles, seconds, flagged, clock,
            store_args) -> TestCase:
    index = len(report.test_cases)
    encoded = args_json(args)
    tc = TestCase(
        id=f"{report.job_id}#{index}", target=entry.id, strategy=report.strategy,
        index=index, generation=generation,
        outcome="completed" if isinstance(outcome, Completed) else "timeout",
        cycles=cycles, seconds=seconds, flagged=flagged, args_digest=args_digest(args),
        value_size=sum(value_size(a) for a in args), timestamp=clock.now(),
        args=encoded if (store_args or flagged) else None,
    )
    report.test_cases.append(tc)
    return tc


# --------------------------------------------------------------------------
# environment probe


@dataclass(frozen=True)
class EnvVerdict:
    healthy: bool
    failures: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        return "Healthy" if self.healthy else "Poisoned"


def probe_environment(clock: Clock | None = None, workdir: str | None = None) -> EnvVerdict:
    """Run benign canary operations; any failure poisons the worker."""
    failures: list[str] = []

    def canary(name, fn):
        try:
            fn()
        except Exception as e:  # every failure folds into Poisoned
            failures.append(f"{name}: {type(e).__name__}: {e}")

    def alloc():
        block = bytearray(1 << 20)
        block[-1] = 1

    def thread():
        box: list[Any] = []
        t = threading.Thread(target=lambda: box.append(1))
        t.start()
        t.join(5)
        if not box:
            raise RuntimeError("scratch thread did not run")

    def read_clock():
        c = clock or RealClock(prefer_tsc=False)
        a, b = c.now(), c.now()
        if b < a:
            raise RuntimeError("clock went backwards")

    def temp_file():
        with tempfile.TemporaryFile(dir=workdir) as f:
            f.write(b"canary")
            f.flush()
            os.fsync(f.fileno())

    canary("allocate", alloc)
    canary("thread", thread)
    canary("clock", read_clock)
    canary("tempfile", temp_file)
    return EnvVerdict(not failures, tuple(failures))
