import csv

import pytest

from microfuzz.config import CampaignSpec, profile
from microfuzz.errors import ConfigurationError
from microfuzz.genetic import GAParams
from microfuzz.orchestrator import (
    SUMMARY_COLUMNS, UsageError, enumerate_targets, report, run_campaign,
)
from microfuzz.registry import Registry
from microfuzz.store import ResultsStore

FIXTURES = "fixture_targets:REGISTRY"


def spec(tmp_path, include, **kw):
    cfg = profile("desk", gamma=2, lam=0.3, ga=GAParams(pi=8, nu=4), clock_hz=2e9)
    base = dict(config=cfg, registry=FIXTURES, include=include, exclude=[], strategies=["sri"],
                workers=1, store=str(tmp_path / "store"))
    base.update(kw)
    return CampaignSpec(**base)


def events(store, kind):
    return [e for e in ResultsStore(store).read("events") if e["event"] == kind]


def test_enumeration_is_sorted_and_filtered(corpus):
    ids = [s.target for s in enumerate_targets(corpus, ["ac/*", "control/*"], ["*regex*"])]
    assert ids == sorted(ids) and "ac/regex_split" not in ids and "ac/decimal_add" in ids
    assert enumerate_targets(corpus, ["nothing/*"]) == []


def test_enumeration_rejects_duplicates_and_empty(fixtures_registry):
    entry = fixtures_registry["fx/const"]
    with pytest.raises(ConfigurationError):
        enumerate_targets([entry, entry])
    with pytest.raises(ConfigurationError):
        enumerate_targets(Registry("empty"))


def test_campaign_writes_store(tmp_path, fixtures_registry):
    s = run_campaign(spec(tmp_path, ["fx/spin", "fx/const"], strategies=["ivi", "sri"]),
                     fixtures_registry)
    assert s.jobs == 4 and not s.failed_jobs
    store = ResultsStore(s.store)
    assert store.integrity_problems() == []
    assert {r["strategy"] for r in s.rows} == {"ivi", "sri"}
    assert set(s.results) == {"fx/const", "fx/spin"}
    # every witness got a manifest and a verdict
    ws = store.read("witnesses")
    assert len(store.read("verdicts")) == len(ws)
    assert all(store.manifest_path(w["id"]).exists() for w in ws)
    assert len(store.read("coverage")) == 4
    assert store.read_summary()["jobs"] == 4


def test_killed_worker_job_is_requeued(tmp_path, fixtures_registry):
    s = run_campaign(spec(tmp_path, ["fx/const"], faults={"kill_worker": {"fx/const": 1}}),
                     fixtures_registry)
    assert not s.failed_jobs and s.requeues == 1 and s.respawns == 1
    assert s.results["fx/const"]["sri"]["covered"]
    done = events(s.store, "job_done")
    assert len(done) == 1 and done[0]["generation"] == 2


def test_job_fails_after_second_crash(tmp_path, fixtures_registry):
    s = run_campaign(spec(tmp_path, ["fx/const", "fx/sum"], faults={"kill_worker": {"fx/const": 2}}),
                     fixtures_registry)
    assert s.failed_jobs == ["sri/fx/const"]
    assert "fx/sum" in s.results and "fx/const" not in s.results


def test_poisoned_worker_is_retired(tmp_path, fixtures_registry):
    s = run_campaign(spec(tmp_path, ["fx/const", "fx/sum"], faults={"leak_fds": ["fx/const"]}),
                     fixtures_registry)
    assert not s.failed_jobs and set(s.results) == {"fx/const", "fx/sum"}
    poisoned = events(s.store, "worker_poisoned")
    assert len(poisoned) == 1 and poisoned[0]["job"] == "sri/fx/sum"
    retired = {(e["worker"], e["generation"]) for e in events(s.store, "worker_retired")}
    started = [(e["worker"], e["generation"]) for e in events(s.store, "job_start")]
    # the job that found the poisoned worker ran again on a fresh generation
    assert started[-1] not in retired and started[-1][1] == 2


def test_reports(tmp_path, fixtures_registry):
    s = run_campaign(spec(tmp_path, ["fx/spin", "fx/const"]), fixtures_registry)
    paths = report(s.store, "csv", tmp_path / "out")
    summary = tmp_path / "out" / "summary.csv"
    assert summary in paths
    rows = list(csv.DictReader(summary.open()))
    assert tuple(rows[0]) == SUMMARY_COLUMNS and rows[0]["strategy"] == "sri"
    fitness = sorted((tmp_path / "out" / "fitness").glob("*.csv"))
    assert len(fitness) == 2
    with fitness[0].open() as f:
        assert next(csv.reader(f)) == ["test_index", "cycles", "flagged"]
    [txt] = report(s.store, "text", tmp_path / "out")
    assert "witness(es)" in txt.read_text()
    with pytest.raises(UsageError):
        report(s.store, "xml")


def test_empty_include_runs_nothing(tmp_path, fixtures_registry):
    s = run_campaign(spec(tmp_path, ["nope/*"]), fixtures_registry)
    assert s.jobs == 0 and s.results == {}
    assert [r["methods_covered"] for r in s.rows] == [0]
