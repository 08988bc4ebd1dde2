import json

import pytest

from conftest import CORPUS, load_fixture
from upr_audit.keys import VariableKey
from upr_audit.pipeline import (
    AnalysisError, BucketCounts, ConfigError, RunConfig, ablation_recall, analyze, analyze_units,
    histogram, read_analysis, run_pipeline, score_from_dir, write_analysis,
)
from upr_audit.cfront.source import SourceUnit
from upr_audit.rater import MockProvider, Rating, RatingCache
from upr_audit.scorer import DomainError, UPRReport


def corpus_config(**kw) -> RunConfig:
    return RunConfig(sources=[str(p) for p in CORPUS], **kw)


# -- config ----------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    {"lam": 1.2}, {"lam": -0.01}, {"threshold": 11}, {"max_inflight": 0},
    {"provider": "oracle"}, {"profile": "terse"}, {"provider": "replay"}, {"provider": "llm"},
    {"endpoint": {"base_url": "http://x", "model": "m", "timeout": 3}},
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


def test_config_from_dict_maps_lambda_and_rejects_unknown():
    assert RunConfig.from_dict({"lambda": 0.25}).lam == 0.25
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"colour": "red"})


@pytest.mark.parametrize("key", ["api_key", "secret", "API_KEY"])
def test_config_never_accepts_credentials(key):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"provider": "llm",
                             "endpoint": {"base_url": "http://x", "model": "m", key: "sk"}})


def test_config_json_round_trip():
    cfg = RunConfig(lam=0.3, threshold=7.5, extra_sinks=["setgid"])
    assert RunConfig.from_dict(cfg.to_json()) == cfg


# -- analysis --------------------------------------------------------------------

def test_empty_sources_give_empty_report():
    report = run_pipeline(RunConfig(), figures=False)
    assert report.entries == [] and report.meta["variables"] == 0


def test_unreadable_source(tmp_path):
    with pytest.raises(AnalysisError):
        analyze([tmp_path / "missing.c"])


def test_bad_function_skipped_and_recorded():
    units = [SourceUnit.from_text("int ok(int uid){ return uid; }\nint bad(){ x @ 1; }\n", "a.c")]
    a = analyze_units(units)
    assert [fa.pdg.function for fa in a.functions] == ["ok"]
    assert len(a.errors) == 1 and a.errors[0]["function"] == "bad" and a.errors[0]["path"] == "a.c"
    assert set(a.errors[0]) == {"path", "line", "column", "function", "message"}


def test_same_function_name_in_two_files_is_disambiguated():
    units = [SourceUnit.from_text("int f(int a){ return a; }", "x.c"),
             SourceUnit.from_text("int f(int b){ return b; }", "y.c")]
    fns = sorted(fa.pdg.function for fa in analyze_units(units).functions)
    assert fns == ["f@x.c", "f@y.c"]


def test_globals_shared_across_files():
    units = [SourceUnit.from_text("int uid;\nint f(void){ return uid; }", "x.c"),
             SourceUnit.from_text("int g(void){ uid = 1; return 0; }", "y.c")]
    a = analyze_units(units)
    assert [str(v) for v in a.variables] == ["<global>:uid"]


def test_statements_are_deduplicated():
    a = analyze(CORPUS)
    texts = [fa.pdg.node(sid).norm_text for sg in a.subgraphs for sid in sg.nodes
             for fa in a.functions if fa.pdg.function == sg.function]
    assert set(texts) == set(a.statements.entries)
    assert len(a.statements) == len(set(texts))


# -- end to end ------------------------------------------------------------------

def test_mock_report_matches_golden():
    report = run_pipeline(corpus_config(), figures=False)
    assert report.to_json()["variables"] == load_fixture("mock_report.json")


def test_output_layout_and_staged_equivalence(tmp_path):
    out = tmp_path / "out"
    report = run_pipeline(corpus_config(), out)
    for rel in ("statements.json", "errors.json", "ratings.jsonl", "report.json", "report.csv",
                "scores.png", "ratings_histogram.png"):
        assert (out / rel).is_file(), rel
    assert {p.stem for p in (out / "pdg").glob("*.json")} >= {"command_pass", "do_chown"}
    assert (out / "report.json").read_text() == report.dumps()
    assert score_from_dir(out, 0.5, 9.0).dumps() == report.dumps()


def test_idempotent_rerun(tmp_path):
    first = run_pipeline(corpus_config(), tmp_path / "a", figures=False)
    second = run_pipeline(corpus_config(), tmp_path / "a", figures=False)
    assert first.dumps() == second.dumps()


def test_read_analysis_round_trip(tmp_path):
    a = analyze(CORPUS)
    write_analysis(a, tmp_path)
    subgraphs, pdgs, stmts, errors = read_analysis(tmp_path)
    assert sorted(subgraphs, key=lambda s: (s.function, s.variable)) == \
        sorted(a.subgraphs, key=lambda s: (s.function, s.variable))
    assert stmts.to_json() == a.statements.to_json() and errors == []
    assert {k: p.to_json() for k, p in pdgs.items()} == {k: p.to_json() for k, p in a.pdgs.items()}


def test_missing_rating_is_domain_error():
    from upr_audit.pipeline import make_report
    a = analyze(CORPUS[:1])
    with pytest.raises(DomainError):
        make_report(a.subgraphs, a.pdgs, {}, 0.5, 9.0, "mock", "full")


def test_cache_shared_between_runs():
    cache = RatingCache()
    p1, p2 = MockProvider(), MockProvider()
    run_pipeline(corpus_config(), provider=p1, cache=cache, figures=False)
    run_pipeline(corpus_config(), provider=p2, cache=cache, figures=False)
    assert p1.calls == len(analyze(CORPUS).statements) and p2.calls == 0


def test_lambda_and_threshold_reach_report():
    report = run_pipeline(corpus_config(lam=0.0, threshold=5.0), figures=False)
    assert report.meta["lambda"] == 0.0 and report.meta["threshold"] == 5.0
    assert all(e.score.score >= 5.0 for e in report.entries if e.candidate)


# -- instruments -------------------------------------------------------------------

def test_bucket_counts_groups():
    b = BucketCounts(tuple(range(11)))
    assert (b.low, b.mid, b.high, b.total) == (3, 25, 27, 55)
    with pytest.raises(DomainError):
        BucketCounts((1, 2))
    with pytest.raises(DomainError):
        BucketCounts((-1,) + (0,) * 10)


def test_histogram_from_ratings_and_values():
    rm = {"a;": Rating("a;", 9, "mock", "full"), "b;": Rating("b;", 0, "mock", "full")}
    assert histogram(rm).counts == histogram([9, 0]).counts
    assert histogram([]).total == 0


def test_ablation_recall():
    report = UPRReport.from_json({"meta": {"lambda": 0.5}, "variables": [
        {"function": "f", "name": "a", "score": 9.5, "candidate": True},
        {"function": "f", "name": "b", "score": 2.0, "candidate": False}]})
    a, b = VariableKey("f", "a"), VariableKey("f", "b")
    assert ablation_recall([a, b], report) == 0.5
    assert ablation_recall([a], report) == 1.0
    with pytest.raises(DomainError):
        ablation_recall([], report)


def test_report_json_is_valid_json(tmp_path):
    run_pipeline(corpus_config(), tmp_path, figures=False)
    data = json.loads((tmp_path / "report.json").read_text())
    assert set(data) == {"meta", "variables"}


def test_every_variable_reported_once():
    a = analyze(CORPUS)
    report = run_pipeline(corpus_config(), figures=False)
    keys = [e.variable for e in report.entries]
    assert len(keys) == len(set(keys)) and set(keys) == set(a.variables)


def test_mock_histogram_mid_group_smallest():
    from upr_audit.pipeline import rate_statements
    ratings = rate_statements(corpus_config(), analyze(CORPUS).statements)
    b = histogram(ratings)
    assert b.mid < b.high and b.mid < b.low
