from __future__ import annotations

import json
import random
import threading

import pytest

from eventcrs.gateway import CostRate, Stage, TokenUsage, cost_of
from eventcrs.telemetry import (
    FailureCategory,
    MetricsFilter,
    MetricsStore,
    PromptMetric,
    PromptTrace,
    TurnLog,
    TurnMetric,
    aggregate,
    classify_failures,
    export_logs,
)

from .conftest import make_event


def pm(
    session="s1",
    turn=1,
    stage=Stage.ACTION_DETECTION,
    tokens=100,
    latency=50.0,
    ts=1_700_000_000.0,
):
    usage = TokenUsage.of(tokens - 10, 10)
    return PromptMetric(
        session_id=session,
        turn_id=turn,
        stage=stage,
        usage=usage,
        latency_ms=latency,
        cost_usd=cost_of(usage, CostRate()),
        timestamp=ts,
    )


# --- record / read back -------------------------------------------------------


def test_prompt_metric_roundtrip(tmp_path):
    store = MetricsStore(str(tmp_path))
    metric = pm()
    store.record(metric)
    assert store.prompt_metrics() == [metric]


def test_turn_metric_roundtrip(tmp_path):
    store = MetricsStore(str(tmp_path))
    metric = TurnMetric.from_prompts("s1", 1, [pm()], 100.0, "Search", timestamp=1.0)
    store.record(metric)
    assert store.turn_metrics() == [metric]


def test_turn_metric_rejects_mismatched_totals():
    with pytest.raises(ValueError):
        TurnMetric.from_prompts("s1", 1, [pm(tokens=100)], 100.0, "Search", total_tokens=1)


def test_turn_metric_rejects_wall_below_prompt_latency():
    with pytest.raises(ValueError):
        TurnMetric.from_prompts("s1", 1, [pm(latency=500.0)], 100.0, "Search")


def test_concurrent_writers_lose_nothing(tmp_path):
    store = MetricsStore(str(tmp_path))

    def write_batch(worker: int):
        for i in range(125):
            store.record(pm(session=f"w{worker}", turn=i))

    threads = [threading.Thread(target=write_batch, args=(w,)) for w in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(store.prompt_metrics()) == 1000


def test_record_safely_swallows_storage_errors(tmp_path, monkeypatch):
    store = MetricsStore(str(tmp_path))

    def boom(*args, **kwargs):
        raise OSError("disk full")

    monkeypatch.setattr(store, "record", boom)
    store.record_safely(pm())  # must not raise


# --- aggregation ---------------------------------------------------------------


def test_single_message_median(tmp_path):
    store = MetricsStore(str(tmp_path))
    store.record(pm(tokens=18106, latency=5700.0))
    store.record(
        TurnMetric.from_prompts("s1", 1, [pm(tokens=18106, latency=5700.0)], 5700.0, "Search")
    )
    report = aggregate(store)
    assert report.per_message.median_tokens == 18106
    assert report.per_message.median_latency_ms == 5700.0


def test_medians_match_sort_oracle(tmp_path):
    rng = random.Random(17)
    store = MetricsStore(str(tmp_path))
    token_values = []
    for i in range(200):
        tokens = rng.randint(50, 40000)
        token_values.append(tokens)
        store.record(pm(session=f"s{i % 7}", turn=i, tokens=tokens, latency=rng.random() * 9000))
    report = aggregate(store)

    def sort_median(values):
        ordered = sorted(values)
        mid = len(ordered) // 2
        if len(ordered) % 2:
            return float(ordered[mid])
        return (ordered[mid - 1] + ordered[mid]) / 2.0

    stage_tokens = [float(t) for t in token_values]
    assert report.stage_rows[Stage.ACTION_DETECTION].median_tokens == sort_median(stage_tokens)


def test_reduction_batches_sum_per_message(tmp_path):
    store = MetricsStore(str(tmp_path))
    # one message with two reduction batch calls: the row aggregates their sum
    store.record(pm(turn=1, stage=Stage.REDUCTION, tokens=11704, latency=2000.0))
    store.record(pm(turn=1, stage=Stage.REDUCTION, tokens=11704, latency=2000.0))
    report = aggregate(store)
    assert report.stage_rows[Stage.REDUCTION].median_tokens == 23408
    assert report.stage_rows[Stage.REDUCTION].median_latency_ms == 4000.0


def test_empty_store_reports_absent_cells(tmp_path):
    report = aggregate(MetricsStore(str(tmp_path)))
    assert report.per_message.median_tokens is None
    assert report.stage_rows[Stage.SEARCH].median_tokens is None
    assert report.total_tokens == 0
    text = report.to_text()
    assert "-" in text


def test_button_only_turns_excluded_from_per_message(tmp_path):
    store = MetricsStore(str(tmp_path))
    store.record(pm(turn=1, tokens=100))
    store.record(TurnMetric.from_prompts("s1", 1, [pm(turn=1, tokens=100)], 60.0, "Search"))
    store.record(TurnMetric.from_prompts("s1", 2, [], 1.0, "CaseSelected"))
    report = aggregate(store)
    assert report.per_message.observations == 1
    assert report.per_message.median_tokens == 100


def test_aggregate_filter_by_session(tmp_path):
    store = MetricsStore(str(tmp_path))
    store.record(pm(session="keep", tokens=100))
    store.record(pm(session="drop", tokens=900))
    report = aggregate(store, MetricsFilter(session_ids=frozenset({"keep"})))
    assert report.prompt_count == 1


def test_aggregate_is_pure(tmp_path):
    store = MetricsStore(str(tmp_path))
    for i in range(20):
        store.record(pm(turn=i, tokens=100 + i))
    assert aggregate(store).to_json() == aggregate(store).to_json()


def test_cost_recomputable_from_usage(tmp_path):
    store = MetricsStore(str(tmp_path))
    for i in range(10):
        store.record(pm(turn=i, tokens=123 + i))
    for metric in store.prompt_metrics():
        assert metric.cost_usd == cost_of(metric.usage, CostRate())


# --- log export -----------------------------------------------------------------


def _search_log(session="s1", turn=1, **overrides):
    log = TurnLog(
        session_id=session,
        turn_id=turn,
        user_input={"kind": "TextMessage", "text": "any jazz?"},
        action="Search",
        outcome="ok",
        assistant_text="found some",
        query={"raw_text": "any jazz?"},
        candidate_ids=["e1", "e2", "e3"],
        verdicts=[
            {"event_id": "e1", "matches": True},
            {"event_id": "e2", "matches": False},
            {"event_id": "e3", "matches": True},
        ],
        slate_ids=["e1", "e3"],
        prompts=[PromptTrace(Stage.ACTION_DETECTION, "req text", "resp text", 42)],
    )
    for key, value in overrides.items():
        setattr(log, key, value)
    return log


def test_search_turn_log_contains_candidates_and_verdicts(tmp_path):
    store = MetricsStore(str(tmp_path))
    store.record(_search_log())
    document = json.loads(export_logs(store))
    entry = document["turns"][0]
    assert entry["candidate_ids"] == ["e1", "e2", "e3"]
    assert entry["slate_ids"] == ["e1", "e3"]
    assert entry["verdicts"][0] == {"event_id": "e1", "matches": True}
    assert entry["prompts"][0]["request_text"] == "req text"


def test_export_twice_is_byte_identical(tmp_path):
    store = MetricsStore(str(tmp_path))
    store.record(_search_log(turn=2))
    store.record(_search_log(turn=1))
    assert export_logs(store) == export_logs(store)


def test_redaction_hashes_prompt_texts_keeps_structure(tmp_path):
    store = MetricsStore(str(tmp_path))
    store.record(_search_log())
    plain = json.loads(export_logs(store))
    redacted = json.loads(export_logs(store, redact=True))
    p_entry, r_entry = plain["turns"][0], redacted["turns"][0]
    assert set(p_entry.keys()) == set(r_entry.keys())
    assert r_entry["candidate_ids"] == p_entry["candidate_ids"]
    assert r_entry["prompts"][0]["request_text"].startswith("sha256:")
    assert r_entry["prompts"][0]["response_text"].startswith("sha256:")
    assert r_entry["prompts"][0]["stage"] == "ActionDetection"


# --- failure classification -------------------------------------------------------


@pytest.fixture
def failure_catalog():
    from eventcrs.catalog import Catalog

    return Catalog(
        [
            make_event("e1", title="Jazz Night at the Blue Note", start="2023-10-25T19:30:00Z"),
            make_event("e2", title="Warehouse Techno Night", start="2023-10-21T23:00:00Z"),
            make_event("e3", title="City Autumn Run", start="2023-10-29T09:00:00Z"),
        ]
    )


def test_relevance_missing_rule(failure_catalog):
    logs = [_search_log(slate_ids=[], verdicts=[])]
    tags = classify_failures(logs, failure_catalog, success=False)
    assert [t.category for t in tags] == [FailureCategory.RELEVANCE_MISSING]


def test_targeted_inquiry_failed_rule(failure_catalog):
    logs = [
        _search_log(),
        TurnLog(
            session_id="s1",
            turn_id=2,
            user_input={"kind": "TextMessage", "text": "when does Jazz Night start?"},
            action="Refusal",
            outcome="ok",
            assistant_text="refused",
            visible_cards=["e1"],
            slate_ids=[],
        ),
    ]
    tags = classify_failures(logs, failure_catalog, success=False)
    assert FailureCategory.TARGETED_INQUIRY_FAILED in [t.category for t in tags]


def test_clarify_loop_counts_as_failed_inquiry(failure_catalog):
    def clarify(turn):
        return TurnLog(
            session_id="s1",
            turn_id=turn,
            user_input={"kind": "TextMessage", "text": "what about it?"},
            action="TargetedInquiry",
            outcome="clarify",
            assistant_text="which event do you mean?",
            visible_cards=["e1", "e2"],
        )

    tags = classify_failures([clarify(1), clarify(2)], failure_catalog, success=False)
    assert FailureCategory.TARGETED_INQUIRY_FAILED in [t.category for t in tags]


def test_time_location_mismatch_rule(failure_catalog):
    log = _search_log(
        extracted_window={"start": "2023-10-20T00:00:00Z", "end": "2023-10-20T23:59:59Z"},
        slate_ids=["e1", "e3"],  # both outside the stated Friday
        candidate_ids=["e1", "e3"],
        verdicts=[
            {"event_id": "e1", "matches": True},
            {"event_id": "e3", "matches": True},
        ],
    )
    tags = classify_failures([log], failure_catalog, success=False)
    assert [t.category for t in tags] == [FailureCategory.TIME_LOCATION_MISMATCH]


def test_successful_session_never_tagged(failure_catalog):
    logs = [_search_log(slate_ids=[])]
    assert classify_failures(logs, failure_catalog, success=True) == []


def test_unclassified_failure_yields_zero_tags(failure_catalog):
    # a failed session whose logs trip no rule
    logs = [_search_log()]  # healthy search turn
    assert classify_failures(logs, failure_catalog, success=False) == []
