from __future__ import annotations

import json
import threading
import time
from decimal import Decimal

import httpx
import pytest

from eventcrs.gateway import (
    BudgetExceeded,
    CostRate,
    Gateway,
    HttpChatProvider,
    Message,
    MockProvider,
    MockRule,
    MockScriptMiss,
    PromptRequest,
    ProviderError,
    Role,
    Stage,
    TOKEN_LIMIT,
    TokenUsage,
    cost_of,
)
from eventcrs.schemas import (
    ParseError,
    default_registry,
    extract_json_payload,
    parse_structured,
)


def req(text="hello", stage=Stage.ACTION_DETECTION, schema=None, max_completion=64, system="sys"):
    return PromptRequest(
        stage=stage,
        messages=(Message(Role.SYSTEM, system), Message(Role.USER, text)),
        output_schema=schema,
        max_completion_tokens=max_completion,
    )


# --- cost model ---------------------------------------------------------------


def test_cost_of_exact_decimal_values():
    rate = CostRate()
    assert cost_of(TokenUsage.of(18106, 0), rate) == Decimal("0.036212")
    assert cost_of(TokenUsage.of(56325, 0), rate) == Decimal("0.112650")
    assert cost_of(TokenUsage.of(23408, 0), rate) == Decimal("0.046816")
    assert cost_of(TokenUsage.of(0, 0), rate) == Decimal("0")


def test_cost_is_linear():
    rate = CostRate(Decimal("0.002"))
    a = TokenUsage.of(1234, 111)
    b = TokenUsage.of(42, 99)
    assert cost_of(a, rate) + cost_of(b, rate) == cost_of(a + b, rate)


def test_token_usage_invariant():
    with pytest.raises(ValueError):
        TokenUsage(10, 10, 21)
    with pytest.raises(ValueError):
        TokenUsage(-1, 0, -1)


# --- structured parsing --------------------------------------------------------


def test_parse_roundtrip_on_exact_payload():
    registry = default_registry()
    value = {"action": "Chat", "reply": "Hi!"}
    payload = json.dumps(value)
    parsed = parse_structured(payload, registry.get("action_detection"))
    assert parsed == value
    assert json.dumps(parsed) == payload


def test_parse_tolerates_surrounding_prose():
    registry = default_registry()
    bare = json.dumps({"action": "Search", "keywords": ["jazz"]})
    wrapped = f"Sure! Here is the result: {bare} Hope that helps."
    assert parse_structured(wrapped, registry.get("action_detection")) == parse_structured(
        bare, registry.get("action_detection")
    )


def test_parse_tolerates_code_fences():
    registry = default_registry()
    text = '```json\n{"action": "Refusal"}\n```'
    assert parse_structured(text, registry.get("action_detection"))["action"] == "Refusal"


def test_parse_missing_required_field_names_it():
    registry = default_registry()
    with pytest.raises(ParseError) as excinfo:
        parse_structured('{"reply": "no action"}', registry.get("action_detection"))
    assert "action" in excinfo.value.missing


def test_parse_enum_violation():
    registry = default_registry()
    with pytest.raises(ParseError):
        parse_structured('{"action": "Dance"}', registry.get("action_detection"))


def test_parse_no_payload_reports_position():
    with pytest.raises(ParseError):
        extract_json_payload("there is no JSON here at all")


def test_parse_nested_verdicts():
    registry = default_registry()
    payload = {"verdicts": [{"event_id": "e1", "matches": True}]}
    parsed = parse_structured(json.dumps(payload), registry.get("reduction_verdicts"))
    assert parsed == payload
    with pytest.raises(ParseError):
        parse_structured('{"verdicts": [{"event_id": "e1"}]}', registry.get("reduction_verdicts"))


# --- mock provider --------------------------------------------------------------


def test_mock_script_is_the_oracle():
    rules = [
        MockRule(Stage.ACTION_DETECTION, pattern="hello", response={"action": "Chat", "reply": "Hi!"})
    ]
    gateway = Gateway(MockProvider(rules))
    result = gateway.complete(req("hello", schema="action_detection"))
    assert result.parsed == {"action": "Chat", "reply": "Hi!"}


def test_budget_exceeded_raised_before_any_call():
    provider = MockProvider([MockRule(Stage.ACTION_DETECTION, response="x")])
    gateway = Gateway(provider)
    big_text = "word " * 4000
    with pytest.raises(BudgetExceeded):
        gateway.complete(req(big_text, max_completion=200))
    assert provider.calls == []  # never reached the provider


def test_budget_gate_is_exact_iff():
    provider = MockProvider([MockRule(Stage.ACTION_DETECTION, pattern="", response="ok")])
    gateway = Gateway(provider)
    request = req("hello")
    estimate = request.prompt_token_estimate()
    at_limit = PromptRequest(
        stage=request.stage,
        messages=request.messages,
        max_completion_tokens=TOKEN_LIMIT - estimate,
    )
    gateway.complete(at_limit)  # exactly at the limit: allowed
    over = PromptRequest(
        stage=request.stage,
        messages=request.messages,
        max_completion_tokens=TOKEN_LIMIT - estimate + 1,
    )
    with pytest.raises(BudgetExceeded):
        gateway.complete(over)


def test_mock_injected_latency_reported_and_slept():
    rules = [
        MockRule(Stage.ACTION_DETECTION, response="ok", injected_latency_ms=120.0)
    ]
    gateway = Gateway(MockProvider(rules))
    started = time.perf_counter()
    result = gateway.complete(req("hi"))
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    assert result.latency_ms == 120.0
    assert elapsed_ms >= 120.0


def test_mock_is_deterministic_across_runs():
    rules = [
        MockRule(Stage.REDUCTION, response={"$reduction_contains": "jazz"}),
    ]
    request = PromptRequest(
        stage=Stage.REDUCTION,
        messages=(
            Message(Role.SYSTEM, "judge"),
            Message(Role.USER, "EVENT e1: Jazz night\nEVENT e2: Techno rave"),
        ),
        output_schema="reduction_verdicts",
        max_completion_tokens=64,
    )
    first = Gateway(MockProvider(rules)).complete(request)
    second = Gateway(MockProvider(rules)).complete(request)
    assert first.raw_text == second.raw_text
    assert first.parsed == {
        "verdicts": [
            {"event_id": "e1", "matches": True},
            {"event_id": "e2", "matches": False},
        ]
    }


def test_mock_script_miss_raises_provider_error():
    gateway = Gateway(MockProvider([]))
    with pytest.raises(MockScriptMiss):
        gateway.complete(req("anything"))


def test_mock_matches_last_user_message_not_few_shot():
    rules = [
        MockRule(Stage.ACTION_DETECTION, pattern="few-shot text", response="WRONG"),
        MockRule(Stage.ACTION_DETECTION, pattern="", response="RIGHT"),
    ]
    request = PromptRequest(
        stage=Stage.ACTION_DETECTION,
        messages=(
            Message(Role.SYSTEM, "sys"),
            Message(Role.USER, "few-shot text"),
            Message(Role.ASSISTANT, "example output"),
            Message(Role.USER, "actual input"),
        ),
        max_completion_tokens=16,
    )
    assert Gateway(MockProvider(rules)).complete(request).raw_text == "RIGHT"


# --- repair re-ask ---------------------------------------------------------------


class FlakyProvider:
    """First reply malformed, second well-formed."""

    def __init__(self):
        self.calls = 0

    def invoke(self, request):
        from eventcrs.gateway import ProviderReply

        self.calls += 1
        if self.calls == 1:
            return ProviderReply("not json at all")
        return ProviderReply('{"action": "Chat", "reply": "fixed"}')


def test_one_repair_reask_then_success():
    provider = FlakyProvider()
    gateway = Gateway(provider)
    result = gateway.complete(req("hello", schema="action_detection"))
    assert provider.calls == 2
    assert result.attempts == 2
    assert result.parsed["reply"] == "fixed"


class AlwaysMalformed:
    def invoke(self, request):
        from eventcrs.gateway import ProviderReply

        return ProviderReply("garbage with no payload")


def test_parse_error_after_two_attempts():
    gateway = Gateway(AlwaysMalformed())
    with pytest.raises(ParseError):
        gateway.complete(req("hello", schema="action_detection"))


def test_metric_emitted_per_logical_call():
    collected = []
    provider = FlakyProvider()
    gateway = Gateway(provider, recorder=collected.append)
    result = gateway.complete(req("hello", schema="action_detection"), session_id="s", turn_id=3)
    assert len(collected) == 1  # repair folded into one metric
    metric = collected[0]
    assert metric.session_id == "s"
    assert metric.turn_id == 3
    assert metric.stage == Stage.ACTION_DETECTION
    assert metric.usage == result.usage
    assert metric.attempts == 2
    assert metric.cost_usd == cost_of(result.usage, gateway.rate)


def test_recorder_failure_does_not_break_call():
    def bad_recorder(metric):
        raise RuntimeError("disk full")

    gateway = Gateway(
        MockProvider([MockRule(Stage.ACTION_DETECTION, response="ok")]), recorder=bad_recorder
    )
    assert gateway.complete(req("hi")).raw_text == "ok"


# --- http provider ---------------------------------------------------------------


def _http_provider(handler):
    return HttpChatProvider(
        base_url="https://llm.example/v1",
        model="test-model",
        api_key="key",
        transport=httpx.MockTransport(handler),
    )


def test_http_provider_parses_completion_and_usage():
    def handler(request):
        body = json.loads(request.content)
        assert body["model"] == "test-model"
        assert request.headers["authorization"] == "Bearer key"
        return httpx.Response(
            200,
            json={
                "choices": [{"message": {"content": "hello back"}}],
                "usage": {"prompt_tokens": 11, "completion_tokens": 5, "total_tokens": 16},
            },
        )

    gateway = Gateway(_http_provider(handler))
    result = gateway.complete(req("hi"))
    assert result.raw_text == "hello back"
    # authoritative usage wins over the local estimate
    assert result.usage == TokenUsage(11, 5, 16)


def test_http_provider_5xx_is_retriable():
    provider = _http_provider(lambda request: httpx.Response(503, text="down"))
    with pytest.raises(ProviderError) as excinfo:
        provider.invoke(req("hi"))
    assert excinfo.value.retriable


def test_http_provider_4xx_not_retriable():
    provider = _http_provider(lambda request: httpx.Response(401, text="bad key"))
    with pytest.raises(ProviderError) as excinfo:
        provider.invoke(req("hi"))
    assert not excinfo.value.retriable


def test_http_provider_timeout_retriable():
    def handler(request):
        raise httpx.ConnectTimeout("slow")

    provider = _http_provider(handler)
    with pytest.raises(ProviderError) as excinfo:
        provider.invoke(req("hi"))
    assert excinfo.value.retriable


# --- request validation -----------------------------------------------------------


def test_prompt_request_requires_messages():
    with pytest.raises(ValueError):
        PromptRequest(stage=Stage.SEARCH, messages=(), max_completion_tokens=10)


def test_prompt_request_temperature_range():
    with pytest.raises(ValueError):
        PromptRequest(
            stage=Stage.SEARCH,
            messages=(Message(Role.USER, "x"),),
            temperature=3.0,
        )


def test_concurrent_gateway_calls_all_record():
    collected = []
    lock = threading.Lock()

    def recorder(metric):
        with lock:
            collected.append(metric)

    gateway = Gateway(
        MockProvider([MockRule(Stage.ACTION_DETECTION, response="ok")]), recorder=recorder
    )
    threads = [
        threading.Thread(target=lambda: gateway.complete(req(f"msg")))
        for _ in range(16)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(collected) == 16
