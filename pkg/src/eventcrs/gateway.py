"""Uniform LLM gateway: providers, token budget, structured parsing, cost.

Every completion goes through :class:`Gateway.complete`, which enforces
the 4096-token per-call ceiling *before* any provider I/O, attempts one
repair re-ask when a schema parse fails, computes cost at the configured
rate, and emits exactly one :class:`~eventcrs.telemetry.PromptMetric`
per logical call (repair attempts fold into the same metric).

Two providers ship here: a remote HTTP chat-completion client and a
scripted mock. The mock is the test and simulation workhorse: it does
zero network I/O, resolves responses by (stage, pattern) against the
rendered prompt, sleeps for its configured injected latency, and reports
that latency verbatim so replays are bit-deterministic.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from typing import Callable, Optional, Sequence

import httpx

from .schemas import ObjectSpec, ParseError, SchemaRegistry, default_registry, parse_structured
from .tokens import count_message_tokens, count_tokens

TOKEN_LIMIT = 4096


class Stage(str, Enum):
    ACTION_DETECTION = "ActionDetection"
    TARGETED_INQUIRY = "TargetedInquiry"
    SEARCH = "Search"
    RECOMMENDER = "Recommender"
    REDUCTION = "Reduction"
    ANSWER_CREATION = "AnswerCreation"


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class Message:
    role: Role
    text: str


@dataclass(frozen=True)
class PromptRequest:
    stage: Stage
    messages: tuple[Message, ...]
    output_schema: Optional[str] = None
    max_completion_tokens: int = 256
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_completion_tokens < 1:
            raise ValueError("max_completion_tokens must be >= 1")

    def prompt_token_estimate(self) -> int:
        return count_message_tokens(m.text for m in self.messages)

    def joined_text(self) -> str:
        return "\n".join(m.text for m in self.messages)


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int
    completion_tokens: int
    total_tokens: int

    def __post_init__(self) -> None:
        if min(self.prompt_tokens, self.completion_tokens, self.total_tokens) < 0:
            raise ValueError("token counts must be >= 0")
        if self.total_tokens != self.prompt_tokens + self.completion_tokens:
            raise ValueError("total_tokens must equal prompt + completion")

    @classmethod
    def of(cls, prompt_tokens: int, completion_tokens: int) -> "TokenUsage":
        return cls(prompt_tokens, completion_tokens, prompt_tokens + completion_tokens)

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage.of(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )


@dataclass(frozen=True)
class CostRate:
    usd_per_1000_tokens: Decimal = Decimal("0.002")

    def __post_init__(self) -> None:
        if self.usd_per_1000_tokens <= 0:
            raise ValueError("rate must be > 0")


def cost_of(usage: TokenUsage, rate: CostRate = CostRate()) -> Decimal:
    """Exact-decimal cost in USD for ``usage`` at ``rate``."""
    return Decimal(usage.total_tokens) * rate.usd_per_1000_tokens / Decimal(1000)


@dataclass(frozen=True)
class CompletionResult:
    raw_text: str
    usage: TokenUsage
    latency_ms: float
    parsed: Optional[dict] = None
    attempts: int = 1
    prompt_token_estimate: int = 0
    metric: Optional[object] = None  # PromptMetric for the call
    request_text: str = ""  # rendered prompt, for the turn log


class BudgetExceeded(Exception):
    def __init__(self, estimate: int, max_completion: int):
        self.estimate = estimate
        self.max_completion = max_completion
        super().__init__(
            f"prompt estimate {estimate} + completion budget {max_completion} "
            f"exceeds the {TOKEN_LIMIT}-token limit"
        )


class ProviderError(Exception):
    def __init__(self, message: str, retriable: bool = False):
        self.retriable = retriable
        super().__init__(message)


@dataclass(frozen=True)
class ProviderReply:
    raw_text: str
    usage: Optional[TokenUsage] = None  # authoritative when present
    latency_ms: Optional[float] = None  # authoritative when present


class HttpChatProvider:
    """OpenAI-style chat-completion client over HTTPS.

    Base URL, model, and key come from config or the environment
    (CRS_LLM_BASE_URL / CRS_LLM_MODEL / CRS_LLM_API_KEY).
    """

    def __init__(
        self,
        base_url: Optional[str] = None,
        model: Optional[str] = None,
        api_key: Optional[str] = None,
        timeout_s: float = 30.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.base_url = (base_url or os.environ.get("CRS_LLM_BASE_URL", "")).rstrip("/")
        self.model = model or os.environ.get("CRS_LLM_MODEL", "gpt-3.5-turbo")
        self.api_key = api_key or os.environ.get("CRS_LLM_API_KEY", "")
        if not self.base_url:
            raise ValueError("http provider requires a base URL")
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def invoke(self, request: PromptRequest) -> ProviderReply:
        payload = {
            "model": self.model,
            "messages": [{"role": m.role.value, "content": m.text} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_completion_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        started = time.perf_counter()
        try:
            response = self._client.post(
                f"{self.base_url}/chat/completions", json=payload, headers=headers
            )
        except httpx.TimeoutException as exc:
            raise ProviderError(f"request timed out: {exc}", retriable=True) from exc
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport failure: {exc}", retriable=True) from exc
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        if response.status_code >= 500 or response.status_code == 429:
            raise ProviderError(f"HTTP {response.status_code}", retriable=True)
        if response.status_code >= 400:
            raise ProviderError(f"HTTP {response.status_code}: {response.text[:200]}")
        body = response.json()
        try:
            text = body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion body: {exc}") from exc
        usage = None
        if isinstance(body.get("usage"), dict):
            u = body["usage"]
            usage = TokenUsage(
                int(u.get("prompt_tokens", 0)),
                int(u.get("completion_tokens", 0)),
                int(u.get("total_tokens", 0)),
            )
        return ProviderReply(text, usage=usage, latency_ms=elapsed_ms)

    def close(self) -> None:
        self._client.close()


@dataclass(frozen=True)
class MockRule:
    stage: Stage
    pattern: str = ""  # substring; empty matches everything
    regex: Optional[str] = None
    response: object = ""  # str, dict payload, or a $-directive dict
    injected_latency_ms: float = 0.0

    def matches(self, prompt_text: str) -> bool:
        if self.regex is not None:
            return re.search(self.regex, prompt_text) is not None
        return self.pattern in prompt_text


#: Marker lines the reduction prompt uses to list candidates. The mock
#: parses these back out to compute per-event verdicts, which keeps
#: "match iff summary contains X" scripts expressible.
EVENT_LINE_RE = re.compile(r"^EVENT (\S+): (.*)$", re.MULTILINE)


class MockScriptMiss(ProviderError):
    pass


class MockProvider:
    """Deterministic scripted provider; zero network I/O.

    Rules are evaluated in order; the first whose stage matches the
    request and whose pattern matches the *last user message* (the
    actual user input, not few-shot examples or system text) wins. A
    rule's response is either a literal string, a literal JSON payload,
    or one of a few dynamic directives, which may inspect the whole
    rendered prompt:

      {"$reduction_contains": "jazz"}   per-event verdicts: summary
                                        contains the needle (case-insensitive)
      {"$reduction_all": true|false}    uniform verdicts
      {"$line_containing": "Price"}     echo the first prompt line with
                                        the needle (dossier echo scripts)

    Injected latency is actually slept *and* reported verbatim, so wall
    clocks stay consistent while replays remain bit-deterministic.
    """

    def __init__(self, rules: Sequence[MockRule], sleep: Callable[[float], None] = time.sleep):
        self.rules = list(rules)
        self._sleep = sleep
        self.calls: list[PromptRequest] = []

    @classmethod
    def from_script_file(cls, path: str, **kwargs) -> "MockProvider":
        rules = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rules.append(mock_rule_from_json(json.loads(line)))
        return cls(rules, **kwargs)

    def invoke(self, request: PromptRequest) -> ProviderReply:
        self.calls.append(request)
        prompt_text = request.joined_text()
        user_texts = [m.text for m in request.messages if m.role == Role.USER]
        match_target = user_texts[-1] if user_texts else prompt_text
        for rule in self.rules:
            if rule.stage == request.stage and rule.matches(match_target):
                text = self._render(rule.response, prompt_text)
                if rule.injected_latency_ms > 0:
                    self._sleep(rule.injected_latency_ms / 1000.0)
                return ProviderReply(text, latency_ms=float(rule.injected_latency_ms))
        raise MockScriptMiss(
            f"no mock rule matches stage={request.stage.value} input={match_target[:120]!r}"
        )

    @staticmethod
    def _render(response: object, prompt_text: str) -> str:
        if isinstance(response, str):
            return response
        if isinstance(response, dict):
            if "$reduction_contains" in response:
                needle = str(response["$reduction_contains"]).lower()
                verdicts = [
                    {"event_id": event_id, "matches": needle in summary.lower()}
                    for event_id, summary in EVENT_LINE_RE.findall(prompt_text)
                ]
                return json.dumps({"verdicts": verdicts}, ensure_ascii=False)
            if "$reduction_all" in response:
                flag = bool(response["$reduction_all"])
                verdicts = [
                    {"event_id": event_id, "matches": flag}
                    for event_id, _ in EVENT_LINE_RE.findall(prompt_text)
                ]
                return json.dumps({"verdicts": verdicts}, ensure_ascii=False)
            if "$line_containing" in response:
                needle = str(response["$line_containing"])
                for line in prompt_text.splitlines():
                    if needle in line:
                        return line.strip()
                return "not stated"
            return json.dumps(response, ensure_ascii=False)
        raise ValueError(f"unsupported mock response: {response!r}")


def mock_rule_from_json(payload: dict) -> MockRule:
    match = payload.get("match", "")
    pattern, regex = "", None
    if isinstance(match, str):
        pattern = match
    elif isinstance(match, dict):
        pattern = match.get("substring", "")
        regex = match.get("regex")
    return MockRule(
        stage=Stage(payload["stage_label"]),
        pattern=pattern,
        regex=regex,
        response=payload.get("response", ""),
        injected_latency_ms=float(payload.get("injected_latency_ms", 0)),
    )


_REPAIR_INSTRUCTION = (
    "The previous reply could not be parsed: {reason}. "
    "Respond again with only the required JSON payload and no extra text."
)


class Gateway:
    """Budget-gated completion facade over a provider.

    ``recorder`` (when set) receives one PromptMetric per logical call;
    the caller supplies session/turn identifiers for attribution.
    """

    def __init__(
        self,
        provider,
        registry: Optional[SchemaRegistry] = None,
        rate: CostRate = CostRate(),
        recorder: Optional[Callable] = None,
        clock: Callable[[], float] = time.time,
    ):
        self.provider = provider
        self.registry = registry or default_registry()
        self.rate = rate
        self.recorder = recorder
        self.clock = clock

    def complete(
        self, request: PromptRequest, session_id: str = "-", turn_id: int = 0
    ) -> CompletionResult:
        estimate = request.prompt_token_estimate()
        if estimate + request.max_completion_tokens > TOKEN_LIMIT:
            raise BudgetExceeded(estimate, request.max_completion_tokens)

        schema: Optional[ObjectSpec] = None
        if request.output_schema is not None:
            schema = self.registry.get(request.output_schema)

        reply, measured_ms = self._invoke(request)
        usage = reply.usage or TokenUsage.of(estimate, count_tokens(reply.raw_text))
        latency_ms = reply.latency_ms if reply.latency_ms is not None else measured_ms
        attempts = 1
        parsed: Optional[dict] = None

        if schema is not None:
            try:
                parsed = parse_structured(reply.raw_text, schema)
            except ParseError as first_error:
                repaired = self._repair_request(request, reply.raw_text, first_error)
                if repaired is None:
                    first_error.metric = self._emit(
                        request, usage, latency_ms, session_id, turn_id, attempts
                    )
                    raise
                retry, retry_ms = self._invoke(repaired)
                attempts = 2
                retry_usage = retry.usage or TokenUsage.of(
                    repaired.prompt_token_estimate(), count_tokens(retry.raw_text)
                )
                usage = usage + retry_usage
                latency_ms += retry.latency_ms if retry.latency_ms is not None else retry_ms
                try:
                    parsed = parse_structured(retry.raw_text, schema)
                except ParseError as second_error:
                    second_error.metric = self._emit(
                        request, usage, latency_ms, session_id, turn_id, attempts
                    )
                    raise
                reply = retry

        metric = self._emit(request, usage, latency_ms, session_id, turn_id, attempts)
        return CompletionResult(
            raw_text=reply.raw_text,
            usage=usage,
            latency_ms=latency_ms,
            parsed=parsed,
            attempts=attempts,
            prompt_token_estimate=estimate,
            metric=metric,
            request_text=request.joined_text(),
        )

    def _invoke(self, request: PromptRequest) -> tuple[ProviderReply, float]:
        started = time.perf_counter()
        reply = self.provider.invoke(request)
        return reply, (time.perf_counter() - started) * 1000.0

    def _repair_request(
        self, request: PromptRequest, raw_text: str, error: ParseError
    ) -> Optional[PromptRequest]:
        messages = request.messages + (
            Message(Role.ASSISTANT, raw_text),
            Message(Role.USER, _REPAIR_INSTRUCTION.format(reason=error.reason)),
        )
        repaired = PromptRequest(
            stage=request.stage,
            messages=messages,
            output_schema=request.output_schema,
            max_completion_tokens=request.max_completion_tokens,
            temperature=request.temperature,
        )
        if repaired.prompt_token_estimate() + repaired.max_completion_tokens > TOKEN_LIMIT:
            return None  # repair would blow the budget; surface the parse failure
        return repaired

    def _emit(
        self,
        request: PromptRequest,
        usage: TokenUsage,
        latency_ms: float,
        session_id: str,
        turn_id: int,
        attempts: int,
    ):
        from .telemetry import PromptMetric  # local import to avoid a cycle

        metric = PromptMetric(
            session_id=session_id,
            turn_id=turn_id,
            stage=request.stage,
            usage=usage,
            latency_ms=latency_ms,
            cost_usd=cost_of(usage, self.rate),
            timestamp=self.clock(),
            attempts=attempts,
        )
        if self.recorder is not None:
            try:
                self.recorder(metric)
            except Exception:  # telemetry must never break the product path
                import logging

                logging.getLogger(__name__).exception("metric recorder failed")
        return metric
