"""Per-prompt and per-turn telemetry, aggregation, logs, failure tagging.

Every LLM call produces a :class:`PromptMetric`; every turn produces a
:class:`TurnMetric` plus a structured :class:`TurnLog` (inputs, detected
action, candidates, verdicts, slate, raw prompt texts). Records append
to a JSON Lines store, one file per day, and aggregation produces the
median-based token/latency report the operator CLI prints.

Telemetry is an instrument, not a dependency: storage failures are
logged and swallowed so a turn always completes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from enum import Enum
from statistics import median
from typing import Iterator, Optional, Sequence

from .catalog import Catalog, TimeWindow, parse_timestamp
from .gateway import Stage, TokenUsage

logger = logging.getLogger(__name__)

#: Report row labels, in fixed display order.
STAGE_LABELS: dict[Stage, str] = {
    Stage.ACTION_DETECTION: "Action Detection (including Chat, Refusal)",
    Stage.TARGETED_INQUIRY: "Targeted Inquiry",
    Stage.SEARCH: "Search",
    Stage.RECOMMENDER: "Recommender",
    Stage.REDUCTION: "Reduction",
    Stage.ANSWER_CREATION: "Answer creation",
}


@dataclass(frozen=True)
class PromptMetric:
    session_id: str
    turn_id: int
    stage: Stage
    usage: TokenUsage
    latency_ms: float
    cost_usd: Decimal
    timestamp: float
    attempts: int = 1

    def to_json(self) -> dict:
        return {
            "kind": "prompt",
            "session_id": self.session_id,
            "turn_id": self.turn_id,
            "stage": self.stage.value,
            "prompt_tokens": self.usage.prompt_tokens,
            "completion_tokens": self.usage.completion_tokens,
            "total_tokens": self.usage.total_tokens,
            "latency_ms": self.latency_ms,
            "cost_usd": str(self.cost_usd),
            "timestamp": self.timestamp,
            "attempts": self.attempts,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PromptMetric":
        return cls(
            session_id=payload["session_id"],
            turn_id=payload["turn_id"],
            stage=Stage(payload["stage"]),
            usage=TokenUsage(
                payload["prompt_tokens"],
                payload["completion_tokens"],
                payload["total_tokens"],
            ),
            latency_ms=payload["latency_ms"],
            cost_usd=Decimal(payload["cost_usd"]),
            timestamp=payload["timestamp"],
            attempts=payload.get("attempts", 1),
        )


@dataclass(frozen=True)
class TurnMetric:
    session_id: str
    turn_id: int
    total_tokens: int
    total_cost_usd: Decimal
    wall_latency_ms: float
    prompt_count: int
    action_taken: str
    timestamp: float = 0.0

    @classmethod
    def from_prompts(
        cls,
        session_id: str,
        turn_id: int,
        prompts: Sequence[PromptMetric],
        wall_latency_ms: float,
        action_taken: str,
        timestamp: float = 0.0,
        total_tokens: Optional[int] = None,
    ) -> "TurnMetric":
        computed = sum(p.usage.total_tokens for p in prompts)
        if total_tokens is not None and total_tokens != computed:
            raise ValueError(
                f"total_tokens {total_tokens} does not match prompt sum {computed}"
            )
        if prompts and wall_latency_ms < max(p.latency_ms for p in prompts):
            raise ValueError("wall latency must cover every contained prompt latency")
        return cls(
            session_id=session_id,
            turn_id=turn_id,
            total_tokens=computed,
            total_cost_usd=sum((p.cost_usd for p in prompts), Decimal(0)),
            wall_latency_ms=wall_latency_ms,
            prompt_count=len(prompts),
            action_taken=action_taken,
            timestamp=timestamp,
        )

    def to_json(self) -> dict:
        return {
            "kind": "turn",
            "session_id": self.session_id,
            "turn_id": self.turn_id,
            "total_tokens": self.total_tokens,
            "total_cost_usd": str(self.total_cost_usd),
            "wall_latency_ms": self.wall_latency_ms,
            "prompt_count": self.prompt_count,
            "action_taken": self.action_taken,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "TurnMetric":
        return cls(
            session_id=payload["session_id"],
            turn_id=payload["turn_id"],
            total_tokens=payload["total_tokens"],
            total_cost_usd=Decimal(payload["total_cost_usd"]),
            wall_latency_ms=payload["wall_latency_ms"],
            prompt_count=payload["prompt_count"],
            action_taken=payload["action_taken"],
            timestamp=payload.get("timestamp", 0.0),
        )


@dataclass(frozen=True)
class PromptTrace:
    """Raw request/response pair for one LLM call (log payload)."""

    stage: Stage
    request_text: str
    response_text: str
    prompt_token_estimate: int = 0

    def to_json(self, redact: bool = False) -> dict:
        def body(text: str) -> str:
            if redact:
                return "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()
            return text

        return {
            "stage": self.stage.value,
            "request_text": body(self.request_text),
            "response_text": body(self.response_text),
            "prompt_token_estimate": self.prompt_token_estimate,
        }


@dataclass
class TurnLog:
    """Structured record of one turn: the root-cause-analysis instrument."""

    session_id: str
    turn_id: int
    user_input: dict
    action: Optional[str] = None
    outcome: Optional[str] = None  # e.g. "clarify", "error", "ok"
    assistant_text: str = ""
    query: Optional[dict] = None
    candidate_ids: list[str] = field(default_factory=list)
    verdicts: list[dict] = field(default_factory=list)
    slate_ids: list[str] = field(default_factory=list)
    extracted_window: Optional[dict] = None
    window_used: Optional[dict] = None
    window_source: Optional[str] = None
    visible_cards: list[str] = field(default_factory=list)
    prompts: list[PromptTrace] = field(default_factory=list)

    _FIELD_ORDER = (
        "session_id",
        "turn_id",
        "user_input",
        "action",
        "outcome",
        "assistant_text",
        "query",
        "candidate_ids",
        "verdicts",
        "slate_ids",
        "extracted_window",
        "window_used",
        "window_source",
        "visible_cards",
        "prompts",
    )

    def to_json(self, redact: bool = False) -> dict:
        payload: dict = {"kind": "turn_log"}
        for name in self._FIELD_ORDER:
            value = getattr(self, name)
            if name == "prompts":
                value = [trace.to_json(redact=redact) for trace in value]
            payload[name] = value
        return payload

    @classmethod
    def from_json(cls, payload: dict) -> "TurnLog":
        prompts = [
            PromptTrace(
                stage=Stage(p["stage"]),
                request_text=p["request_text"],
                response_text=p["response_text"],
                prompt_token_estimate=p.get("prompt_token_estimate", 0),
            )
            for p in payload.get("prompts", [])
        ]
        kwargs = {name: payload.get(name) for name in cls._FIELD_ORDER}
        kwargs["prompts"] = prompts
        for list_field in ("candidate_ids", "verdicts", "slate_ids", "visible_cards"):
            kwargs[list_field] = list(kwargs.get(list_field) or [])
        return cls(**kwargs)


class MetricsStore:
    """Append-only JSON Lines store, one file per UTC day.

    Appends are serialized by a lock and flushed before returning, so a
    record is durable before the turn's reply goes out. Reads see a
    consistent snapshot (files are read line-by-line; partial trailing
    lines are ignored).
    """

    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self._lock = threading.Lock()

    def _path_for(self, timestamp: float) -> str:
        day = datetime.fromtimestamp(timestamp, tz=timezone.utc).strftime("%Y%m%d")
        return os.path.join(self.directory, f"metrics-{day}.jsonl")

    def record(self, record: "PromptMetric | TurnMetric | TurnLog") -> None:
        timestamp = getattr(record, "timestamp", 0.0) or 0.0
        line = json.dumps(record.to_json(), ensure_ascii=False, sort_keys=True)
        with self._lock:
            with open(self._path_for(timestamp), "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()

    def record_safely(self, record) -> None:
        try:
            self.record(record)
        except Exception:
            logger.exception("metrics store append failed; turn continues")

    def _iter_payloads(self) -> Iterator[dict]:
        if not os.path.isdir(self.directory):
            return
        for name in sorted(os.listdir(self.directory)):
            if not name.endswith(".jsonl"):
                continue
            with open(os.path.join(self.directory, name), encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        yield json.loads(line)
                    except json.JSONDecodeError:
                        continue  # torn write; skip

    def prompt_metrics(self) -> list[PromptMetric]:
        return [
            PromptMetric.from_json(p) for p in self._iter_payloads() if p.get("kind") == "prompt"
        ]

    def turn_metrics(self) -> list[TurnMetric]:
        return [TurnMetric.from_json(p) for p in self._iter_payloads() if p.get("kind") == "turn"]

    def turn_logs(self, session_id: Optional[str] = None) -> list[TurnLog]:
        logs = [
            TurnLog.from_json(p) for p in self._iter_payloads() if p.get("kind") == "turn_log"
        ]
        if session_id is not None:
            logs = [entry for entry in logs if entry.session_id == session_id]
        return logs


@dataclass(frozen=True)
class MetricsFilter:
    since: Optional[float] = None
    until: Optional[float] = None
    session_ids: Optional[frozenset[str]] = None

    def admits(self, record: "PromptMetric | TurnMetric") -> bool:
        if self.since is not None and record.timestamp < self.since:
            return False
        if self.until is not None and record.timestamp > self.until:
            return False
        if self.session_ids is not None and record.session_id not in self.session_ids:
            return False
        return True


@dataclass(frozen=True)
class ReportCell:
    median_tokens: Optional[float]
    median_latency_ms: Optional[float]
    observations: int


@dataclass(frozen=True)
class MetricsReport:
    stage_rows: dict[Stage, ReportCell]
    per_message: ReportCell
    per_session: ReportCell
    total_tokens: int
    total_cost_usd: Decimal
    prompt_count: int
    turn_count: int
    session_count: int

    def to_json(self) -> dict:
        def cell(c: ReportCell) -> dict:
            return {
                "median_tokens": c.median_tokens,
                "median_latency_ms": c.median_latency_ms,
                "observations": c.observations,
            }

        return {
            "stages": {STAGE_LABELS[stage]: cell(c) for stage, c in self.stage_rows.items()},
            "per_message": cell(self.per_message),
            "per_session": cell(self.per_session),
            "totals": {
                "total_tokens": self.total_tokens,
                "total_cost_usd": str(self.total_cost_usd),
                "prompt_count": self.prompt_count,
                "turn_count": self.turn_count,
                "session_count": self.session_count,
            },
        }

    def to_text(self) -> str:
        def fmt_tokens(value: Optional[float]) -> str:
            if value is None:
                return "-"
            return str(int(value)) if float(value).is_integer() else f"{value:.1f}"

        def fmt_latency(value: Optional[float]) -> str:
            return "-" if value is None else f"{value / 1000.0:.1f}s"

        lines = []
        header = f"{'Phase/ action':<44}{'Median tokens used per chat message':>38}{'Median latency per message':>30}"
        lines.append(header)
        lines.append("-" * len(header))
        for stage in STAGE_LABELS:
            cell = self.stage_rows.get(stage, ReportCell(None, None, 0))
            lines.append(
                f"{STAGE_LABELS[stage]:<44}"
                f"{fmt_tokens(cell.median_tokens):>38}"
                f"{fmt_latency(cell.median_latency_ms):>30}"
            )
        lines.append("")
        lines.append(
            f"{'Median tokens used per chat message':<44}{fmt_tokens(self.per_message.median_tokens):>38}"
        )
        lines.append(
            f"{'Median tokens used per chat session':<44}{fmt_tokens(self.per_session.median_tokens):>38}"
        )
        lines.append(
            f"{'Median latency per message':<44}{fmt_latency(self.per_message.median_latency_ms):>38}"
        )
        lines.append(
            f"{'Median latency per chat session':<44}{fmt_latency(self.per_session.median_latency_ms):>38}"
        )
        lines.append("")
        lines.append(f"{'Total tokens':<44}{self.total_tokens:>38}")
        lines.append(f"{'Total cost (USD)':<44}{str(self.total_cost_usd):>38}")
        lines.append(
            f"{'Observations (prompts/turns/sessions)':<44}"
            f"{f'{self.prompt_count}/{self.turn_count}/{self.session_count}':>38}"
        )
        return "\n".join(lines)


def _median_or_none(values: list[float]) -> Optional[float]:
    # statistics.median already averages the central pair on even counts
    return float(median(values)) if values else None


def aggregate(store: MetricsStore, metrics_filter: MetricsFilter = MetricsFilter()) -> MetricsReport:
    """Median-based token/latency report over the store contents.

    Per-stage values are per *message*: a turn's metrics for a stage are
    summed first (a reduction pass can span several batch calls), then
    the median is taken across turns that used the stage. Per-message
    medians cover turns with at least one LLM call; per-session medians
    cover sums over such turns.
    """
    prompts = [p for p in store.prompt_metrics() if metrics_filter.admits(p)]
    turns = [t for t in store.turn_metrics() if metrics_filter.admits(t)]

    by_turn_stage: dict[tuple[str, int, Stage], dict[str, float]] = {}
    for p in prompts:
        slot = by_turn_stage.setdefault(
            (p.session_id, p.turn_id, p.stage), {"tokens": 0.0, "latency": 0.0}
        )
        slot["tokens"] += p.usage.total_tokens
        slot["latency"] += p.latency_ms

    stage_rows: dict[Stage, ReportCell] = {}
    for stage in Stage:
        tokens = [v["tokens"] for (s, t, st), v in by_turn_stage.items() if st == stage]
        latencies = [v["latency"] for (s, t, st), v in by_turn_stage.items() if st == stage]
        stage_rows[stage] = ReportCell(
            _median_or_none(tokens), _median_or_none(latencies), len(tokens)
        )

    llm_turns = [t for t in turns if t.prompt_count > 0]
    per_message = ReportCell(
        _median_or_none([float(t.total_tokens) for t in llm_turns]),
        _median_or_none([t.wall_latency_ms for t in llm_turns]),
        len(llm_turns),
    )

    session_tokens: dict[str, float] = {}
    session_latency: dict[str, float] = {}
    for t in llm_turns:
        session_tokens[t.session_id] = session_tokens.get(t.session_id, 0.0) + t.total_tokens
        session_latency[t.session_id] = session_latency.get(t.session_id, 0.0) + t.wall_latency_ms
    per_session = ReportCell(
        _median_or_none(list(session_tokens.values())),
        _median_or_none(list(session_latency.values())),
        len(session_tokens),
    )

    return MetricsReport(
        stage_rows=stage_rows,
        per_message=per_message,
        per_session=per_session,
        total_tokens=sum(p.usage.total_tokens for p in prompts),
        total_cost_usd=sum((p.cost_usd for p in prompts), Decimal(0)),
        prompt_count=len(prompts),
        turn_count=len(turns),
        session_count=len({t.session_id for t in turns}),
    )


def export_logs(store: MetricsStore, redact: bool = False) -> str:
    """Deterministic JSON document of all turn logs.

    Ordering is (session_id, turn_id); field order is fixed. With
    ``redact`` set, raw prompt texts are replaced by their SHA-256
    hashes while every structural field stays intact.
    """
    logs = sorted(store.turn_logs(), key=lambda entry: (entry.session_id, entry.turn_id))
    payload = {"turns": [entry.to_json(redact=redact) for entry in logs]}
    return json.dumps(payload, ensure_ascii=False, indent=2)


class FailureCategory(str, Enum):
    RELEVANCE_MISSING = "RelevanceMissing"
    TARGETED_INQUIRY_FAILED = "TargetedInquiryFailed"
    TIME_LOCATION_MISMATCH = "TimeLocationMismatch"


@dataclass(frozen=True)
class FailureTag:
    session_id: str
    category: FailureCategory
    evidence: tuple[str, ...]


_STOPWORDS = frozenset(
    "the a an at on in of for to and or is are was were it this that with about "
    "when does do how much what where start starts".split()
)


def _title_tokens(text: str) -> set[str]:
    return {w.lower() for w in text.split() if w.isalnum() and w.lower() not in _STOPWORDS}


def classify_failures(
    session_logs: Sequence[TurnLog],
    catalog: Catalog,
    success: bool,
) -> list[FailureTag]:
    """Rule-based failure tags for an unsuccessful session.

    RelevanceMissing: a retrieval turn had candidates but produced an
    empty or near-empty slate. TargetedInquiryFailed: a Refusal on a
    turn that references a visible card, or back-to-back clarification
    loops. TimeLocationMismatch: the user stated a time window in chat
    but slate events fall outside it (typically because a button-set
    window took precedence). Successful sessions are never tagged.
    """
    if success or not session_logs:
        return []
    session_id = session_logs[0].session_id
    tags: list[FailureTag] = []

    # Missing relevance: candidates existed, slate came back (near-)empty.
    evidence = [
        f"turn {entry.turn_id}: {len(entry.candidate_ids)} candidates -> "
        f"{len(entry.slate_ids)} slate items"
        for entry in session_logs
        if entry.action in ("Search", "Recommendation")
        and entry.candidate_ids
        and len(entry.slate_ids) <= 1
        and len(entry.candidate_ids) >= 2
    ]
    if evidence:
        tags.append(FailureTag(session_id, FailureCategory.RELEVANCE_MISSING, tuple(evidence)))

    # Failed targeted inquiry: refusal while a referenced card was visible,
    # or consecutive clarification turns.
    evidence = []
    previous_clarify = False
    for entry in session_logs:
        text = str(entry.user_input.get("text", "") if entry.user_input else "")
        if entry.action == "Refusal" and entry.visible_cards:
            words = _title_tokens(text)
            for card_id in entry.visible_cards:
                event = catalog.get(card_id)
                if event is not None and words & _title_tokens(event.title):
                    evidence.append(f"turn {entry.turn_id}: refusal while '{event.title}' visible")
                    break
        is_clarify = entry.outcome == "clarify"
        if is_clarify and previous_clarify:
            evidence.append(f"turn {entry.turn_id}: repeated clarification")
        previous_clarify = is_clarify
    if evidence:
        tags.append(
            FailureTag(session_id, FailureCategory.TARGETED_INQUIRY_FAILED, tuple(evidence))
        )

    # Time/location mismatch: chat-stated window ignored by a slate.
    evidence = []
    stated_window: Optional[TimeWindow] = None
    for entry in session_logs:
        if entry.extracted_window:
            stated_window = TimeWindow(
                parse_timestamp(entry.extracted_window["start"]),
                parse_timestamp(entry.extracted_window["end"]),
            )
        if stated_window is None or not entry.slate_ids:
            continue
        outside = []
        for event_id in entry.slate_ids:
            event = catalog.get(event_id)
            if event is not None and not stated_window.intersects(
                event.start_time, event.effective_end
            ):
                outside.append(event_id)
        if outside and len(outside) == len(
            [e for e in entry.slate_ids if catalog.get(e) is not None]
        ):
            evidence.append(
                f"turn {entry.turn_id}: all slate events outside the chat-stated window "
                f"({', '.join(outside)})"
            )
    if evidence:
        tags.append(
            FailureTag(session_id, FailureCategory.TIME_LOCATION_MISMATCH, tuple(evidence))
        )

    return tags
