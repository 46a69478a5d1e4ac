"""Turn-based dialog engine.

A session is a strictly serialized sequence of turns. Text turns run
action detection first (one LLM call that classifies the input into one
of five actions, answers small talk inline, and extracts structured
hints: keywords, category, price cap, a stated time window, a target
event). The detected action then dispatches into the search,
recommendation, or targeted-inquiry workflow; refusals answer with a
fixed configured string. Button events (case selection, window setting,
card visibility) mutate state without any LLM call.

Time windows: every session starts on the default 150-day window. A
window set via the UI button is authoritative and never silently
overridden; a window stated in chat overrides the default for the
session (source = ChatExtracted), which is exactly the remediation the
field failures around ignored chat-stated time preferences call for.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from enum import Enum
from importlib import resources
from typing import Callable, Optional, Sequence, Union

from .catalog import Catalog, Category, TimeWindow, default_window, parse_timestamp, summarize_event
from .gateway import BudgetExceeded, Gateway, ProviderError, Role, Stage
from .inquiry import (
    AmbiguousTarget,
    DOSSIER_BUDGET,
    Fetcher,
    NoTarget,
    answer_inquiry,
    build_event_dossier,
    resolve_target,
)
from .prompts import HistoryEntry, TemplateLibrary, build_request
from .schemas import ParseError
from .retrieval import (
    EmbeddingIndex,
    Query,
    Recommender,
    RecommendationSlate,
    RetrievalConfig,
    build_recommendation_candidates,
    build_search_candidates,
    compose_answer,
    reduce_candidates,
)
from .telemetry import MetricsStore, PromptMetric, PromptTrace, TurnLog, TurnMetric

logger = logging.getLogger(__name__)


class ActionVariant(str, Enum):
    CHAT = "Chat"
    REFUSAL = "Refusal"
    SEARCH = "Search"
    RECOMMENDATION = "Recommendation"
    TARGETED_INQUIRY = "TargetedInquiry"


@dataclass(frozen=True)
class TurnAction:
    variant: ActionVariant
    inline_reply: Optional[str] = None


class CaseSelection(str, Enum):
    SPECIFIC_SEARCH = "SpecificSearch"
    GENERAL_RECOMMENDATION = "GeneralRecommendation"


class WindowSource(str, Enum):
    DEFAULT = "Default"
    BUTTON_SET = "ButtonSet"
    CHAT_EXTRACTED = "ChatExtracted"


# --- user input events ----------------------------------------------------


@dataclass(frozen=True)
class TextMessage:
    text: str


@dataclass(frozen=True)
class CaseSelected:
    choice: CaseSelection


@dataclass(frozen=True)
class WindowSet:
    window: TimeWindow


@dataclass(frozen=True)
class CardVisibility:
    card_ids: tuple[str, ...]


UserInputEvent = Union[TextMessage, CaseSelected, WindowSet, CardVisibility]


def event_to_json(event: UserInputEvent) -> dict:
    if isinstance(event, TextMessage):
        return {"kind": "TextMessage", "text": event.text}
    if isinstance(event, CaseSelected):
        return {"kind": "CaseSelected", "choice": event.choice.value}
    if isinstance(event, WindowSet):
        return {"kind": "WindowSet", "window": event.window.to_json()}
    return {"kind": "CardVisibility", "card_ids": list(event.card_ids)}


def event_from_json(payload: dict) -> UserInputEvent:
    kind = payload.get("kind")
    if kind == "TextMessage":
        return TextMessage(str(payload["text"]))
    if kind == "CaseSelected":
        return CaseSelected(CaseSelection(payload["choice"]))
    if kind == "WindowSet":
        return WindowSet(TimeWindow.from_json(payload["window"]))
    if kind == "CardVisibility":
        return CardVisibility(tuple(payload["card_ids"]))
    raise ValueError(f"unknown event kind: {kind!r}")


@dataclass
class Turn:
    turn_id: int
    event: dict
    action: Optional[str]
    assistant_text: str
    slate_ids: list[str] = field(default_factory=list)
    outcome: str = "ok"

    def to_json(self) -> dict:
        return {
            "turn_id": self.turn_id,
            "event": self.event,
            "action": self.action,
            "assistant_text": self.assistant_text,
            "slate_ids": self.slate_ids,
            "outcome": self.outcome,
        }


@dataclass
class SessionState:
    session_id: str
    language: str = "en"
    case_selection: Optional[CaseSelection] = None
    time_window: TimeWindow = None  # type: ignore[assignment]
    window_source: WindowSource = WindowSource.DEFAULT
    history: list[Turn] = field(default_factory=list)
    visible_cards: list[str] = field(default_factory=list)
    past_interaction_ids: list[str] = field(default_factory=list)
    last_slate_ids: list[str] = field(default_factory=list)
    page_cache: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.time_window is None:
            self.time_window = default_window(datetime.now(timezone.utc))

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "language": self.language,
            "case_selection": self.case_selection.value if self.case_selection else None,
            "time_window": self.time_window.to_json(),
            "window_source": self.window_source.value,
            "history": [turn.to_json() for turn in self.history],
            "visible_cards": list(self.visible_cards),
            "past_interaction_ids": list(self.past_interaction_ids),
            "last_slate_ids": list(self.last_slate_ids),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "SessionState":
        state = cls(
            session_id=payload["session_id"],
            language=payload.get("language", "en"),
            case_selection=(
                CaseSelection(payload["case_selection"]) if payload.get("case_selection") else None
            ),
            time_window=TimeWindow.from_json(payload["time_window"]),
            window_source=WindowSource(payload.get("window_source", "Default")),
            visible_cards=list(payload.get("visible_cards", [])),
            past_interaction_ids=list(payload.get("past_interaction_ids", [])),
            last_slate_ids=list(payload.get("last_slate_ids", [])),
        )
        for raw in payload.get("history", []):
            state.history.append(
                Turn(
                    turn_id=raw["turn_id"],
                    event=raw["event"],
                    action=raw.get("action"),
                    assistant_text=raw.get("assistant_text", ""),
                    slate_ids=list(raw.get("slate_ids", [])),
                    outcome=raw.get("outcome", "ok"),
                )
            )
        return state


@dataclass
class TurnResult:
    assistant_text: str
    action_taken: Optional[str]
    slate: Optional[RecommendationSlate] = None
    turn_metrics: list[PromptMetric] = field(default_factory=list)
    extracted_window: Optional[TimeWindow] = None
    outcome: str = "ok"
    turn_metric: Optional[TurnMetric] = None
    turn_log: Optional[TurnLog] = None


@dataclass
class DetectionOutcome:
    action: TurnAction
    extracted_window: Optional[TimeWindow] = None
    keywords: tuple[str, ...] = ()
    category_hint: Optional[Category] = None
    price_cap: Optional[Decimal] = None
    target_event_id: Optional[str] = None
    target_title: Optional[str] = None
    metrics: list[PromptMetric] = field(default_factory=list)
    traces: list[PromptTrace] = field(default_factory=list)


class ConcurrentTurn(Exception):
    """A turn is already running for this session."""


class UiStrings:
    """Per-language fixed strings (refusal, acks, fallbacks)."""

    def __init__(self, payload: dict):
        self.default_language = payload.get("default_language", "en")
        self.languages: dict[str, dict] = payload["languages"]

    @classmethod
    def load(cls, path: Optional[str] = None) -> "UiStrings":
        if path is None:
            raw = resources.files("eventcrs.data").joinpath("strings.json").read_text("utf-8")
        else:
            with open(path, encoding="utf-8") as fh:
                raw = fh.read()
        return cls(json.loads(raw))

    def get(self, language: str, key: str) -> str:
        table = self.languages.get(language)
        if table is None or key not in table:
            if language != self.default_language:
                logger.warning("no '%s' string for language %r; using default", key, language)
            table = self.languages[self.default_language]
        return table[key]


def _parse_category(value: Optional[str]) -> Optional[Category]:
    if not value:
        return None
    try:
        return Category(value)
    except ValueError:
        normalized = value.strip().lower()
        for category in Category:
            if category.value.lower() == normalized:
                return category
    return None


class DialogEngine:
    """Session state machine over the catalog, gateway, and retrieval."""

    def __init__(
        self,
        catalog: Catalog,
        gateway: Gateway,
        templates: Optional[TemplateLibrary] = None,
        strings: Optional[UiStrings] = None,
        index: Optional[EmbeddingIndex] = None,
        recommender: Optional[Recommender] = None,
        store: Optional[MetricsStore] = None,
        fetcher: Optional[Fetcher] = None,
        retrieval_config: RetrievalConfig = RetrievalConfig(),
        dossier_budget: int = DOSSIER_BUDGET,
        history_limit: int = 6,
        clock: Callable[[], datetime] = lambda: datetime.now(timezone.utc),
    ):
        from .retrieval import CategoryAffinityRecommender

        self.catalog = catalog
        self.gateway = gateway
        self.templates = templates or TemplateLibrary.load()
        self.strings = strings or UiStrings.load()
        self.index = index or EmbeddingIndex.build(catalog)
        self.recommender = recommender or CategoryAffinityRecommender(catalog)
        self.store = store
        self.fetcher = fetcher
        self.retrieval_config = retrieval_config
        self.dossier_budget = dossier_budget
        self.history_limit = history_limit
        self.clock = clock

    # -- public operations --------------------------------------------------

    def new_session(self, session_id: str, language: str = "en") -> SessionState:
        return SessionState(
            session_id=session_id,
            language=language,
            time_window=default_window(self.clock()),
        )

    def refusal_response(self, language: str) -> str:
        return self.strings.get(language, "refusal")

    def record_visibility(self, state: SessionState, card_ids: Sequence[str]) -> None:
        """Fold reported card ids into the last-three-distinct visible set.

        Unknown ids (neither catalog nor any prior slate) are ignored.
        The latest occurrence of a repeated id wins its position.
        """
        known = []
        prior_slates = set(state.last_slate_ids)
        for turn in state.history:
            prior_slates.update(turn.slate_ids)
        for card_id in card_ids:
            if card_id in self.catalog or card_id in prior_slates:
                known.append(card_id)
            else:
                logger.warning("ignoring unknown card id %r in visibility report", card_id)
        merged = list(state.visible_cards) + known
        deduped: list[str] = []
        for card_id in reversed(merged):  # keep the newest occurrence
            if card_id not in deduped:
                deduped.append(card_id)
            if len(deduped) == 3:
                break
        state.visible_cards = list(reversed(deduped))

    def detect_action(self, state: SessionState, text: str) -> DetectionOutcome:
        """Classify one user message; Chat answers inline.

        The prompt carries the last-three visible card summaries and the
        recent history so event-specific questions are recognizable, and
        the structured output may include a chat-stated time window.
        A parse failure (after the gateway's repair re-ask) falls back
        to Refusal: fail closed, not chatty.
        """
        if not text:
            raise ValueError("text must be non-empty")
        template = self.templates.get(Stage.ACTION_DETECTION)
        request = self._detection_request(state, text, template)
        try:
            result = self.gateway.complete(
                request, session_id=state.session_id, turn_id=len(state.history) + 1
            )
        except ParseError as exc:
            outcome = DetectionOutcome(action=TurnAction(ActionVariant.REFUSAL))
            metric = getattr(exc, "metric", None)
            if metric is not None:
                outcome.metrics.append(metric)
            outcome.traces.append(
                PromptTrace(Stage.ACTION_DETECTION, request.joined_text(), "<parse failure>")
            )
            return outcome

        payload = result.parsed or {}
        action = TurnAction(
            variant=ActionVariant(payload["action"]),
            inline_reply=payload.get("reply"),
        )
        outcome = DetectionOutcome(action=action)
        outcome.metrics.append(result.metric)
        outcome.traces.append(
            PromptTrace(
                Stage.ACTION_DETECTION,
                request.joined_text(),
                result.raw_text,
                result.prompt_token_estimate,
            )
        )
        outcome.keywords = tuple(str(k) for k in payload.get("keywords") or [])
        outcome.category_hint = _parse_category(payload.get("category"))
        if payload.get("price_cap") is not None:
            outcome.price_cap = Decimal(str(payload["price_cap"]))
        if payload.get("target_event_id"):
            outcome.target_event_id = str(payload["target_event_id"])
        if payload.get("target_title"):
            outcome.target_title = str(payload["target_title"])
        window_payload = payload.get("window")
        if window_payload:
            try:
                outcome.extracted_window = TimeWindow(
                    parse_timestamp(window_payload["start"]),
                    parse_timestamp(window_payload["end"]),
                )
            except (ValueError, KeyError, TypeError):
                logger.warning("detection produced an invalid window; ignoring")
        return outcome

    def take_turn(self, state: SessionState, event: UserInputEvent) -> TurnResult:
        """Run one turn to completion; a concurrent turn is rejected."""
        if not state.lock.acquire(blocking=False):
            raise ConcurrentTurn(f"a turn is already in flight for {state.session_id}")
        try:
            started = time.perf_counter()
            turn_id = len(state.history) + 1
            log = TurnLog(
                session_id=state.session_id,
                turn_id=turn_id,
                user_input=event_to_json(event),
            )
            if isinstance(event, TextMessage):
                result = self._text_turn(state, event.text, turn_id, log)
            else:
                result = self._button_turn(state, event, log)

            wall_ms = (time.perf_counter() - started) * 1000.0
            action_label = result.action_taken or log.user_input["kind"]
            turn_metric = TurnMetric.from_prompts(
                state.session_id,
                turn_id,
                result.turn_metrics,
                wall_ms,
                action_label,
                timestamp=self.clock().timestamp(),
            )
            result.turn_metric = turn_metric

            log.action = result.action_taken
            log.outcome = result.outcome
            log.assistant_text = result.assistant_text
            log.slate_ids = result.slate.ids() if result.slate else []
            log.window_used = state.time_window.to_json()
            log.window_source = state.window_source.value
            log.visible_cards = list(state.visible_cards)
            if result.extracted_window is not None:
                log.extracted_window = result.extracted_window.to_json()
            result.turn_log = log

            state.history.append(
                Turn(
                    turn_id=turn_id,
                    event=log.user_input,
                    action=result.action_taken,
                    assistant_text=result.assistant_text,
                    slate_ids=log.slate_ids,
                    outcome=result.outcome,
                )
            )
            if result.slate is not None:
                state.last_slate_ids = result.slate.ids()

            if self.store is not None:
                self.store.record_safely(turn_metric)
                self.store.record_safely(log)
            return result
        finally:
            state.lock.release()

    # -- turn internals ------------------------------------------------------

    def _button_turn(self, state: SessionState, event: UserInputEvent, log: TurnLog) -> TurnResult:
        language = state.language
        if isinstance(event, CaseSelected):
            state.case_selection = event.choice
            text = self.strings.get(language, "ack_case").format(choice=event.choice.value)
        elif isinstance(event, WindowSet):
            state.time_window = event.window
            state.window_source = WindowSource.BUTTON_SET
            text = self.strings.get(language, "ack_window")
        elif isinstance(event, CardVisibility):
            self.record_visibility(state, event.card_ids)
            text = self.strings.get(language, "ack_visibility")
        else:  # pragma: no cover - exhaustive match
            raise ValueError(f"unsupported event: {event!r}")
        return TurnResult(assistant_text=text, action_taken=None)

    def _text_turn(self, state: SessionState, text: str, turn_id: int, log: TurnLog) -> TurnResult:
        detection = self.detect_action(state, text)
        log.prompts.extend(detection.traces)
        result = TurnResult(
            assistant_text="",
            action_taken=detection.action.variant.value,
            turn_metrics=list(detection.metrics),
            extracted_window=detection.extracted_window,
        )

        # Chat-stated windows take effect unless the user pinned a window
        # via the UI button; a ButtonSet window is never silently replaced.
        if detection.extracted_window is not None and state.window_source != WindowSource.BUTTON_SET:
            state.time_window = detection.extracted_window
            state.window_source = WindowSource.CHAT_EXTRACTED

        try:
            variant = detection.action.variant
            if variant == ActionVariant.CHAT:
                result.assistant_text = detection.action.inline_reply or self.strings.get(
                    state.language, "chat_fallback"
                )
            elif variant == ActionVariant.REFUSAL:
                result.assistant_text = self.refusal_response(state.language)
            elif variant in (ActionVariant.SEARCH, ActionVariant.RECOMMENDATION):
                self._retrieval_turn(state, text, turn_id, detection, result, log)
            else:
                self._inquiry_turn(state, text, turn_id, detection, result, log)
        except BudgetExceeded:
            logger.exception("turn hit the token ceiling; degrading to an apology")
            result.assistant_text = self.strings.get(state.language, "apology")
            result.outcome = "error"
        except (ProviderError, ParseError) as exc:
            metric = getattr(exc, "metric", None)
            if metric is not None:
                result.turn_metrics.append(metric)
            logger.exception("turn failed downstream; degrading to an apology")
            result.assistant_text = self.strings.get(state.language, "apology")
            result.outcome = "error"
        return result

    def _retrieval_turn(
        self,
        state: SessionState,
        text: str,
        turn_id: int,
        detection: DetectionOutcome,
        result: TurnResult,
        log: TurnLog,
    ) -> None:
        variant = detection.action.variant
        if variant == ActionVariant.SEARCH:
            query, calls = self._build_search_query(state, text, turn_id, detection)
            for call in calls:
                result.turn_metrics.append(call.metric)
                log.prompts.append(self._trace(call, Stage.SEARCH))
            candidates = build_search_candidates(
                query, self.catalog, self.index, self.retrieval_config
            )
        else:
            query, calls = self._build_recommendation_query(state, text, turn_id, detection)
            for call in calls:
                result.turn_metrics.append(call.metric)
                log.prompts.append(self._trace(call, Stage.RECOMMENDER))
            candidates = build_recommendation_candidates(
                query,
                self.catalog,
                self.recommender,
                state.past_interaction_ids,
                self.retrieval_config,
            )

        log.query = query.to_json()
        log.candidate_ids = candidates.ids()

        if not candidates.items:
            result.assistant_text = self.strings.get(state.language, "empty_result")
            return

        reduction = reduce_candidates(
            query,
            candidates,
            self.catalog,
            self.gateway,
            self.templates.get(Stage.REDUCTION),
            self.retrieval_config,
            session_id=state.session_id,
            turn_id=turn_id,
        )
        for call in reduction.calls:
            result.turn_metrics.append(call.metric)
            log.prompts.append(self._trace(call, Stage.REDUCTION))
        log.verdicts = [{"event_id": v.event_id, "matches": v.matches} for v in reduction.verdicts]

        answer_text, slate, answer_calls = compose_answer(
            query,
            reduction.verdicts,
            candidates,
            self.catalog,
            self.gateway,
            self.templates.get(Stage.ANSWER_CREATION),
            self.strings.get(state.language, "empty_result"),
            self.retrieval_config,
            session_id=state.session_id,
            turn_id=turn_id,
        )
        for call in answer_calls:
            result.turn_metrics.append(call.metric)
            log.prompts.append(self._trace(call, Stage.ANSWER_CREATION))
        result.assistant_text = answer_text
        result.slate = slate

    def _inquiry_turn(
        self,
        state: SessionState,
        text: str,
        turn_id: int,
        detection: DetectionOutcome,
        result: TurnResult,
        log: TurnLog,
    ) -> None:
        titles = {}
        for event_id in list(state.visible_cards) + list(state.last_slate_ids):
            event = self.catalog.get(event_id)
            if event is not None:
                titles[event_id] = event.title
        try:
            target_id = resolve_target(
                text,
                state.visible_cards,
                state.last_slate_ids,
                titles,
                hinted_event_id=detection.target_event_id,
                hinted_title=detection.target_title,
            )
        except AmbiguousTarget as exc:
            options = ", ".join(title for _, title in exc.candidates)
            result.assistant_text = self.strings.get(state.language, "clarify").format(
                options=options
            )
            result.outcome = "clarify"
            return
        except NoTarget:
            result.assistant_text = self.strings.get(state.language, "no_target")
            result.outcome = "clarify"
            return

        event = self.catalog.get(target_id)
        if event is None:
            result.assistant_text = self.strings.get(state.language, "no_target")
            result.outcome = "clarify"
            return
        dossier = build_event_dossier(
            event, self.fetcher, self.dossier_budget, page_cache=state.page_cache
        )
        log.query = {"target_event_id": target_id, "dossier_sources": list(dossier.sources)}
        answer, call = answer_inquiry(
            text,
            dossier,
            self.gateway,
            self.templates.get(Stage.TARGETED_INQUIRY),
            session_id=state.session_id,
            turn_id=turn_id,
        )
        result.turn_metrics.append(call.metric)
        log.prompts.append(self._trace(call, Stage.TARGETED_INQUIRY))
        result.assistant_text = answer

    # -- prompt assembly helpers ----------------------------------------------

    def _history_entries(self, state: SessionState) -> list[HistoryEntry]:
        entries: list[HistoryEntry] = []
        for turn in state.history[-self.history_limit :]:
            if turn.event.get("kind") == "TextMessage":
                entries.append(HistoryEntry(Role.USER, str(turn.event.get("text", ""))))
                if turn.assistant_text:
                    entries.append(HistoryEntry(Role.ASSISTANT, turn.assistant_text))
        return entries[-self.history_limit :]

    def _visible_card_context(self, state: SessionState) -> str:
        lines = []
        for position, event_id in enumerate(state.visible_cards, start=1):
            event = self.catalog.get(event_id)
            if event is None:
                continue
            summary = summarize_event(event, 64).summary_text
            lines.append(f"{position}. (id={event_id}) {summary}")
        return "\n".join(lines) if lines else "none"

    def _detection_request(self, state: SessionState, text: str, template):
        slots = {
            "language": state.language,
            "case_selection": state.case_selection.value if state.case_selection else "none",
            "window": f"{state.time_window.to_json()['start']} to {state.time_window.to_json()['end']}",
            "visible_cards": self._visible_card_context(state),
        }
        return build_request(
            template,
            slots=slots,
            history=self._history_entries(state),
            user_text=text,
            history_limit=self.history_limit,
        )

    def _build_search_query(
        self, state: SessionState, text: str, turn_id: int, detection: DetectionOutcome
    ) -> tuple[Query, list]:
        template = self.templates.get(Stage.SEARCH)
        request = build_request(
            template,
            slots={"window": state.time_window.to_json()["start"]},
            user_text=text,
        )
        keywords = set(detection.keywords)
        category = detection.category_hint
        price_cap = detection.price_cap
        calls = []
        try:
            result = self.gateway.complete(request, session_id=state.session_id, turn_id=turn_id)
            calls.append(result)
            payload = result.parsed or {}
            keywords.update(str(k) for k in payload.get("keywords") or [])
            category = category or _parse_category(payload.get("category"))
            if price_cap is None and payload.get("price_cap") is not None:
                price_cap = Decimal(str(payload["price_cap"]))
        except ParseError as exc:
            # a failed query-construction call degrades to detection hints
            metric = getattr(exc, "metric", None)
            if metric is not None:
                calls.append(_failed_call(metric))
            logger.warning("search query construction failed to parse; using detection hints")
        query = Query(
            raw_text=text,
            window=state.time_window,
            keywords=tuple(sorted(keywords)),
            language=state.language,
            price_cap=price_cap,
            category_hint=category,
        )
        return query, calls

    def _build_recommendation_query(
        self, state: SessionState, text: str, turn_id: int, detection: DetectionOutcome
    ) -> tuple[Query, list]:
        template = self.templates.get(Stage.RECOMMENDER)
        past_titles = []
        for event_id in state.past_interaction_ids:
            event = self.catalog.get(event_id)
            if event is not None:
                past_titles.append(f"{event.title} ({event.category.value})")
        request = build_request(
            template,
            slots={"past_interactions": "; ".join(past_titles) if past_titles else "none"},
            user_text=text,
        )
        raw_text = text
        calls = []
        try:
            result = self.gateway.complete(request, session_id=state.session_id, turn_id=turn_id)
            calls.append(result)
            payload = result.parsed or {}
            preference = str(payload.get("preference_text") or "").strip()
            if preference:
                raw_text = f"{text} | stated preferences: {preference}"
        except ParseError as exc:
            metric = getattr(exc, "metric", None)
            if metric is not None:
                calls.append(_failed_call(metric))
            logger.warning("preference construction failed to parse; using the raw text")
        query = Query(
            raw_text=raw_text,
            window=state.time_window,
            keywords=detection.keywords,
            language=state.language,
            price_cap=detection.price_cap,
            category_hint=detection.category_hint,
        )
        return query, calls

    @staticmethod
    def _trace(call, stage: Stage) -> PromptTrace:
        metric = call.metric
        return PromptTrace(
            stage=metric.stage if metric is not None else stage,
            request_text=call.request_text,
            response_text=call.raw_text or "",
            prompt_token_estimate=call.prompt_token_estimate,
        )


def _failed_call(metric: PromptMetric):
    from .gateway import CompletionResult

    return CompletionResult(
        raw_text="",
        usage=metric.usage,
        latency_ms=metric.latency_ms,
        parsed=None,
        attempts=metric.attempts,
        metric=metric,
    )
