"""HTTP facade: sessions, turns, visibility, surveys, metrics, logs.

A thin FastAPI layer over the dialog engine. Turns are strictly
serialized per session (a concurrent turn gets 409, matching the UI
contract of disabling input while a reply is pending); reads never
block turns. Session state snapshots, turn logs, and metrics all land
in the append-only store, so a restarted service reproduces identical
session logs from disk.
"""

from __future__ import annotations

import json
import os
import re
import secrets
import threading
import time
from datetime import datetime, timezone
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .catalog import TimeWindow, load_catalog_jsonl, load_category_map, parse_timestamp
from .config import AppConfig
from .dialog import (
    CardVisibility,
    CaseSelected,
    CaseSelection,
    ConcurrentTurn,
    DialogEngine,
    SessionState,
    TextMessage,
    UserInputEvent,
    WindowSet,
    event_from_json,
)
from .gateway import CostRate, Gateway, HttpChatProvider, MockProvider
from .inquiry import HttpFetcher
from .resque import Incomplete, OutOfRange, validate_response
from .retrieval import RetrievalConfig
from .telemetry import MetricsFilter, MetricsStore, aggregate

_LANGUAGE_RE = re.compile(r"^[A-Za-z]{2,8}(-[A-Za-z0-9]{1,8})*$")

SESSION_TOKEN_BYTES = 24  # 192 bits of entropy


class CreateSessionRequest(BaseModel):
    language: str = "en"
    user_id: Optional[str] = None


class WindowRequest(BaseModel):
    start: str
    end: str


class VisibilityRequest(BaseModel):
    card_ids: list[str] = Field(default_factory=list)


class TurnRequest(BaseModel):
    kind: str
    text: Optional[str] = None
    choice: Optional[str] = None
    window: Optional[dict] = None
    card_ids: Optional[list[str]] = None


class SessionJournal:
    """Append-only JSONL journal of session state snapshots."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def snapshot(self, state: SessionState) -> None:
        line = json.dumps(state.to_json(), ensure_ascii=False, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()

    def load_latest(self) -> dict[str, SessionState]:
        sessions: dict[str, SessionState] = {}
        if not os.path.exists(self.path):
            return sessions
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    payload = json.loads(line)
                    sessions[payload["session_id"]] = SessionState.from_json(payload)
                except (json.JSONDecodeError, KeyError, ValueError):
                    continue
        return sessions


class SurveyJournal:
    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def append(self, payload: dict) -> None:
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(payload, ensure_ascii=False, sort_keys=True) + "\n")
                fh.flush()


class RateLimiter:
    """Global per-IP cap, fixed one-minute windows."""

    def __init__(self, per_minute: int):
        self.per_minute = per_minute
        self._counts: dict[str, tuple[int, int]] = {}
        self._lock = threading.Lock()

    def admit(self, ip: str) -> bool:
        minute = int(time.time() // 60)
        with self._lock:
            window, count = self._counts.get(ip, (minute, 0))
            if window != minute:
                window, count = minute, 0
            count += 1
            self._counts[ip] = (window, count)
            return count <= self.per_minute


def build_engine(config: AppConfig, catalog=None, provider=None, store=None) -> DialogEngine:
    if catalog is None:
        if not config.catalog_path:
            raise ValueError("a catalog path is required")
        category_map = load_category_map(config.category_map_path)
        catalog, _ = load_catalog_jsonl(
            config.catalog_path,
            category_map=category_map,
            default_language=config.default_language,
        )
    if provider is None:
        if config.provider == "http":
            provider = HttpChatProvider(
                base_url=config.llm_base_url,
                model=config.llm_model,
                api_key=os.environ.get(config.llm_api_key_env),
                timeout_s=config.request_timeout_s,
            )
        elif config.mock_script_path:
            provider = MockProvider.from_script_file(config.mock_script_path)
        else:
            provider = MockProvider([])
    if store is None:
        store = MetricsStore(config.store_dir)
    gateway = Gateway(
        provider,
        rate=CostRate(config.cost_rate_usd_per_1000),
        recorder=store.record_safely,
    )
    from .prompts import TemplateLibrary
    from .dialog import UiStrings
    from .retrieval import EmbeddingIndex, HashedBagEmbedder

    return DialogEngine(
        catalog=catalog,
        gateway=gateway,
        templates=TemplateLibrary.load(config.prompts_path),
        strings=UiStrings.load(config.strings_path),
        index=EmbeddingIndex.build(catalog, HashedBagEmbedder(config.embedding_dim)),
        store=store,
        fetcher=HttpFetcher(
            timeout_s=10.0, user_agent=config.fetch_user_agent
        ),
        retrieval_config=RetrievalConfig(
            max_candidates=config.max_candidates, slate_size=config.slate_size
        ),
        dossier_budget=config.dossier_budget,
        history_limit=config.history_limit,
    )


def build_app(
    config: Optional[AppConfig] = None,
    catalog=None,
    provider=None,
    store: Optional[MetricsStore] = None,
) -> FastAPI:
    config = config or AppConfig.load()
    store = store or MetricsStore(config.store_dir)
    engine = build_engine(config, catalog=catalog, provider=provider, store=store)
    sessions_journal = SessionJournal(os.path.join(config.store_dir, "sessions.jsonl"))
    surveys = SurveyJournal(os.path.join(config.store_dir, "surveys.jsonl"))
    sessions = sessions_journal.load_latest()
    sessions_lock = threading.Lock()
    limiter = RateLimiter(config.per_ip_requests_per_minute)

    app = FastAPI(title="eventcrs", version="0.1.0")
    app.state.engine = engine
    app.state.store = store
    app.state.sessions = sessions
    app.state.config = config

    @app.middleware("http")
    async def per_ip_cap(request: Request, call_next):
        client_ip = request.client.host if request.client else "unknown"
        if not limiter.admit(client_ip):
            return JSONResponse({"detail": "rate limit exceeded"}, status_code=429)
        return await call_next(request)

    def get_session(session_id: str) -> SessionState:
        state = sessions.get(session_id)
        if state is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return state

    def require_operator(request: Request) -> None:
        token = request.headers.get("x-operator-token", "")
        if not config.operator_token or not secrets.compare_digest(
            token, config.operator_token
        ):
            raise HTTPException(status_code=401, detail="operator token required")

    @app.post("/v1/sessions", status_code=201)
    def create_session(payload: CreateSessionRequest):
        if not _LANGUAGE_RE.match(payload.language):
            raise HTTPException(status_code=400, detail="malformed language tag")
        session_id = secrets.token_urlsafe(SESSION_TOKEN_BYTES)
        state = engine.new_session(session_id, language=payload.language)
        with sessions_lock:
            sessions[session_id] = state
        sessions_journal.snapshot(state)
        strings = engine.strings
        return {
            "session_id": session_id,
            "created_at": datetime.now(timezone.utc).isoformat(),
            "language": payload.language,
            "greeting": strings.get(payload.language, "greeting"),
            "disclosure": strings.get(payload.language, "disclosure"),
            "buttons": [
                {"kind": "CaseSelected", "choice": CaseSelection.SPECIFIC_SEARCH.value,
                 "label": "Search for specific events"},
                {"kind": "CaseSelected", "choice": CaseSelection.GENERAL_RECOMMENDATION.value,
                 "label": "Get general recommendations"},
            ],
            "window": state.time_window.to_json(),
        }

    @app.post("/v1/sessions/{session_id}/turns")
    def post_turn(session_id: str, payload: TurnRequest):
        state = get_session(session_id)
        try:
            event: UserInputEvent = event_from_json(
                {k: v for k, v in payload.model_dump().items() if v is not None}
            )
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=f"malformed event: {exc}") from exc
        if isinstance(event, TextMessage) and not event.text.strip():
            raise HTTPException(status_code=422, detail="text must be non-empty")
        try:
            result = engine.take_turn(state, event)
        except ConcurrentTurn:
            raise HTTPException(status_code=409, detail="a turn is already in flight") from None
        sessions_journal.snapshot(state)
        body = {
            "assistant_text": result.assistant_text,
            "action_taken": result.action_taken,
            "outcome": result.outcome,
            "slate": None,
            "extracted_window": (
                result.extracted_window.to_json() if result.extracted_window else None
            ),
            "metrics": {
                "total_tokens": result.turn_metric.total_tokens if result.turn_metric else 0,
                "total_cost_usd": (
                    str(result.turn_metric.total_cost_usd) if result.turn_metric else "0"
                ),
                "wall_latency_ms": (
                    result.turn_metric.wall_latency_ms if result.turn_metric else 0.0
                ),
                "prompt_count": result.turn_metric.prompt_count if result.turn_metric else 0,
            },
            "window": state.time_window.to_json(),
            "window_source": state.window_source.value,
        }
        if result.slate is not None:
            body["slate"] = {
                "derived_from": result.slate.derived_from.value,
                "cards": [
                    {
                        "event_id": card.event_id,
                        "summary": card.summary_text,
                        "detail_link": card.detail_link,
                    }
                    for card in result.slate.cards
                ],
            }
        return body

    @app.post("/v1/sessions/{session_id}/visibility")
    def report_visibility(session_id: str, payload: VisibilityRequest):
        state = get_session(session_id)
        engine.record_visibility(state, payload.card_ids)
        sessions_journal.snapshot(state)
        return {"visible_cards": list(state.visible_cards)}

    @app.put("/v1/sessions/{session_id}/window")
    def set_window(session_id: str, payload: WindowRequest):
        state = get_session(session_id)
        try:
            window = TimeWindow(parse_timestamp(payload.start), parse_timestamp(payload.end))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        result = engine.take_turn(state, WindowSet(window))
        sessions_journal.snapshot(state)
        return {
            "window": state.time_window.to_json(),
            "window_source": state.window_source.value,
            "assistant_text": result.assistant_text,
        }

    @app.get("/v1/events/{event_id}")
    def get_event(event_id: str):
        event = engine.catalog.get(event_id)
        if event is None:
            raise HTTPException(status_code=404, detail="unknown event")
        return event.to_json()

    @app.post("/v1/sessions/{session_id}/survey", status_code=201)
    def post_survey(session_id: str, payload: dict):
        state = get_session(session_id)
        if not state.history:
            raise HTTPException(
                status_code=409, detail="survey requires at least one interaction"
            )
        payload = dict(payload)
        payload["session_id"] = session_id
        try:
            response = validate_response(payload)
        except Incomplete as exc:
            raise HTTPException(
                status_code=422, detail={"error": "incomplete", "missing": list(exc.missing)}
            ) from exc
        except OutOfRange as exc:
            raise HTTPException(
                status_code=422, detail={"error": "out_of_range", "construct": exc.construct}
            ) from exc
        record = response.to_json()
        record["received_at"] = datetime.now(timezone.utc).isoformat()
        surveys.append(record)
        return {"status": "recorded"}

    @app.get("/v1/metrics/report")
    def metrics_report(request: Request, since: Optional[str] = None):
        require_operator(request)
        metrics_filter = MetricsFilter(
            since=parse_timestamp(since).timestamp() if since else None
        )
        return aggregate(store, metrics_filter).to_json()

    @app.get("/v1/sessions/{session_id}/log")
    def session_log(session_id: str, request: Request, redact: bool = False):
        require_operator(request)
        state = get_session(session_id)
        return {
            "session_id": session_id,
            "language": state.language,
            "case_selection": state.case_selection.value if state.case_selection else None,
            "window": state.time_window.to_json(),
            "window_source": state.window_source.value,
            "visible_cards": list(state.visible_cards),
            "turns": [entry.to_json(redact=redact) for entry in store.turn_logs(session_id)],
        }

    if config.static_dir and os.path.isdir(config.static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=config.static_dir, html=True), name="webchat")

    return app
