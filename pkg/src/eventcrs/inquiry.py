"""Targeted inquiry: answer a question about one specific event.

The referent is resolved against the cards the user can currently see
(then the most recent slate); genuine ambiguity raises a clarification
request rather than refusing. The answer is grounded in a token-bounded
dossier assembled from the catalog record and, when the record is
sparse, the event's own web page.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from html.parser import HTMLParser
from typing import Optional, Protocol, Sequence

import httpx

from .catalog import EventRecord, format_timestamp
from .gateway import CompletionResult, Gateway
from .prompts import PromptTemplate, build_request
from .tokens import count_tokens, truncate_to_tokens

logger = logging.getLogger(__name__)

DOSSIER_BUDGET = 2800  # leaves room for instructions + question under 4096
MIN_DOSSIER_BUDGET = 200
QUESTION_BUDGET = 600

_UNSET = object()


class AmbiguousTarget(Exception):
    """The question could refer to several events; ask, don't refuse."""

    def __init__(self, candidates: Sequence[tuple[str, str]]):
        self.candidates = list(candidates)[:3]  # (event_id, title)
        titles = ", ".join(title for _, title in self.candidates)
        super().__init__(f"ambiguous target among: {titles}")


class NoTarget(Exception):
    """Nothing visible or slated to resolve the question against."""


_WORD_RE = re.compile(r"\w+", re.UNICODE)
_STOP = frozenset(
    "the a an at on in of for to and or is are was were it this that with "
    "when does do how much what where who why which".split()
)


def _tokens(text: str) -> set[str]:
    return {w.lower() for w in _WORD_RE.findall(text)} - _STOP


def resolve_target(
    question: str,
    visible_cards: Sequence[str],
    last_slate_ids: Sequence[str],
    titles: dict[str, str],
    hinted_event_id: Optional[str] = None,
    hinted_title: Optional[str] = None,
) -> str:
    """Event id the question refers to.

    Resolution order: an explicit id hint from the detection output, a
    title hint or verbatim title mention, then the only-candidate rule.
    The result always lies inside visible_cards or the last slate;
    anything less certain raises :class:`AmbiguousTarget`.
    """
    scope: list[str] = list(visible_cards)
    for event_id in last_slate_ids:
        if event_id not in scope:
            scope.append(event_id)
    if not scope:
        raise NoTarget("no visible cards or prior slate to resolve against")

    if hinted_event_id and hinted_event_id in scope:
        return hinted_event_id

    cues = [hinted_title, question]
    for cue in cues:
        if not cue:
            continue
        cue_lower = cue.lower()
        cue_tokens = _tokens(cue)
        exact = [
            event_id
            for event_id in scope
            if titles.get(event_id, "").lower() and titles[event_id].lower() in cue_lower
        ]
        if len(exact) == 1:
            return exact[0]
        overlapping = [
            (len(cue_tokens & _tokens(titles.get(event_id, ""))), event_id)
            for event_id in scope
        ]
        overlapping = [(score, event_id) for score, event_id in overlapping if score > 0]
        if overlapping:
            overlapping.sort(key=lambda pair: (-pair[0], scope.index(pair[1])))
            best_score = overlapping[0][0]
            best = [event_id for score, event_id in overlapping if score == best_score]
            if len(best) == 1:
                return best[0]

    if len(scope) == 1:
        return scope[0]
    raise AmbiguousTarget([(event_id, titles.get(event_id, event_id)) for event_id in scope])


class _TextExtractor(HTMLParser):
    _SKIP = {"script", "style", "nav", "header", "footer", "noscript", "template", "title"}

    def __init__(self) -> None:
        super().__init__()
        self._chunks: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in self._SKIP:
            self._skip_depth += 1

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._skip_depth > 0:
            self._skip_depth -= 1

    def handle_data(self, data):
        if self._skip_depth == 0 and data.strip():
            self._chunks.append(data)

    def text(self) -> str:
        return re.sub(r"\s+", " ", " ".join(self._chunks)).strip()


def html_to_text(html: str) -> str:
    """Visible page text: tags stripped, script/style/nav dropped,
    whitespace collapsed. No rendering engine, fully deterministic."""
    extractor = _TextExtractor()
    extractor.feed(html)
    return extractor.text()


class Fetcher(Protocol):
    def fetch(self, url: str) -> str: ...


class FetchFailed(Exception):
    pass


MAX_BODY_BYTES = 1 << 20  # 1 MiB


class HttpFetcher:
    def __init__(self, timeout_s: float = 10.0, user_agent: str = "eventcrs/0.1"):
        self.timeout_s = timeout_s
        self.user_agent = user_agent

    def fetch(self, url: str) -> str:
        try:
            response = httpx.get(
                url,
                timeout=self.timeout_s,
                headers={"User-Agent": self.user_agent},
                follow_redirects=True,
            )
        except httpx.HTTPError as exc:
            raise FetchFailed(f"fetch failed: {exc}") from exc
        if response.status_code >= 400:
            raise FetchFailed(f"HTTP {response.status_code} for {url}")
        body = response.content[:MAX_BODY_BYTES]
        return body.decode(response.encoding or "utf-8", errors="replace")


@dataclass(frozen=True)
class EventDossier:
    event_id: str
    text: str
    sources: tuple[str, ...]  # "Database", "Website"
    token_length: int


def _database_text(event: EventRecord) -> str:
    lines = [f"Title: {event.title}"]
    lines.append(f"Starts: {format_timestamp(event.start_time)}")
    if event.end_time is not None:
        lines.append(f"Ends: {format_timestamp(event.end_time)}")
    lines.append(f"Category: {event.category.value}")
    if event.price is not None:
        lines.append(f"Price: {event.price}")
    if event.venue_name is not None:
        lines.append(f"Venue: {event.venue_name}")
    if event.city_area is not None:
        lines.append(f"Area: {event.city_area}")
    if event.language:
        lines.append(f"Language: {event.language}")
    if event.description is not None:
        lines.append(f"Description: {event.description}")
    return "\n".join(lines)


def build_event_dossier(
    event: EventRecord,
    fetcher: Optional[Fetcher] = None,
    budget: int = DOSSIER_BUDGET,
    page_cache: Optional[dict] = None,
) -> EventDossier:
    """Token-bounded event description from database fields first, and
    the event page when the record is sparse.

    The page is fetched only when the database text fills less than half
    the budget and a source URL exists; a failed fetch degrades to the
    database-only dossier. ``page_cache`` (keyed by event id) makes the
    fetch at-most-once per session.
    """
    if budget < MIN_DOSSIER_BUDGET:
        raise ValueError(f"dossier budget must be >= {MIN_DOSSIER_BUDGET}")
    text = truncate_to_tokens(_database_text(event), budget)
    sources = ["Database"]
    db_tokens = count_tokens(text)
    if db_tokens < budget // 2 and event.source_url and fetcher is not None:
        page_text: Optional[str] = None
        cached = (page_cache or {}).get(event.id, _UNSET)
        if cached is not _UNSET:
            page_text = cached
        else:
            try:
                page_text = html_to_text(fetcher.fetch(event.source_url))
            except FetchFailed as exc:
                logger.warning("dossier fetch degraded to database-only: %s", exc)
                page_text = None
            if page_cache is not None:
                page_cache[event.id] = page_text
        if page_text:
            separator = "\nFrom the event page: "
            remainder = budget - db_tokens - count_tokens(separator)
            appended = truncate_to_tokens(page_text, remainder)
            if appended:
                text = f"{text}{separator}{appended}"
                sources.append("Website")
    if count_tokens(text) > budget:  # defensive; separator arithmetic is exact
        text = truncate_to_tokens(text, budget)
    return EventDossier(event.id, text, tuple(sources), count_tokens(text))


def answer_inquiry(
    question: str,
    dossier: EventDossier,
    gateway: Gateway,
    template: PromptTemplate,
    session_id: str = "-",
    turn_id: int = 0,
) -> tuple[str, CompletionResult]:
    """Grounded answer to ``question`` from the dossier text only.

    The prompt instructs the model to answer "not stated" when the
    dossier lacks the fact, instead of inventing one.
    """
    request = build_request(
        template,
        slots={"dossier": dossier.text},
        user_text=truncate_to_tokens(question, QUESTION_BUDGET),
    )
    result = gateway.complete(request, session_id=session_id, turn_id=turn_id)
    return result.raw_text.strip(), result
