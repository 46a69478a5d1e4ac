"""Event catalog: data model, ingestion, window filtering, summaries.

The corpus comes from web scraping, so most fields are optional and
frequently absent. Ingestion validates what little is mandatory,
normalizes categories against a configurable mapping (unknown raw
strings map to ``Other``), and reports per-column absence statistics so
catalog sparsity stays visible.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import Decimal, InvalidOperation
from enum import Enum
from importlib import resources
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .tokens import count_tokens, truncate_to_tokens


class Category(str, Enum):
    CONCERT = "Concert"
    STAND_UP_COMEDY = "StandUpComedy"
    THEATER = "Theater"
    SPORTS = "Sports"
    MARKET = "Market"
    WORKSHOP = "Workshop"
    PARTY = "Party"
    EXHIBITION = "Exhibition"
    OTHER = "Other"


#: Raw scraped category strings -> canonical category. Loaded once from
#: the bundled mapping file; callers may pass their own table to ingest.
#: The canonical set itself is a stand-in: the upstream data never fixes
#: a taxonomy, so unknown strings deliberately collapse to Other.
def load_category_map(path: Optional[str] = None) -> dict[str, Category]:
    if path is None:
        raw = resources.files("eventcrs.data").joinpath("category_map.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    table = json.loads(raw)
    return {key.strip().lower(): Category(value) for key, value in table.items()}


def parse_timestamp(value: object) -> datetime:
    """Parse an ISO-8601 timestamp into an aware UTC datetime.

    Accepts a trailing ``Z`` (Python 3.10's fromisoformat does not);
    naive timestamps are taken as UTC.
    """
    if isinstance(value, datetime):
        dt = value
    elif isinstance(value, str):
        text = value.strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
    else:
        raise ValueError(f"not a timestamp: {value!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Money:
    amount: Decimal
    currency: str = "EUR"

    def __post_init__(self) -> None:
        if self.amount < 0:
            raise ValueError("price must be >= 0")

    def __str__(self) -> str:
        return f"{self.amount} {self.currency}"


@dataclass(frozen=True)
class TimeWindow:
    start: datetime
    end: datetime

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError("window start must be <= end")

    def contains(self, instant: datetime) -> bool:
        return self.start <= instant <= self.end

    def intersects(self, start: datetime, end: datetime) -> bool:
        return start <= self.end and end >= self.start

    def to_json(self) -> dict:
        return {"start": format_timestamp(self.start), "end": format_timestamp(self.end)}

    @classmethod
    def from_json(cls, payload: Mapping) -> "TimeWindow":
        return cls(parse_timestamp(payload["start"]), parse_timestamp(payload["end"]))


DEFAULT_WINDOW_DAYS = 150


def default_window(now: datetime) -> TimeWindow:
    """The default discovery window: the next 150 days from ``now``."""
    now = now.astimezone(timezone.utc) if now.tzinfo else now.replace(tzinfo=timezone.utc)
    return TimeWindow(now, now + timedelta(days=DEFAULT_WINDOW_DAYS))


@dataclass(frozen=True)
class EventRecord:
    id: str
    title: str
    start_time: datetime
    category: Category = Category.OTHER
    description: Optional[str] = None
    end_time: Optional[datetime] = None
    venue_name: Optional[str] = None
    city_area: Optional[str] = None
    price: Optional[Money] = None
    source_url: Optional[str] = None
    language: str = "en"
    extra: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("event id must be non-empty")
        if self.end_time is not None and self.end_time < self.start_time:
            raise ValueError("end_time must be >= start_time")

    @property
    def effective_end(self) -> datetime:
        """Events without an end time are treated as point events."""
        return self.end_time if self.end_time is not None else self.start_time

    def searchable_text(self) -> str:
        parts = [self.title, self.category.value]
        if self.description:
            parts.append(self.description)
        if self.venue_name:
            parts.append(self.venue_name)
        if self.city_area:
            parts.append(self.city_area)
        return " ".join(parts)

    def to_json(self) -> dict:
        payload: dict[str, object] = {
            "id": self.id,
            "title": self.title,
            "category": self.category.value,
            "start_time": format_timestamp(self.start_time),
            "language": self.language,
        }
        if self.description is not None:
            payload["description"] = self.description
        if self.end_time is not None:
            payload["end_time"] = format_timestamp(self.end_time)
        if self.venue_name is not None:
            payload["venue_name"] = self.venue_name
        if self.city_area is not None:
            payload["city_area"] = self.city_area
        if self.price is not None:
            payload["price"] = str(self.price.amount)
            payload["currency"] = self.price.currency
        if self.source_url is not None:
            payload["source_url"] = self.source_url
        if self.extra:
            payload["extra"] = dict(self.extra)
        return payload


#: Optional columns tracked in the ingest report's absence statistics.
OPTIONAL_COLUMNS = (
    "description",
    "end_time",
    "venue_name",
    "city_area",
    "price",
    "source_url",
    "language",
    "category",
)


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: int = 0
    reject_reasons: Counter = field(default_factory=Counter)
    missing_by_column: Counter = field(default_factory=Counter)
    unknown_categories: Counter = field(default_factory=Counter)

    def to_json(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "reject_reasons": dict(sorted(self.reject_reasons.items())),
            "missing_by_column": dict(sorted(self.missing_by_column.items())),
            "unknown_categories": dict(sorted(self.unknown_categories.items())),
        }


class Catalog:
    """Immutable collection of events; safe for concurrent readers."""

    def __init__(self, events: Sequence[EventRecord]):
        self._events = tuple(events)
        self._by_id = {event.id: event for event in self._events}
        if len(self._by_id) != len(self._events):
            raise ValueError("duplicate event ids in catalog")

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[EventRecord]:
        return iter(self._events)

    def __contains__(self, event_id: str) -> bool:
        return event_id in self._by_id

    def get(self, event_id: str) -> Optional[EventRecord]:
        return self._by_id.get(event_id)

    @property
    def events(self) -> tuple[EventRecord, ...]:
        return self._events

    def dump_jsonl(self) -> str:
        """Canonical JSON Lines dump; re-ingesting reproduces it byte-identically."""
        return "".join(
            json.dumps(event.to_json(), ensure_ascii=False, sort_keys=True) + "\n"
            for event in self._events
        )


def _coerce_price(raw: Mapping) -> Optional[Money]:
    value = raw.get("price")
    if value is None or value == "":
        return None
    amount = Decimal(str(value))
    currency = str(raw.get("currency", "EUR"))
    return Money(amount, currency)


def ingest_catalog(
    records: Iterable[Mapping],
    category_map: Optional[Mapping[str, Category]] = None,
    default_language: str = "en",
) -> tuple[Catalog, IngestReport]:
    """Validate and normalize raw scraped event maps.

    Rejects (with a per-reason count) records that are unusable: missing
    id/title, duplicate id, missing or unparsable start_time, end before
    start, or a negative/garbled price. Everything else is accepted as
    sparse data; unknown categories map to Other.
    """
    if category_map is None:
        category_map = load_category_map()
    report = IngestReport()
    accepted: list[EventRecord] = []
    seen_ids: set[str] = set()

    for raw in records:
        event_id = raw.get("id")
        if not event_id or not isinstance(event_id, str):
            report.rejected += 1
            report.reject_reasons["missing_id"] += 1
            continue
        if event_id in seen_ids:
            report.rejected += 1
            report.reject_reasons["duplicate_id"] += 1
            continue
        title = raw.get("title")
        if not title or not isinstance(title, str):
            report.rejected += 1
            report.reject_reasons["missing_title"] += 1
            continue
        raw_start = raw.get("start_time")
        if raw_start in (None, ""):
            report.rejected += 1
            report.reject_reasons["missing_start_time"] += 1
            continue
        try:
            start_time = parse_timestamp(raw_start)
        except (ValueError, TypeError):
            report.rejected += 1
            report.reject_reasons["unparsable_start_time"] += 1
            continue

        end_time = None
        raw_end = raw.get("end_time")
        if raw_end not in (None, ""):
            try:
                end_time = parse_timestamp(raw_end)
            except (ValueError, TypeError):
                end_time = None
                report.missing_by_column["end_time"] += 1
            else:
                if end_time < start_time:
                    report.rejected += 1
                    report.reject_reasons["end_before_start"] += 1
                    continue

        try:
            price = _coerce_price(raw)
        except (InvalidOperation, ValueError):
            report.rejected += 1
            report.reject_reasons["invalid_price"] += 1
            continue

        raw_category = raw.get("category")
        if raw_category in (None, ""):
            category = Category.OTHER
            report.missing_by_column["category"] += 1
        else:
            key = str(raw_category).strip().lower()
            category = category_map.get(key)
            if category is None:
                try:
                    category = Category(str(raw_category))
                except ValueError:
                    category = Category.OTHER
                    report.unknown_categories[str(raw_category)] += 1

        language = raw.get("language")
        if not language:
            language = default_language
            report.missing_by_column["language"] += 1

        for column in ("description", "venue_name", "city_area", "source_url"):
            if raw.get(column) in (None, ""):
                report.missing_by_column[column] += 1
        if raw.get("price") in (None, ""):
            report.missing_by_column["price"] += 1
        if raw_end in (None, ""):
            report.missing_by_column["end_time"] += 1

        accepted.append(
            EventRecord(
                id=event_id,
                title=title,
                start_time=start_time,
                category=category,
                description=raw.get("description") or None,
                end_time=end_time,
                venue_name=raw.get("venue_name") or None,
                city_area=raw.get("city_area") or None,
                price=price,
                source_url=raw.get("source_url") or None,
                language=str(language),
                extra=dict(raw.get("extra") or {}),
            )
        )
        seen_ids.add(event_id)
        report.accepted += 1

    return Catalog(accepted), report


def load_catalog_jsonl(path: str, **kwargs) -> tuple[Catalog, IngestReport]:
    with open(path, encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    return ingest_catalog(records, **kwargs)


def filter_by_window(catalog: Iterable[EventRecord], window: TimeWindow) -> list[EventRecord]:
    """Events whose [start, end-or-start] interval intersects the window,
    input order preserved."""
    return [
        event
        for event in catalog
        if window.intersects(event.start_time, event.effective_end)
    ]


@dataclass(frozen=True)
class EventSummary:
    event_id: str
    summary_text: str
    token_length: int


#: Field rendering priority for summaries. Later fields are dropped first
#: when the budget is tight; the description tail is truncated to fill
#: whatever budget remains. Price carries an explicit currency so it is
#: always visible verbatim to downstream rankers.
def _summary_parts(event: EventRecord) -> list[str]:
    parts = [event.title, f"starts {format_timestamp(event.start_time)}"]
    if event.end_time is not None:
        parts[-1] += f", ends {format_timestamp(event.end_time)}"
    parts.append(f"category {event.category.value}")
    if event.price is not None:
        parts.append(f"price {event.price}")
    if event.venue_name is not None:
        venue = f"at {event.venue_name}"
        if event.city_area is not None:
            venue += f" ({event.city_area})"
        parts.append(venue)
    elif event.city_area is not None:
        parts.append(f"in {event.city_area}")
    if event.description is not None:
        parts.append(event.description)
    return parts


MIN_SUMMARY_BUDGET = 32


def summarize_event(event: EventRecord, budget: int) -> EventSummary:
    """Single-paragraph rendering of every *present* field, within ``budget``
    tokens. Absent fields are omitted, never replaced by placeholders.

    Fields are folded in priority order; the first field that does not
    fit ends the summary (so a smaller budget always yields a prefix of
    a larger budget's field set), except the trailing description which
    is truncated at a token boundary to use up the remainder.
    """
    if budget < MIN_SUMMARY_BUDGET:
        raise ValueError(f"summary budget must be >= {MIN_SUMMARY_BUDGET}")
    parts = _summary_parts(event)
    has_description = event.description is not None
    text = ""
    for index, part in enumerate(parts):
        candidate = part if not text else f"{text}. {part}"
        if count_tokens(candidate) <= budget:
            text = candidate
            continue
        is_last = index == len(parts) - 1
        if index == 0:
            text = truncate_to_tokens(part, budget)
        elif is_last and has_description:
            remainder = budget - count_tokens(text + ". ")
            truncated = truncate_to_tokens(part, remainder)
            if truncated:
                text = f"{text}. {truncated}"
        break
    return EventSummary(event.id, text, count_tokens(text))
