from __future__ import annotations

import json
import os
from datetime import datetime, timezone
from decimal import Decimal

import pytest

from eventcrs.catalog import Category, EventRecord, Money, load_catalog_jsonl, parse_timestamp
from eventcrs.simulator import bundled_scenario_dir

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def fixed_now() -> datetime:
    return datetime(2023, 10, 18, 0, 0, tzinfo=timezone.utc)


@pytest.fixture(scope="session")
def scenario_catalog():
    catalog, _ = load_catalog_jsonl(os.path.join(bundled_scenario_dir(), "catalog.jsonl"))
    return catalog


def make_event(
    event_id: str = "e-1",
    title: str = "Sample Event",
    start: str = "2023-11-01T19:00:00Z",
    end: str | None = None,
    category: Category = Category.OTHER,
    description: str | None = None,
    venue: str | None = None,
    city_area: str | None = None,
    price: str | None = None,
    source_url: str | None = None,
    language: str = "en",
    extra: dict | None = None,
) -> EventRecord:
    return EventRecord(
        id=event_id,
        title=title,
        start_time=parse_timestamp(start),
        end_time=parse_timestamp(end) if end else None,
        category=category,
        description=description,
        venue_name=venue,
        city_area=city_area,
        price=Money(Decimal(price)) if price is not None else None,
        source_url=source_url,
        language=language,
        extra=extra or {},
    )


def load_fixture_jsonl(name: str) -> list[dict]:
    with open(os.path.join(FIXTURE_DIR, name), encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
