"""Search and Recommendation workflows over the event catalog.

Candidate sets come either from exhaustive vector search over a
deterministic hashed bag-of-words embedding, or from a pluggable
recommender (the bundled stub scores category affinity against past
interactions). Candidates are then *reduced*: an LLM renders a binary
match-or-not verdict for batches of up to ten events at a time, and the
matching candidates become the recommendation slate, in candidate order.

The reduction step fails closed: a batch whose output cannot be parsed
(after one repair attempt) contributes all-false verdicts rather than
hallucinated matches.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .catalog import Catalog, Category, EventRecord, TimeWindow, summarize_event
from .gateway import CompletionResult, Gateway, TOKEN_LIMIT
from .prompts import PromptTemplate, build_request
from .schemas import ParseError

logger = logging.getLogger(__name__)

_WORD_RE = re.compile(r"\w+", re.UNICODE)


@dataclass(frozen=True)
class Query:
    raw_text: str
    window: TimeWindow
    keywords: tuple[str, ...] = ()
    language: str = "en"
    price_cap: Optional[Decimal] = None
    category_hint: Optional[Category] = None

    def to_json(self) -> dict:
        return {
            "raw_text": self.raw_text,
            "keywords": list(self.keywords),
            "window": self.window.to_json(),
            "language": self.language,
            "price_cap": str(self.price_cap) if self.price_cap is not None else None,
            "category_hint": self.category_hint.value if self.category_hint else None,
        }


class CandidateSource(str, Enum):
    VECTOR_SEARCH = "VectorSearch"
    RECOMMENDER = "Recommender"


@dataclass(frozen=True)
class CandidateSet:
    items: tuple[tuple[str, float], ...]
    source: CandidateSource
    unknown_price_ids: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        ids = [event_id for event_id, _ in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("candidate ids must be distinct")
        scores = [score for _, score in self.items]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("candidate scores must be non-increasing")

    def ids(self) -> list[str]:
        return [event_id for event_id, _ in self.items]

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class MatchVerdict:
    event_id: str
    matches: bool


@dataclass(frozen=True)
class SlateCard:
    event_id: str
    summary_text: str
    detail_link: str


@dataclass(frozen=True)
class RecommendationSlate:
    cards: tuple[SlateCard, ...]
    derived_from: CandidateSource

    def ids(self) -> list[str]:
        return [card.event_id for card in self.cards]


class HashedBagEmbedder:
    """Deterministic embedding: signed hashed bag-of-words, L2-normalized.

    Stable across processes (blake2b, not Python's randomized hash), so
    retrieval is a pure function of the catalog and query text.
    """

    def __init__(self, dim: int = 512):
        if dim < 8:
            raise ValueError("embedding dimension too small")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dim, dtype=np.float64)
        for word in _WORD_RE.findall(text.lower()):
            digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "big")
            index = value % self.dim
            sign = 1.0 if (value >> 63) & 1 else -1.0
            vector[index] += sign
        norm = float(np.linalg.norm(vector))
        if norm > 0:
            vector /= norm
        return vector


class EmbeddingIndex:
    """Exhaustive-scan vector index over event embeddings."""

    def __init__(self, embedder: Optional[HashedBagEmbedder] = None):
        self.embedder = embedder or HashedBagEmbedder()
        self._ids: list[str] = []
        self._matrix: Optional[np.ndarray] = None

    @classmethod
    def build(cls, catalog: Catalog, embedder: Optional[HashedBagEmbedder] = None) -> "EmbeddingIndex":
        index = cls(embedder)
        index._ids = [event.id for event in catalog]
        if index._ids:
            index._matrix = np.stack(
                [index.embedder.embed(event.searchable_text()) for event in catalog]
            )
        return index

    def __len__(self) -> int:
        return len(self._ids)

    def search(
        self,
        query_embedding: np.ndarray,
        k: int,
        filter_fn: Optional[Callable[[str], bool]] = None,
    ) -> list[tuple[str, float]]:
        """Top-k by cosine similarity among filter-passing items; ties
        break by event id ascending. k beyond the population returns all.

        Scores are ranked and reported at 1e-9 granularity: bag-of-words
        vectors produce many mathematically exact ties, and those must
        break by id, not by float summation noise.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if self._matrix is None or not self._ids:
            return []
        keep = [i for i, event_id in enumerate(self._ids) if filter_fn is None or filter_fn(event_id)]
        if not keep:
            return []
        query = np.asarray(query_embedding, dtype=np.float64)
        norm = float(np.linalg.norm(query))
        if norm > 0:
            query = query / norm
        scores = self._matrix[keep] @ query
        ranked = sorted(
            ((self._ids[i], round(float(score), 9)) for i, score in zip(keep, scores)),
            key=lambda pair: (-pair[1], pair[0]),
        )
        return ranked[:k]

    def save(self, path: str) -> None:
        payload = {
            "dim": self.embedder.dim,
            "items": [
                {"id": event_id, "vector": row.tolist()}
                for event_id, row in zip(self._ids, self._matrix if self._matrix is not None else [])
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path: str) -> "EmbeddingIndex":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        index = cls(HashedBagEmbedder(dim=payload["dim"]))
        index._ids = [item["id"] for item in payload["items"]]
        if index._ids:
            index._matrix = np.array([item["vector"] for item in payload["items"]], dtype=np.float64)
        return index


def vector_search(
    index: EmbeddingIndex,
    query_embedding: np.ndarray,
    k: int,
    filter_fn: Optional[Callable[[str], bool]] = None,
) -> list[tuple[str, float]]:
    return index.search(query_embedding, k, filter_fn)


@dataclass(frozen=True)
class RetrievalConfig:
    max_candidates: int = 30
    batch_size: int = 10
    slate_size: int = 10
    reduction_summary_tokens: int = 150
    card_summary_tokens: int = 64
    min_summary_tokens: int = 32


def _query_filter(query: Query, catalog: Catalog) -> tuple[Callable[[str], bool], set[str]]:
    """Filter over event ids plus the set of unknown-price ids retained.

    A price cap excludes events whose *known* price exceeds it; events
    with no price stay in (flagged), since scraped data is too sparse to
    silently drop inventory over a missing column.
    """
    keywords = [k.lower() for k in query.keywords if k.strip()]
    unknown_price: set[str] = set()

    def admits(event_id: str) -> bool:
        event = catalog.get(event_id)
        if event is None:
            return False
        if not query.window.intersects(event.start_time, event.effective_end):
            return False
        if query.category_hint is not None and event.category != query.category_hint:
            return False
        if query.price_cap is not None:
            if event.price is None:
                unknown_price.add(event_id)
            elif event.price.amount > query.price_cap:
                return False
        if keywords:
            haystack = event.searchable_text().lower()
            if not any(keyword in haystack for keyword in keywords):
                return False
        return True

    return admits, unknown_price


def build_search_candidates(
    query: Query,
    catalog: Catalog,
    index: EmbeddingIndex,
    config: RetrievalConfig = RetrievalConfig(),
) -> CandidateSet:
    admits, unknown_price = _query_filter(query, catalog)
    query_text = query.raw_text if not query.keywords else f"{query.raw_text} {' '.join(query.keywords)}"
    ranked = index.search(index.embedder.embed(query_text), config.max_candidates, admits)
    kept = frozenset(event_id for event_id, _ in ranked) & unknown_price
    return CandidateSet(tuple(ranked), CandidateSource.VECTOR_SEARCH, kept)


class Recommender(Protocol):
    def score(self, event: EventRecord, past_interaction_ids: Sequence[str]) -> float: ...


class CategoryAffinityRecommender:
    """Deterministic recommender stub.

    score(event) = fraction of past interactions sharing the event's
    category, plus a small popularity prior (``extra.popularity`` scaled
    by 1/1000, clamped to [0, 0.999]) so an empty history degrades to
    popularity order without special casing.
    """

    def __init__(self, catalog: Catalog):
        self.catalog = catalog

    def score(self, event: EventRecord, past_interaction_ids: Sequence[str]) -> float:
        past = [self.catalog.get(event_id) for event_id in past_interaction_ids]
        past = [p for p in past if p is not None]
        affinity = 0.0
        if past:
            affinity = sum(1 for p in past if p.category == event.category) / len(past)
        raw_popularity = event.extra.get("popularity", 0.0)
        try:
            popularity = min(max(float(raw_popularity), 0.0), 0.999)
        except (TypeError, ValueError):
            popularity = 0.0
        return affinity + popularity / 1000.0


def build_recommendation_candidates(
    query: Query,
    catalog: Catalog,
    recommender: Recommender,
    past_interaction_ids: Sequence[str],
    config: RetrievalConfig = RetrievalConfig(),
) -> CandidateSet:
    """Preference-ranked candidates with the *same* query-derived filters
    as search (keywords, category, price) on top of the time filter."""
    admits, unknown_price = _query_filter(query, catalog)
    scored = [
        (event.id, recommender.score(event, past_interaction_ids))
        for event in catalog
        if admits(event.id)
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    top = tuple(scored[: config.max_candidates])
    kept = frozenset(event_id for event_id, _ in top) & unknown_price
    return CandidateSet(top, CandidateSource.RECOMMENDER, kept)


#: Candidate listing line inside reduction prompts. The scripted mock
#: parses these back out, so the marker format is part of the contract.
def _event_line(event_id: str, summary: str) -> str:
    return f"EVENT {event_id}: {summary}"


@dataclass
class ReductionOutcome:
    verdicts: list[MatchVerdict]
    calls: list[CompletionResult] = field(default_factory=list)
    failed_batches: int = 0


def reduce_candidates(
    query: Query,
    candidates: CandidateSet,
    catalog: Catalog,
    gateway: Gateway,
    template: PromptTemplate,
    config: RetrievalConfig = RetrievalConfig(),
    session_id: str = "-",
    turn_id: int = 0,
) -> ReductionOutcome:
    """Binary match verdicts for every candidate, in candidate order.

    Candidates go to the model in batches of at most ``batch_size``;
    each batch prompt embeds per-event summaries whose budget is chosen
    so the whole prompt stays under the 4096-token ceiling. Exactly one
    verdict per candidate comes back: ids the model skipped, and whole
    batches that failed to parse, default to no-match.
    """
    if not candidates.items:
        raise ValueError("reduce_candidates requires a non-empty candidate set")
    outcome = ReductionOutcome(verdicts=[])
    ids = candidates.ids()
    for start in range(0, len(ids), config.batch_size):
        batch = ids[start : start + config.batch_size]
        request = _build_reduction_request(query, batch, catalog, template, config)
        verdict_map: dict[str, bool] = {}
        try:
            result = gateway.complete(request, session_id=session_id, turn_id=turn_id)
            outcome.calls.append(result)
            for item in (result.parsed or {}).get("verdicts", []):
                verdict_map[str(item["event_id"])] = bool(item["matches"])
        except ParseError as exc:
            outcome.failed_batches += 1
            metric = getattr(exc, "metric", None)
            if metric is not None:
                outcome.calls.append(
                    CompletionResult(
                        raw_text="",
                        usage=metric.usage,
                        latency_ms=metric.latency_ms,
                        parsed=None,
                        attempts=metric.attempts,
                        prompt_token_estimate=request.prompt_token_estimate(),
                        metric=metric,
                    )
                )
            logger.warning(
                "reduction batch failed to parse; %d candidates fail closed", len(batch)
            )
        outcome.verdicts.extend(
            MatchVerdict(event_id, verdict_map.get(event_id, False)) for event_id in batch
        )
    return outcome


def _build_reduction_request(
    query: Query,
    batch: Sequence[str],
    catalog: Catalog,
    template: PromptTemplate,
    config: RetrievalConfig,
):
    skeleton = build_request(
        template,
        slots={"query": query.raw_text, "window": _window_text(query.window)},
        user_text="",
    )
    available = (
        TOKEN_LIMIT
        - template.max_completion_tokens
        - skeleton.prompt_token_estimate()
        - 4 * len(batch)  # per-line markers and ids
        - 32  # slack
    )
    per_event = min(config.reduction_summary_tokens, max(available // max(len(batch), 1), config.min_summary_tokens))
    while True:
        lines = []
        for event_id in batch:
            event = catalog.get(event_id)
            summary = summarize_event(event, per_event).summary_text if event else ""
            lines.append(_event_line(event_id, summary))
        user_text = "Candidate events:\n" + "\n".join(lines)
        request = build_request(
            template,
            slots={"query": query.raw_text, "window": _window_text(query.window)},
            user_text=user_text,
        )
        if request.prompt_token_estimate() + request.max_completion_tokens <= TOKEN_LIMIT:
            return request
        if per_event <= config.min_summary_tokens:
            return request  # build_request already truncated the listing
        per_event = max(config.min_summary_tokens, per_event - 16)


def _window_text(window: TimeWindow) -> str:
    return f"{window.to_json()['start']} to {window.to_json()['end']}"


@dataclass(frozen=True)
class CorpusContext:
    """Catalog-shape signals handed to the answer prompt so it does not
    over- or under-promise relative to the inventory."""

    match_count: int
    candidate_count: int
    catalog_size_for_category: int

    def describe(self) -> str:
        return (
            f"{self.match_count} of {self.candidate_count} candidates matched; "
            f"the catalog holds {self.catalog_size_for_category} events in this category overall."
        )


def compose_answer(
    query: Query,
    verdicts: Sequence[MatchVerdict],
    candidates: CandidateSet,
    catalog: Catalog,
    gateway: Gateway,
    template: PromptTemplate,
    empty_result_text: str,
    config: RetrievalConfig = RetrievalConfig(),
    session_id: str = "-",
    turn_id: int = 0,
) -> tuple[str, Optional[RecommendationSlate], list[CompletionResult]]:
    """Slate of matched candidates (candidate order, truncated to the
    slate size) plus the assistant text.

    With zero matches the text comes from a fixed template: no model
    call, no fabricated events, and a suggestion to broaden the search.
    """
    verdict_map = {v.event_id: v.matches for v in verdicts}
    matched = [event_id for event_id in candidates.ids() if verdict_map.get(event_id, False)]
    if not matched:
        return empty_result_text, None, []

    cards = []
    for event_id in matched[: config.slate_size]:
        event = catalog.get(event_id)
        summary = summarize_event(event, config.card_summary_tokens).summary_text if event else ""
        cards.append(SlateCard(event_id, summary, f"/v1/events/{event_id}"))
    slate = RecommendationSlate(tuple(cards), candidates.source)

    category_size = (
        sum(1 for event in catalog if event.category == query.category_hint)
        if query.category_hint is not None
        else len(catalog)
    )
    context = CorpusContext(len(matched), len(candidates), category_size)
    titles = []
    for card in cards:
        event = catalog.get(card.event_id)
        if event is not None:
            titles.append(event.title)
    request = build_request(
        template,
        slots={"query": query.raw_text, "corpus_context": context.describe()},
        user_text=(
            f"User request: {query.raw_text}\n"
            f"Corpus context: {context.describe()}\n"
            f"Matched events: {'; '.join(titles)}"
        ),
    )
    result = gateway.complete(request, session_id=session_id, turn_id=turn_id)
    return result.raw_text.strip(), slate, [result]
