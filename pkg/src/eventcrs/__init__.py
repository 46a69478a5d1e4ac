"""Conversational recommender service for sparse event catalogs.

Stage-based dialog engine with RAG retrieval and LLM reduction, a
deterministic mock provider for offline runs, per-stage token/latency
telemetry, and a survey evaluation pipeline with path-model estimation.
"""

from .catalog import (
    Catalog,
    Category,
    EventRecord,
    EventSummary,
    IngestReport,
    TimeWindow,
    default_window,
    filter_by_window,
    ingest_catalog,
    summarize_event,
)
from .dialog import (
    ActionVariant,
    CardVisibility,
    CaseSelected,
    CaseSelection,
    ConcurrentTurn,
    DialogEngine,
    SessionState,
    TextMessage,
    TurnAction,
    TurnResult,
    WindowSet,
)
from .gateway import (
    BudgetExceeded,
    CompletionResult,
    CostRate,
    Gateway,
    HttpChatProvider,
    Message,
    MockProvider,
    MockRule,
    PromptRequest,
    ProviderError,
    Role,
    Stage,
    TokenUsage,
    cost_of,
)
from .retrieval import (
    CandidateSet,
    CandidateSource,
    EmbeddingIndex,
    HashedBagEmbedder,
    MatchVerdict,
    Query,
    RecommendationSlate,
    RetrievalConfig,
    build_recommendation_candidates,
    build_search_candidates,
    compose_answer,
    reduce_candidates,
    vector_search,
)
from .schemas import ParseError
from .telemetry import (
    FailureCategory,
    FailureTag,
    MetricsReport,
    MetricsStore,
    PromptMetric,
    TurnMetric,
    aggregate,
    classify_failures,
    export_logs,
)
from .tokens import count_tokens

__version__ = "0.1.0"
