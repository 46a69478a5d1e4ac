"""Schema-based output parsing for LLM completions.

Stages that need machine-readable output attach a registered schema id
to their request; the gateway extracts the first JSON payload from the
raw completion (tolerating surrounding prose and code fences) and
validates it here. Validation is deliberately small: required keys,
primitive types, enums, and one level of nesting cover every stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence


class ParseError(Exception):
    """Raised when a completion cannot be coerced to its schema."""

    def __init__(self, reason: str, position: int = 0, missing: Sequence[str] = ()):
        self.reason = reason
        self.position = position
        self.missing = tuple(missing)
        detail = f"{reason} (at position {position})"
        if self.missing:
            detail += f"; missing: {', '.join(self.missing)}"
        super().__init__(detail)


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str  # "string" | "number" | "integer" | "boolean" | "object" | "array"
    required: bool = False
    enum: Optional[tuple[str, ...]] = None
    items: Optional["ObjectSpec"] = None  # for arrays of objects
    item_kind: Optional[str] = None  # for arrays of primitives
    fields: Optional["ObjectSpec"] = None  # for nested objects


@dataclass(frozen=True)
class ObjectSpec:
    fields: tuple[FieldSpec, ...] = field(default_factory=tuple)

    def field_map(self) -> dict[str, FieldSpec]:
        return {f.name: f for f in self.fields}


_KIND_TYPES: dict[str, tuple[type, ...]] = {
    "string": (str,),
    "number": (int, float),
    "integer": (int,),
    "boolean": (bool,),
    "object": (dict,),
    "array": (list,),
}


def _check_value(name: str, spec: FieldSpec, value: Any) -> None:
    expected = _KIND_TYPES[spec.kind]
    if spec.kind in ("number", "integer") and isinstance(value, bool):
        raise ParseError(f"field '{name}' must be {spec.kind}, got boolean")
    if not isinstance(value, expected):
        raise ParseError(f"field '{name}' must be {spec.kind}, got {type(value).__name__}")
    if spec.enum is not None and value not in spec.enum:
        raise ParseError(f"field '{name}' must be one of {list(spec.enum)}, got {value!r}")
    if spec.kind == "array":
        for i, item in enumerate(value):
            if spec.items is not None:
                if not isinstance(item, dict):
                    raise ParseError(f"field '{name}[{i}]' must be object")
                _check_object(f"{name}[{i}]", spec.items, item)
            elif spec.item_kind is not None:
                _check_value(f"{name}[{i}]", FieldSpec(f"{name}[{i}]", spec.item_kind), item)
    if spec.kind == "object" and spec.fields is not None:
        _check_object(name, spec.fields, value)


def _check_object(context: str, spec: ObjectSpec, payload: Mapping) -> None:
    missing = [f.name for f in spec.fields if f.required and f.name not in payload]
    if missing:
        raise ParseError(f"object '{context}' is missing required fields", missing=missing)
    known = spec.field_map()
    for key, value in payload.items():
        fspec = known.get(key)
        if fspec is None or value is None:
            continue  # unknown keys and explicit nulls are tolerated
        _check_value(f"{context}.{key}", fspec, value)


class SchemaRegistry:
    def __init__(self) -> None:
        self._schemas: dict[str, ObjectSpec] = {}

    def register(self, schema_id: str, spec: ObjectSpec) -> None:
        self._schemas[schema_id] = spec

    def get(self, schema_id: str) -> ObjectSpec:
        try:
            return self._schemas[schema_id]
        except KeyError:
            raise ParseError(f"schema '{schema_id}' is not registered") from None

    def __contains__(self, schema_id: str) -> bool:
        return schema_id in self._schemas


def extract_json_payload(raw_text: str) -> tuple[Any, int]:
    """First JSON object/array embedded in ``raw_text``.

    Leading and trailing prose (including markdown fences) is tolerated:
    decoding starts at each candidate ``{``/``[`` until one parses.
    Returns (value, start position).
    """
    decoder = json.JSONDecoder()
    for index, char in enumerate(raw_text):
        if char not in "{[":
            continue
        try:
            value, _ = decoder.raw_decode(raw_text, index)
        except json.JSONDecodeError:
            continue
        return value, index
    raise ParseError("no JSON payload found in completion", position=0)


def parse_structured(raw_text: str, schema: ObjectSpec) -> dict:
    """Extract and validate a structured payload against ``schema``."""
    value, position = extract_json_payload(raw_text)
    if not isinstance(value, dict):
        raise ParseError("payload must be a JSON object", position=position)
    try:
        _check_object("$", schema, value)
    except ParseError as exc:
        raise ParseError(exc.reason, position=position, missing=exc.missing) from None
    return value


# --- Stage schemas -------------------------------------------------------

ACTION_DETECTION_SCHEMA = ObjectSpec(
    fields=(
        FieldSpec(
            "action",
            "string",
            required=True,
            enum=("Chat", "Refusal", "Search", "Recommendation", "TargetedInquiry"),
        ),
        FieldSpec("reply", "string"),
        FieldSpec("keywords", "array", item_kind="string"),
        FieldSpec("category", "string"),
        FieldSpec("price_cap", "number"),
        FieldSpec(
            "window",
            "object",
            fields=ObjectSpec(
                fields=(
                    FieldSpec("start", "string", required=True),
                    FieldSpec("end", "string", required=True),
                )
            ),
        ),
        FieldSpec("target_event_id", "string"),
        FieldSpec("target_title", "string"),
    )
)

SEARCH_QUERY_SCHEMA = ObjectSpec(
    fields=(
        FieldSpec("query_text", "string", required=True),
        FieldSpec("keywords", "array", item_kind="string"),
        FieldSpec("category", "string"),
        FieldSpec("price_cap", "number"),
    )
)

PREFERENCE_SCHEMA = ObjectSpec(
    fields=(
        FieldSpec("preference_text", "string", required=True),
        FieldSpec("keywords", "array", item_kind="string"),
    )
)

REDUCTION_SCHEMA = ObjectSpec(
    fields=(
        FieldSpec(
            "verdicts",
            "array",
            required=True,
            items=ObjectSpec(
                fields=(
                    FieldSpec("event_id", "string", required=True),
                    FieldSpec("matches", "boolean", required=True),
                )
            ),
        ),
    )
)


def default_registry() -> SchemaRegistry:
    registry = SchemaRegistry()
    registry.register("action_detection", ACTION_DETECTION_SCHEMA)
    registry.register("search_query", SEARCH_QUERY_SCHEMA)
    registry.register("preference_profile", PREFERENCE_SCHEMA)
    registry.register("reduction_verdicts", REDUCTION_SCHEMA)
    return registry
