"""Prompt templates: few-shot examples, format instructions, budget trim.

Templates are plain configuration (bundled JSON, overridable by path):
a system text with ``{slot}`` placeholders, worked input/output example
pairs, an optional schema id whose format instructions get appended,
and per-stage completion/temperature defaults. Rendering always lands
under the per-call token ceiling: history is dropped oldest-first, then
examples, then the user text is truncated as a last resort.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

from .gateway import Message, PromptRequest, Role, Stage, TOKEN_LIMIT
from .tokens import count_message_tokens, truncate_to_tokens


class _SafeSlots(dict):
    def __missing__(self, key: str) -> str:
        return ""


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    stage: Stage
    system: str
    few_shot_examples: tuple[tuple[str, str], ...] = ()
    format_instructions: Optional[str] = None  # schema id
    max_completion_tokens: int = 256
    temperature: float = 0.0

    def render_system(self, slots: dict) -> str:
        return self.system.format_map(_SafeSlots(slots))


#: Appended to the system text when a template declares a schema, so the
#: model knows the reply must be a bare JSON payload.
_FORMAT_NOTE = (
    "Reply with a single JSON object matching the '{schema}' format. "
    "Do not wrap it in prose or code fences."
)


@dataclass
class HistoryEntry:
    role: Role
    text: str


def build_request(
    template: PromptTemplate,
    slots: Optional[dict] = None,
    history: Sequence[HistoryEntry] = (),
    user_text: str = "",
    history_limit: int = 6,
) -> PromptRequest:
    """Assemble a budgeted PromptRequest from a template.

    ``history`` is capped at the newest ``history_limit`` entries and
    trimmed further (oldest first) if the estimate would exceed the
    per-call token ceiling.
    """
    system = template.render_system(slots or {})
    if template.format_instructions:
        system = f"{system}\n\n{_FORMAT_NOTE.format(schema=template.format_instructions)}"

    def assemble(history_slice: Sequence[HistoryEntry], examples: int, text: str) -> PromptRequest:
        messages = [Message(Role.SYSTEM, system)]
        for example_in, example_out in template.few_shot_examples[:examples]:
            messages.append(Message(Role.USER, example_in))
            messages.append(Message(Role.ASSISTANT, example_out))
        for entry in history_slice:
            messages.append(Message(entry.role, entry.text))
        messages.append(Message(Role.USER, text))
        return PromptRequest(
            stage=template.stage,
            messages=tuple(messages),
            output_schema=template.format_instructions,
            max_completion_tokens=template.max_completion_tokens,
            temperature=template.temperature,
        )

    recent = list(history)[-history_limit:]
    examples = len(template.few_shot_examples)
    request = assemble(recent, examples, user_text)
    while request.prompt_token_estimate() + request.max_completion_tokens > TOKEN_LIMIT:
        if recent:
            recent = recent[1:]
        elif examples > 0:
            examples -= 1
        else:
            budget = (
                TOKEN_LIMIT
                - request.max_completion_tokens
                - count_message_tokens([system, ""])
                - 8
            )
            if budget >= 16:
                user_text = truncate_to_tokens(user_text, budget)
            else:
                # degenerate oversized system text: keep a fixed head of it
                system_budget = TOKEN_LIMIT - request.max_completion_tokens - 64
                system = truncate_to_tokens(system, max(system_budget, 64))
                user_text = truncate_to_tokens(user_text, 16)
            request = assemble(recent, examples, user_text)
            break
        request = assemble(recent, examples, user_text)
    return request


class TemplateLibrary:
    def __init__(self, templates: dict[Stage, PromptTemplate]):
        self._templates = templates

    def get(self, stage: Stage) -> PromptTemplate:
        return self._templates[stage]

    @classmethod
    def from_config(cls, payload: dict) -> "TemplateLibrary":
        templates = {}
        for stage_name, spec in payload.items():
            stage = Stage(stage_name)
            templates[stage] = PromptTemplate(
                template_id=spec.get("template_id", stage_name.lower()),
                stage=stage,
                system=spec["system"],
                few_shot_examples=tuple(
                    (pair["input"], pair["output"]) for pair in spec.get("few_shot", [])
                ),
                format_instructions=spec.get("format_instructions"),
                max_completion_tokens=int(spec.get("max_completion_tokens", 256)),
                temperature=float(spec.get("temperature", 0.0)),
            )
        return cls(templates)

    @classmethod
    def load(cls, path: Optional[str] = None) -> "TemplateLibrary":
        if path is None:
            raw = resources.files("eventcrs.data").joinpath("prompts.json").read_text("utf-8")
        else:
            with open(path, encoding="utf-8") as fh:
                raw = fh.read()
        return cls.from_config(json.loads(raw))
