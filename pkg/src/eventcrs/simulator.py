"""Scenario-driven session simulator.

A scenario file scripts one user session: a catalog fixture, a mock
provider script, a fixed clock, and a list of steps, each a user input
event plus declarative expectations (only asserted fields are checked).
Steps run through the real dialog engine; the report carries per-step
pass/fail, the deterministic turn logs, and token accounting. Wall
clock values stay out of the report so replays compare byte-identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Sequence

from .catalog import Catalog, load_catalog_jsonl, parse_timestamp
from .dialog import DialogEngine, SessionState, UserInputEvent, event_from_json
from .gateway import CostRate, Gateway, MockProvider
from .telemetry import MetricsStore, PromptMetric, TurnLog


@dataclass(frozen=True)
class StepExpectation:
    action: Optional[str] = None
    slate_ids: Optional[tuple[str, ...]] = None
    window: Optional[dict] = None  # expected extracted window, ISO start/end
    text_contains: Optional[str] = None
    outcome: Optional[str] = None

    @classmethod
    def from_json(cls, payload: dict) -> "StepExpectation":
        return cls(
            action=payload.get("action"),
            slate_ids=tuple(payload["slate_ids"]) if "slate_ids" in payload else None,
            window=payload.get("window"),
            text_contains=payload.get("text_contains"),
            outcome=payload.get("outcome"),
        )


@dataclass(frozen=True)
class ScenarioStep:
    event: dict
    expect: StepExpectation


@dataclass
class Scenario:
    name: str
    steps: list[ScenarioStep]
    catalog_path: str
    mock_script_path: Optional[str] = None
    now: Optional[datetime] = None
    language: str = "en"
    past_interaction_ids: list[str] = field(default_factory=list)
    success: bool = True  # drives failure classification in tests/reports

    @classmethod
    def load(cls, path: str) -> "Scenario":
        base = os.path.dirname(os.path.abspath(path))
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        steps = [
            ScenarioStep(
                event=item["event"],
                expect=StepExpectation.from_json(item.get("expect", {})),
            )
            for item in payload["steps"]
        ]
        if not steps:
            raise ValueError(f"scenario {payload.get('name')!r} has no steps")

        def resolve(value: Optional[str]) -> Optional[str]:
            if value is None:
                return None
            return value if os.path.isabs(value) else os.path.join(base, value)

        catalog_path = resolve(payload["catalog"])
        mock_script_path = resolve(payload.get("mock_script"))
        for required in filter(None, [catalog_path, mock_script_path]):
            if not os.path.exists(required):
                raise FileNotFoundError(f"scenario fixture missing: {required}")
        return cls(
            name=payload["name"],
            steps=steps,
            catalog_path=catalog_path,
            mock_script_path=mock_script_path,
            now=parse_timestamp(payload["now"]) if payload.get("now") else None,
            language=payload.get("language", "en"),
            past_interaction_ids=list(payload.get("past_interaction_ids", [])),
            success=bool(payload.get("success", True)),
        )


@dataclass
class StepResult:
    index: int
    event_kind: str
    passed: bool
    failures: list[str]
    action: Optional[str]
    outcome: str
    assistant_text: str
    slate_ids: list[str]
    extracted_window: Optional[dict]
    prompt_tokens: int
    stage_sequence: list[str]


@dataclass
class ScenarioReport:
    name: str
    steps: list[StepResult]
    turn_logs: list[TurnLog]
    total_tokens: int
    total_cost_usd: str
    prompt_count: int

    @property
    def passed(self) -> bool:
        return all(step.passed for step in self.steps)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "steps": [
                {
                    "index": step.index,
                    "event_kind": step.event_kind,
                    "passed": step.passed,
                    "failures": step.failures,
                    "action": step.action,
                    "outcome": step.outcome,
                    "assistant_text": step.assistant_text,
                    "slate_ids": step.slate_ids,
                    "extracted_window": step.extracted_window,
                    "prompt_tokens": step.prompt_tokens,
                    "stage_sequence": step.stage_sequence,
                }
                for step in self.steps
            ],
            "turn_logs": [entry.to_json() for entry in self.turn_logs],
            "totals": {
                "total_tokens": self.total_tokens,
                "total_cost_usd": self.total_cost_usd,
                "prompt_count": self.prompt_count,
            },
        }

    def render_text(self) -> str:
        lines = [f"scenario {self.name}: {'PASS' if self.passed else 'FAIL'}"]
        for step in self.steps:
            status = "pass" if step.passed else "FAIL"
            lines.append(
                f"  step {step.index} [{step.event_kind}] {status}"
                + (f" action={step.action}" if step.action else "")
            )
            for failure in step.failures:
                lines.append(f"    - {failure}")
        lines.append(
            f"  totals: {self.total_tokens} tokens / {self.prompt_count} prompts"
            f" / ${self.total_cost_usd}"
        )
        return "\n".join(lines)


def _check_step(step: ScenarioStep, result, state: SessionState) -> list[str]:
    failures = []
    expect = step.expect
    if expect.action is not None and result.action_taken != expect.action:
        failures.append(f"expected action {expect.action}, got {result.action_taken}")
    if expect.slate_ids is not None:
        actual = tuple(result.slate.ids()) if result.slate else ()
        if actual != expect.slate_ids:
            failures.append(f"expected slate {list(expect.slate_ids)}, got {list(actual)}")
    if expect.window is not None:
        actual_window = result.extracted_window.to_json() if result.extracted_window else None
        if actual_window != expect.window:
            failures.append(f"expected window {expect.window}, got {actual_window}")
    if expect.text_contains is not None and expect.text_contains not in result.assistant_text:
        failures.append(
            f"expected text containing {expect.text_contains!r}, got {result.assistant_text!r}"
        )
    if expect.outcome is not None and result.outcome != expect.outcome:
        failures.append(f"expected outcome {expect.outcome}, got {result.outcome}")
    return failures


def run_scenario(
    scenario: Scenario,
    provider=None,
    store: Optional[MetricsStore] = None,
    catalog: Optional[Catalog] = None,
    cost_rate: CostRate = CostRate(),
) -> ScenarioReport:
    """Execute every step through the dialog engine and check expectations."""
    if catalog is None:
        catalog, _ = load_catalog_jsonl(scenario.catalog_path)
    if provider is None:
        if scenario.mock_script_path is None:
            raise ValueError(f"scenario {scenario.name!r} names no mock script")
        provider = MockProvider.from_script_file(scenario.mock_script_path)

    recorder = store.record_safely if store is not None else None
    gateway = Gateway(provider, rate=cost_rate, recorder=recorder)
    now = scenario.now or datetime.now(timezone.utc)
    engine = DialogEngine(
        catalog=catalog,
        gateway=gateway,
        store=store,
        clock=lambda: now,
    )
    state = engine.new_session(f"scenario-{scenario.name}", language=scenario.language)
    state.past_interaction_ids = list(scenario.past_interaction_ids)

    steps: list[StepResult] = []
    turn_logs: list[TurnLog] = []
    all_metrics: list[PromptMetric] = []
    for index, step in enumerate(scenario.steps, start=1):
        event: UserInputEvent = event_from_json(step.event)
        result = engine.take_turn(state, event)
        failures = _check_step(step, result, state)
        all_metrics.extend(result.turn_metrics)
        if result.turn_log is not None:
            turn_logs.append(result.turn_log)
        steps.append(
            StepResult(
                index=index,
                event_kind=step.event["kind"],
                passed=not failures,
                failures=failures,
                action=result.action_taken,
                outcome=result.outcome,
                assistant_text=result.assistant_text,
                slate_ids=result.slate.ids() if result.slate else [],
                extracted_window=(
                    result.extracted_window.to_json() if result.extracted_window else None
                ),
                prompt_tokens=sum(m.usage.total_tokens for m in result.turn_metrics),
                stage_sequence=[m.stage.value for m in result.turn_metrics],
            )
        )

    from decimal import Decimal

    total_cost = sum((m.cost_usd for m in all_metrics), Decimal(0))
    return ScenarioReport(
        name=scenario.name,
        steps=steps,
        turn_logs=turn_logs,
        total_tokens=sum(m.usage.total_tokens for m in all_metrics),
        total_cost_usd=str(total_cost),
        prompt_count=len(all_metrics),
    )


def bundled_scenario_dir() -> str:
    from importlib import resources

    return str(resources.files("eventcrs.data").joinpath("scenarios"))


def load_bundled_scenario(name: str) -> Scenario:
    return Scenario.load(os.path.join(bundled_scenario_dir(), f"{name}.json"))


BUNDLED_SCENARIOS: Sequence[str] = (
    "five_actions",
    "injection",
    "chat_time_preference",
    "relevance_missing",
    "targeted_inquiry_failed",
    "time_location_mismatch",
    "reduction_batching",
)
