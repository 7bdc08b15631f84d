"""Task specifications and the deterministic checkpoint evaluator.

Checkpoints are ordered predicates over canonical state only — never over
the perturbed DOM and never over the agent's own success claim. Milestones
are matched strictly in order as the episode progresses; finals are
evaluated once, against the terminal state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .kernel import EnvState
from .sitespec import SiteSpec


class TaskValidationError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class Checkpoint:
    checkpoint_id: str
    stage: str  # "milestone" | "final"
    kind: str  # predicate name
    params: dict

    def holds(self, state: EnvState) -> bool:
        if self.kind == "on_page":
            return state.route == self.params["route"]
        matching = _matching_records(state, self.params)
        if self.kind == "entity_exists":
            return bool(matching)
        if self.kind == "entity_count":
            return len(matching) == self.params["n"]
        if self.kind == "entity_field_equals":
            return bool(matching) and all(
                record.fields.get(self.params["field"]) == self.params["value"]
                for record in matching
            )
        if self.kind == "flag_set":
            return bool(matching) and all(
                bool(record.fields.get(self.params["field"])) for record in matching
            )
        raise ValueError(f"unknown predicate {self.kind!r}")


def _matching_records(state: EnvState, params: dict):
    records = state.records(params["type"])
    if params.get("id") is not None:
        return [r for r in records if r.record_id == params["id"]]
    conditions = params.get("filter") or {}
    return [
        r
        for r in records
        if all(r.fields.get(name) == value for name, value in conditions.items())
    ]


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    site_id: str
    instruction: str
    overlay: tuple[dict, ...]
    checkpoints: tuple[Checkpoint, ...]
    golden: tuple[dict, ...]

    @property
    def milestones(self) -> tuple[Checkpoint, ...]:
        return tuple(c for c in self.checkpoints if c.stage == "milestone")

    @property
    def finals(self) -> tuple[Checkpoint, ...]:
        return tuple(c for c in self.checkpoints if c.stage == "final")


@dataclass(frozen=True)
class CheckpointResult:
    checkpoint_id: str
    stage: str
    passed: bool
    first_pass_step: int | None

    def to_wire(self) -> dict:
        return {
            "checkpoint_id": self.checkpoint_id,
            "stage": self.stage,
            "passed": self.passed,
            "first_pass_step": self.first_pass_step,
        }


@dataclass
class Progress:
    """Milestone bookkeeping: strictly ordered, never reverting."""

    milestone_steps: dict[str, int] = field(default_factory=dict)
    next_index: int = 0


def evaluate_step(state: EnvState, task: TaskSpec, progress: Progress) -> Progress:
    """Called once per accepted action. Tests only the lowest unmet
    milestone, cascading when one pass unlocks the next in the same step;
    a later milestone satisfied early earns nothing until its turn."""
    milestones = task.milestones
    while progress.next_index < len(milestones):
        checkpoint = milestones[progress.next_index]
        if not checkpoint.holds(state):
            break
        progress.milestone_steps[checkpoint.checkpoint_id] = state.step
        progress.next_index += 1
    return progress


def evaluate_final(
    state: EnvState, task: TaskSpec, progress: Progress
) -> list[CheckpointResult]:
    """Terminal evaluation: milestone results from progress, finals against
    the terminal canonical state."""
    results: list[CheckpointResult] = []
    for checkpoint in task.checkpoints:
        if checkpoint.stage == "milestone":
            step = progress.milestone_steps.get(checkpoint.checkpoint_id)
            results.append(
                CheckpointResult(
                    checkpoint_id=checkpoint.checkpoint_id,
                    stage="milestone",
                    passed=step is not None,
                    first_pass_step=step,
                )
            )
        else:
            passed = checkpoint.holds(state)
            results.append(
                CheckpointResult(
                    checkpoint_id=checkpoint.checkpoint_id,
                    stage="final",
                    passed=passed,
                    first_pass_step=state.step if passed else None,
                )
            )
    return results


def task_score(results: list[CheckpointResult]) -> float:
    if not results:
        raise ValueError("no checkpoint results")
    return sum(1 for r in results if r.passed) / len(results)


# --- task file loading ------------------------------------------------------

_PREDICATES = ("on_page", "entity_exists", "entity_field_equals", "entity_count", "flag_set")


def load_task(text: str, site: SiteSpec) -> TaskSpec:
    """Parse and validate one task document against its site."""
    doc = yaml.safe_load(text)
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise TaskValidationError(["task document must be a mapping"])

    task_id = str(doc.get("task_id", ""))
    site_id = str(doc.get("site_id", ""))
    if site_id != site.site_id:
        errors.append(f"task {task_id!r}: site mismatch ({site_id!r})")

    checkpoints: list[Checkpoint] = []
    for raw in doc.get("checkpoints") or []:
        stage = str(raw.get("stage", ""))
        if stage not in ("milestone", "final"):
            errors.append(f"checkpoint {raw.get('id')!r}: bad stage {stage!r}")
            continue
        kind = next((k for k in _PREDICATES if k in raw), None)
        if kind is None:
            errors.append(f"checkpoint {raw.get('id')!r}: no known predicate")
            continue
        body = raw[kind]
        if kind == "on_page":
            params = {"route": str(body)}
            if params["route"] not in site.pages:
                errors.append(f"checkpoint {raw.get('id')!r}: unknown route {body!r}")
        else:
            params = {
                "type": str(body.get("type", "")),
                "id": body.get("id"),
                "filter": dict(body.get("filter") or {}),
            }
            if kind == "entity_field_equals":
                params["field"] = str(body.get("field", ""))
                params["value"] = body.get("value")
            elif kind == "entity_count":
                params["n"] = int(body.get("n", 0))
            elif kind == "flag_set":
                params["field"] = str(body.get("field", ""))
            schema = site.entity_schemas.get(params["type"])
            if schema is None:
                errors.append(
                    f"checkpoint {raw.get('id')!r}: unknown entity type {params['type']!r}"
                )
            else:
                named = set(params["filter"])
                if "field" in params:
                    named.add(params["field"])
                for name in named:
                    if name not in schema.fields:
                        errors.append(
                            f"checkpoint {raw.get('id')!r}: unknown field {name!r}"
                        )
        checkpoints.append(
            Checkpoint(
                checkpoint_id=str(raw.get("id", f"cp{len(checkpoints)}")),
                stage=stage,
                kind=kind,
                params=params,
            )
        )

    stages = [c.stage for c in checkpoints]
    if "final" not in stages:
        errors.append(f"task {task_id!r}: needs at least one final checkpoint")
    if "milestone" in stages and "final" in stages:
        if stages.index("final") < len(stages) - 1 - stages[::-1].index("milestone"):
            errors.append(f"task {task_id!r}: milestones must precede finals")

    golden = tuple(dict(item) for item in doc.get("golden") or [])
    for item in golden:
        if not any(k in item for k in ("click", "fill", "type", "hotkey")):
            errors.append(f"task {task_id!r}: unknown golden entry {item!r}")
        if "click" in item and item["click"] not in site.behaviors:
            errors.append(
                f"task {task_id!r}: golden clicks unknown element_key {item['click']!r}"
            )

    if errors:
        raise TaskValidationError(errors)
    return TaskSpec(
        task_id=task_id,
        site_id=site_id,
        instruction=str(doc.get("instruction", "")),
        overlay=tuple(dict(r) for r in doc.get("overlay") or []),
        checkpoints=tuple(checkpoints),
        golden=golden,
    )
