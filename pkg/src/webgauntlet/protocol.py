"""Agent action protocol: message shapes, outcomes, and observations.

The wire shape of an action is exactly
``{"action_type": "...", "parameters": {...}, "reasoning": "..."}``.
Parameter presence is tied to the action type: CLICK needs ``selector``,
FILL needs ``selector`` and ``text``, TYPE needs ``text``, HOTKEY needs
``keys``, and WAIT/DONE/FAIL take none. ``reasoning`` is logged verbatim
and never interpreted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

CLICK = "CLICK"
TYPE = "TYPE"
FILL = "FILL"
HOTKEY = "HOTKEY"
WAIT = "WAIT"
DONE = "DONE"
FAIL = "FAIL"

ACTION_TYPES = (CLICK, TYPE, FILL, HOTKEY, WAIT, DONE, FAIL)

# Reported outcomes (agent-visible). Internal-only outcomes never appear here.
EXECUTED = "executed"
NO_EFFECT = "no_effect"

REJECTED_REASONS = (
    "selector_no_match",
    "ambiguous_match",
    "invalid_target",
    "malformed_action",
)


def rejected(reason: str) -> str:
    return f"rejected({reason})"


class MalformedMessage(ValueError):
    pass


@dataclass(frozen=True)
class AgentMessage:
    action_type: str
    parameters: dict = field(default_factory=dict)
    reasoning: str = ""

    @property
    def selector(self) -> str:
        return str(self.parameters.get("selector", ""))

    @property
    def text(self) -> str:
        return str(self.parameters.get("text", ""))

    @property
    def keys(self) -> str:
        return str(self.parameters.get("keys", ""))

    def to_wire(self) -> dict:
        return {
            "action_type": self.action_type,
            "parameters": dict(self.parameters),
            "reasoning": self.reasoning,
        }


_REQUIRED_PARAMS = {
    CLICK: ("selector",),
    FILL: ("selector", "text"),
    TYPE: ("text",),
    HOTKEY: ("keys",),
    WAIT: (),
    DONE: (),
    FAIL: (),
}


def parse_agent_message(payload) -> AgentMessage:
    """Validate a wire-shaped action; raises :class:`MalformedMessage`.

    Unknown action types, missing required parameters, and non-string
    parameter values are all malformed. Extra parameters are tolerated
    (logged as sent) so near-miss agent output stays inspectable.
    """
    if not isinstance(payload, dict):
        raise MalformedMessage("action must be an object")
    action_type = payload.get("action_type")
    if action_type not in ACTION_TYPES:
        raise MalformedMessage(f"unknown action_type {action_type!r}")
    parameters = payload.get("parameters", {})
    if not isinstance(parameters, dict):
        raise MalformedMessage("parameters must be an object")
    for name in _REQUIRED_PARAMS[action_type]:
        if name not in parameters:
            raise MalformedMessage(f"{action_type} requires parameter {name!r}")
        if not isinstance(parameters[name], str):
            raise MalformedMessage(f"parameter {name!r} must be a string")
    reasoning = payload.get("reasoning", "")
    if not isinstance(reasoning, str):
        raise MalformedMessage("reasoning must be a string")
    return AgentMessage(
        action_type=action_type, parameters=dict(parameters), reasoning=reasoning
    )


def click(selector: str, reasoning: str = "") -> AgentMessage:
    return AgentMessage(CLICK, {"selector": selector}, reasoning)


def fill(selector: str, text: str, reasoning: str = "") -> AgentMessage:
    return AgentMessage(FILL, {"selector": selector, "text": text}, reasoning)


def type_text(text: str, reasoning: str = "") -> AgentMessage:
    return AgentMessage(TYPE, {"text": text}, reasoning)


def hotkey(keys: str, reasoning: str = "") -> AgentMessage:
    return AgentMessage(HOTKEY, {"keys": keys}, reasoning)


def wait(reasoning: str = "") -> AgentMessage:
    return AgentMessage(WAIT, reasoning=reasoning)


def done(reasoning: str = "") -> AgentMessage:
    return AgentMessage(DONE, reasoning=reasoning)


def fail(reasoning: str = "") -> AgentMessage:
    return AgentMessage(FAIL, reasoning=reasoning)


@dataclass(frozen=True)
class Observation:
    """What the agent sees each step: instruction, DOM, budget, history."""

    instruction: str
    step: int
    remaining_budget: int
    dom: str
    history: tuple[tuple[AgentMessage, str], ...] = ()

    def to_wire(self) -> dict:
        return {
            "instruction": self.instruction,
            "step": self.step,
            "remaining_budget": self.remaining_budget,
            "dom": self.dom,
            "history": [
                {"action": message.to_wire(), "outcome": outcome}
                for message, outcome in self.history
            ],
        }


def observation_from_wire(payload: dict) -> Observation:
    history = tuple(
        (parse_agent_message(entry["action"]), str(entry["outcome"]))
        for entry in payload.get("history", [])
    )
    return Observation(
        instruction=str(payload["instruction"]),
        step=int(payload["step"]),
        remaining_budget=int(payload["remaining_budget"]),
        dom=str(payload["dom"]),
        history=history,
    )
