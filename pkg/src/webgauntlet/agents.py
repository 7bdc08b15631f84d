"""Built-in agents: the scripted oracle, a seeded random walker, an
instant DONE-claimer, and a fixed-script replayer.

The oracle follows the task's golden action sequence with three repair
rules, applied in order each turn:

1. If a modal is on screen, dismiss it.
2. If the previous golden step declared a postcondition and the current
   page does not satisfy it, re-issue the previous action. This one rule
   recovers both silent drops (the action never landed) and semantic
   remapping (the first click only selected the control).
3. Otherwise issue the next golden action, or DONE after the last.

Because every repair decision reads only the observed page, the same
oracle runs unmodified in all modes.
"""

from __future__ import annotations

from . import protocol
from .episode import StepView
from .evaluator import TaskSpec
from .kernel import golden_message
from .rng import RngStream
from .selectors import parse_selector, query

_MODAL_DISMISS = parse_selector("#modal-dismiss")


class OracleAgent:
    name = "oracle"

    def __init__(self, task: TaskSpec):
        self.golden = list(task.golden)
        self.cursor = 0

    def decide(self, view: StepView) -> protocol.AgentMessage:
        if query(view.tree, _MODAL_DISMISS):
            return protocol.click("#modal-dismiss", reasoning="dismiss the pop-up")
        if self.cursor > 0:
            prev = self.golden[self.cursor - 1]
            post = prev.get("post")
            if post and not query(view.tree, parse_selector(post)):
                return golden_message(prev)
        if self.cursor >= len(self.golden):
            return protocol.done(reasoning="workflow complete")
        item = self.golden[self.cursor]
        self.cursor += 1
        return golden_message(item)


class RandomAgent:
    """Seeded chaos monkey: clicks random ids, types junk, waits, and
    eventually claims success. Fully deterministic for a given
    (seed, session) pair."""

    name = "random"

    _WORDS = ("lorem", "asdf", "hello", "zzz", "test123")

    def __init__(self, seed: int, session: str):
        self.seed = seed
        self.session = session

    def decide(self, view: StepView) -> protocol.AgentMessage:
        rng = RngStream(self.seed, self.session, view.step + 1, "agent")
        ids = [
            node.attributes["id"]
            for node in view.tree.nodes()
            if node.is_element() and "id" in node.attributes
        ]
        roll = rng.next_float()
        if roll < 0.55 and ids:
            return protocol.click(f"#{rng.choice(ids)}")
        if roll < 0.70:
            return protocol.type_text(rng.choice(self._WORDS))
        if roll < 0.80:
            return protocol.wait()
        if roll < 0.90:
            return protocol.hotkey("Enter")
        if roll < 0.95:
            return protocol.fill("input", rng.choice(self._WORDS))
        return protocol.done(reasoning="giving up optimistically")


class AlwaysDoneAgent:
    """Claims success immediately; the calibration metric's worst case."""

    name = "always-done"

    def decide(self, view: StepView) -> protocol.AgentMessage:
        return protocol.done(reasoning="confident")


class ScriptedAgent:
    """Replays a fixed list of protocol messages, then claims DONE."""

    name = "scripted"

    def __init__(self, messages: list[protocol.AgentMessage], name: str | None = None):
        self.messages = list(messages)
        self.cursor = 0
        if name is not None:
            self.name = name

    def decide(self, view: StepView) -> protocol.AgentMessage:
        if self.cursor >= len(self.messages):
            return protocol.done(reasoning="script exhausted")
        message = self.messages[self.cursor]
        self.cursor += 1
        return message


class WaitForeverAgent:
    """Waits until the budget runs out; exercises the step-limit rule."""

    name = "wait-forever"

    def decide(self, view: StepView) -> protocol.AgentMessage:
        return protocol.wait(reasoning="just watching")


AGENT_KINDS = ("oracle", "random", "always-done", "wait-forever")


def make_agent(kind: str, task: TaskSpec, seed: int, session: str):
    """Fresh agent instance for one episode."""
    if kind == "oracle":
        return OracleAgent(task)
    if kind == "random":
        return RandomAgent(seed, session)
    if kind == "always-done":
        return AlwaysDoneAgent()
    if kind == "wait-forever":
        return WaitForeverAgent()
    raise ValueError(f"unknown agent kind {kind!r}")
