"""The episode runner: one agent working one task under one stress mode.

The runner owns the closed loop. Each round it renders the canonical page,
applies the configured perception transforms, hands the agent a view, and
executes the agent's message — threading it through the semantic gate,
the silent-drop draw, the kernel transition, and the pop-up spawn, in that
order. All randomness comes from streams keyed by (seed, session, step,
purpose), so a step's draws never depend on how many draws earlier steps
consumed.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import kernel, protocol
from .dom import DomTree, serialize
from .evaluator import Progress, TaskSpec, evaluate_final, evaluate_step, task_score
from .perturb import (
    PerturbConfig,
    inject_failure,
    inject_rule_banner,
    maybe_spawn_popup,
    over_encode,
    perturb_dom,
    remap_gate,
    remap_interrupt,
)
from .rng import RngStream
from .sitespec import SiteSpec

DEFAULT_MAX_STEPS = 100

BUDGET_EXHAUSTED = "budget_exhausted"

# internal-only outcome for a first click consumed by the semantic gate
REMAP_SELECTED = kernel.REMAP_SELECTED


@dataclass(frozen=True)
class StepView:
    """What an in-process agent gets to see: the perturbed page and the
    conversation so far. Canonical state and provenance stay hidden."""

    instruction: str
    step: int
    remaining_budget: int
    tree: DomTree
    history: tuple[tuple[protocol.AgentMessage, str], ...]


@dataclass
class StepRecord:
    step: int
    action: dict
    outcome: str  # agent-visible outcome; injections are already masked
    digest: str
    route: str
    checkpoints_passed: tuple[str, ...]
    internal_outcome: str  # never serialized — test/debug visibility only

    def to_wire(self) -> dict:
        return {
            "step": self.step,
            "action": self.action,
            "outcome": self.outcome,
            "digest": self.digest,
            "route": self.route,
            "checkpoints_passed": list(self.checkpoints_passed),
        }


@dataclass
class RunRecord:
    task_id: str
    site_id: str
    agent: str
    mode: str
    seed: int
    suite_seed: int | None
    seed_index: int | None
    config: dict
    max_steps: int
    steps: list[StepRecord]
    terminal_status: str
    checkpoints: list
    score: float

    @property
    def steps_used(self) -> int:
        return len(self.steps)

    def to_wire(self) -> dict:
        return {
            "task_id": self.task_id,
            "site_id": self.site_id,
            "agent": self.agent,
            "mode": self.mode,
            "seed": self.seed,
            "suite_seed": self.suite_seed,
            "seed_index": self.seed_index,
            "config": self.config,
            "max_steps": self.max_steps,
            "steps": [s.to_wire() for s in self.steps],
            "steps_used": self.steps_used,
            "terminal_status": self.terminal_status,
            "checkpoints": [c.to_wire() for c in self.checkpoints],
            "score": self.score,
        }


class EpisodeError(RuntimeError):
    pass


class EpisodeRunner:
    """Incremental driver for a single episode.

    `view()` (or `observation()`) is safe to call repeatedly between
    actions; `act()` consumes exactly one step. The same object backs both
    in-process runs and the HTTP session service.
    """

    def __init__(
        self,
        site: SiteSpec,
        task: TaskSpec,
        config: PerturbConfig,
        *,
        agent_name: str = "agent",
        max_steps: int = DEFAULT_MAX_STEPS,
        suite_seed: int | None = None,
        seed_index: int | None = None,
    ):
        if config.mode not in ("clean", "chaos", "noise", "failure", "popup", "remapE", "remap"):
            raise ValueError(f"unknown mode {config.mode!r}")
        self.site = site
        self.task = task
        self.config = config
        self.agent_name = agent_name
        self.max_steps = max_steps
        self.suite_seed = suite_seed
        self.seed_index = seed_index
        self.session = f"{task.task_id}:{config.mode}"
        self.state = kernel.reset(site, list(task.overlay))
        self.progress = Progress()
        self.steps: list[StepRecord] = []
        self.history: list[tuple[protocol.AgentMessage, str]] = []
        self.terminal_status: str | None = None
        self._visible: tuple[DomTree, dict] | None = None

    # -- randomness ---------------------------------------------------------

    def _rng(self, step: int, purpose: str) -> RngStream:
        return RngStream(self.config.seed, self.session, step, purpose)

    # -- observation --------------------------------------------------------

    @property
    def terminated(self) -> bool:
        return self.state.terminated

    @property
    def pending_step(self) -> int:
        """The step number the next action will occupy (1-based)."""
        return self.state.step + 1

    def _ensure_visible(self) -> tuple[DomTree, dict]:
        if self._visible is None:
            tree, prov = kernel.render(self.site, self.state)
            if self.config.mode == "remapE":
                tree, prov = inject_rule_banner(tree, prov)
            if self.config.mode in ("chaos", "noise"):
                rng = self._rng(self.pending_step, "perturb")
                tree, prov = perturb_dom(tree, prov, self.config, rng)
            self._visible = (tree, prov)
        return self._visible

    def view(self) -> StepView:
        if self.terminated:
            raise EpisodeError("episode already terminated")
        tree, _ = self._ensure_visible()
        return StepView(
            instruction=self.task.instruction,
            step=self.state.step,
            remaining_budget=self.max_steps - self.state.step,
            tree=tree,
            history=tuple(self.history),
        )

    def observation_text(self) -> str:
        """The page as wire text; the noise mode over-encodes it."""
        tree, _ = self._ensure_visible()
        if self.config.mode == "noise":
            rng = self._rng(self.pending_step, "encode")
            return over_encode(tree, rng, self.config.noise_density)
        return serialize(tree)

    def observation(self) -> protocol.Observation:
        view = self.view()
        return protocol.Observation(
            instruction=view.instruction,
            step=view.step,
            remaining_budget=view.remaining_budget,
            dom=self.observation_text(),
            history=view.history,
        )

    # -- acting -------------------------------------------------------------

    def act(self, message: protocol.AgentMessage) -> StepRecord:
        if self.terminated:
            raise EpisodeError("episode already terminated")
        tree, prov = self._ensure_visible()
        acting_step = self.pending_step
        resolution = kernel.resolve(tree, prov, message)
        digest_before = kernel.canonical_digest(self.state)
        internal: str | None = None

        if self.config.mode in ("remap", "remapE"):
            if message.action_type == protocol.CLICK and resolution.ok:
                gate = remap_gate(
                    self.state, resolution.provenance.element_key, self.site.remap_set
                )
                if gate == "select":
                    self.state, internal = kernel.consume_step(
                        self.state, REMAP_SELECTED
                    )
            elif message.action_type != protocol.CLICK:
                remap_interrupt(self.state)

        if internal is None and self.config.mode == "failure":
            rng = self._rng(acting_step, "failure")
            if inject_failure(rng, self.config, message.action_type):
                self.state, internal = kernel.consume_step(
                    self.state, kernel.SILENTLY_DROPPED
                )

        if internal is None:
            self.state, internal = kernel.transition(
                self.site, self.state, message, resolution
            )
            if (
                self.config.mode == "popup"
                and not self.state.terminated
                and internal == kernel.EXECUTED
                and self.state.modal is None
                and kernel.canonical_digest(self.state) != digest_before
            ):
                modal = maybe_spawn_popup(self.config, self._rng(acting_step, "popup"))
                if modal is not None:
                    self.state.modal = modal

        return self._finish_step(message.to_wire(), internal, message)

    def reject_malformed(self, payload: object) -> StepRecord:
        """A message that failed protocol parsing still consumes a step."""
        if self.terminated:
            raise EpisodeError("episode already terminated")
        self.state, internal = kernel.consume_step(
            self.state, protocol.rejected("malformed_action")
        )
        echo = payload if isinstance(payload, dict) else {"raw": str(payload)}
        return self._finish_step(echo, internal, None)

    def _finish_step(
        self,
        action_wire: dict,
        internal: str,
        message: protocol.AgentMessage | None,
    ) -> StepRecord:
        before = dict(self.progress.milestone_steps)
        self.progress = evaluate_step(self.state, self.task, self.progress)
        newly = tuple(
            checkpoint_id
            for checkpoint_id, step in self.progress.milestone_steps.items()
            if checkpoint_id not in before
        )

        if self.state.terminated:
            self.terminal_status = self.state.terminal_status
        elif self.state.step >= self.max_steps:
            self.state.terminated = True
            self.state.terminal_status = BUDGET_EXHAUSTED
            self.terminal_status = BUDGET_EXHAUSTED

        reported = kernel.reported_outcome(internal)
        record = StepRecord(
            step=self.state.step,
            action=action_wire,
            outcome=reported,
            digest=kernel.canonical_digest(self.state),
            route=self.state.route,
            checkpoints_passed=newly,
            internal_outcome=internal,
        )
        self.steps.append(record)
        if message is not None:
            self.history.append((message, reported))
        self._visible = None
        return record

    # -- completion ---------------------------------------------------------

    def result(self) -> RunRecord:
        if not self.terminated:
            raise EpisodeError("episode still running")
        results = evaluate_final(self.state, self.task, self.progress)
        return RunRecord(
            task_id=self.task.task_id,
            site_id=self.site.site_id,
            agent=self.agent_name,
            mode=self.config.mode,
            seed=self.config.seed,
            suite_seed=self.suite_seed,
            seed_index=self.seed_index,
            config=self.config.to_wire(),
            max_steps=self.max_steps,
            steps=self.steps,
            terminal_status=self.terminal_status or self.state.terminal_status or "",
            checkpoints=results,
            score=task_score(results),
        )


def run_episode(
    site: SiteSpec,
    task: TaskSpec,
    agent,
    config: PerturbConfig,
    *,
    max_steps: int = DEFAULT_MAX_STEPS,
    suite_seed: int | None = None,
    seed_index: int | None = None,
) -> RunRecord:
    """Drive one agent through one episode to termination."""
    runner = EpisodeRunner(
        site,
        task,
        config,
        agent_name=getattr(agent, "name", "agent"),
        max_steps=max_steps,
        suite_seed=suite_seed,
        seed_index=seed_index,
    )
    while not runner.terminated:
        message = agent.decide(runner.view())
        runner.act(message)
    return runner.result()
