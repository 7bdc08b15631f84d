"""Episode-loop semantics: masking, pop-ups, the double-click gate, budget,
and the exact interleaving of injection stages around the kernel transition.
"""

from __future__ import annotations

import json

import pytest

from webgauntlet import protocol
from webgauntlet.agents import AlwaysDoneAgent, OracleAgent, ScriptedAgent, WaitForeverAgent
from webgauntlet.catalog import get_site, get_task
from webgauntlet.episode import (
    BUDGET_EXHAUSTED,
    REMAP_SELECTED,
    EpisodeError,
    EpisodeRunner,
    run_episode,
)
from webgauntlet.perturb import RULE_BANNER_TEXT, PerturbConfig


def make_runner(task_id="shop-add-deal", mode="clean", seed=0, **kwargs):
    task = get_task(task_id)
    site = get_site(task.site_id)
    config_fields = {
        k: kwargs.pop(k)
        for k in ("failure_p", "popup_f", "chaos_magnitude", "noise_density")
        if k in kwargs
    }
    config = PerturbConfig(mode=mode, seed=seed, **config_fields)
    return EpisodeRunner(site, task, config, **kwargs)


class TestCleanEpisodes:
    def test_oracle_full_pass_with_golden_length(self):
        task = get_task("shop-add-deal")
        record = run_episode(
            get_site("shop"), task, OracleAgent(task), PerturbConfig(mode="clean")
        )
        assert record.terminal_status == "done_claimed"
        assert record.score == 1.0
        assert record.steps_used == len(task.golden) + 1  # trailing DONE

    def test_always_done_claims_without_solving(self):
        task = get_task("shop-add-deal")
        record = run_episode(
            get_site("shop"), task, AlwaysDoneAgent(), PerturbConfig(mode="clean")
        )
        assert record.steps_used == 1
        assert record.terminal_status == "done_claimed"
        assert record.score < 1.0
        finals = [c for c in record.checkpoints if c.stage == "final"]
        assert finals and not any(c.passed for c in finals)

    def test_step_records_number_consecutively(self):
        task = get_task("shop-add-deal")
        record = run_episode(
            get_site("shop"), task, OracleAgent(task), PerturbConfig(mode="clean")
        )
        assert [s.step for s in record.steps] == list(range(1, record.steps_used + 1))

    def test_milestone_events_recorded_on_their_step(self):
        task = get_task("shop-add-deal")
        record = run_episode(
            get_site("shop"), task, OracleAgent(task), PerturbConfig(mode="clean")
        )
        assert record.steps[0].checkpoints_passed == ("reach-products",)
        assert all(s.checkpoints_passed == () for s in record.steps[1:])

    def test_record_to_wire_hides_internal_outcome(self):
        record = run_episode(
            get_site("shop"),
            get_task("shop-add-deal"),
            AlwaysDoneAgent(),
            PerturbConfig(mode="clean"),
        )
        wire = record.to_wire()
        assert "internal_outcome" not in wire["steps"][0]
        assert wire["config"]["mode"] == "clean"
        assert wire["steps_used"] == 1

    def test_identical_runs_are_identical_records(self):
        task = get_task("notes-pin")
        site = get_site("notes")
        records = [
            run_episode(site, task, OracleAgent(task), PerturbConfig(mode="clean")).to_wire()
            for _ in range(2)
        ]
        assert json.dumps(records[0], sort_keys=True) == json.dumps(records[1], sort_keys=True)


class TestBudget:
    def test_wait_forever_exhausts_exactly(self):
        record = run_episode(
            get_site("notes"),
            get_task("notes-pin"),
            WaitForeverAgent(),
            PerturbConfig(mode="clean"),
            max_steps=17,
        )
        assert record.terminal_status == BUDGET_EXHAUSTED
        assert record.steps_used == 17
        assert all(s.outcome == "no_effect" for s in record.steps)

    def test_acting_after_termination_raises(self):
        runner = make_runner()
        runner.act(protocol.done())
        with pytest.raises(EpisodeError):
            runner.act(protocol.wait())
        with pytest.raises(EpisodeError):
            runner.view()

    def test_result_requires_termination(self):
        runner = make_runner()
        with pytest.raises(EpisodeError):
            runner.result()

    def test_terminal_action_on_last_budget_step_keeps_claim(self):
        runner = make_runner(max_steps=1)
        runner.act(protocol.done())
        assert runner.result().terminal_status == "done_claimed"


class TestMalformed:
    def test_malformed_consumes_a_step(self):
        runner = make_runner()
        payload = {"action_type": "SCROLL", "parameters": {}}
        record = runner.reject_malformed(payload)
        assert record.step == 1
        assert record.outcome == "rejected(malformed_action)"
        assert record.action == payload  # echoed verbatim for the log
        assert not runner.terminated

    def test_non_dict_payload_echoed_as_raw(self):
        runner = make_runner()
        record = runner.reject_malformed("click the button")
        assert record.action == {"raw": "click the button"}

    def test_malformed_can_exhaust_budget(self):
        runner = make_runner(max_steps=2)
        runner.reject_malformed({})
        runner.reject_malformed({})
        assert runner.terminated
        assert runner.result().terminal_status == BUDGET_EXHAUSTED


class TestFailureMode:
    def test_drop_is_masked_and_state_preserved(self):
        runner = make_runner(mode="failure", failure_p=1.0)
        digest_before = runner.state.route
        record = runner.act(protocol.click("#nav-product"))
        assert record.internal_outcome == "silently_dropped"
        assert record.outcome == "executed"
        assert runner.state.route == digest_before  # the click never landed

    def test_exempt_kinds_pass_through(self):
        runner = make_runner(mode="failure", failure_p=1.0)
        record = runner.act(protocol.wait())
        assert record.internal_outcome == "no_effect"
        record = runner.act(protocol.done())
        assert record.internal_outcome == "executed"
        assert runner.terminated

    def test_history_never_shows_the_drop(self):
        task = get_task("shop-add-deal")
        record = run_episode(
            get_site("shop"),
            task,
            OracleAgent(task),
            PerturbConfig(mode="failure", seed=3),
        )
        assert record.score == 1.0
        outcomes = {s.outcome for s in record.steps}
        assert "silently_dropped" not in outcomes
        internals = [s.internal_outcome for s in record.steps]
        if "silently_dropped" in internals:
            assert record.steps_used > len(task.golden) + 1  # retries happened

    def test_oracle_retries_recover(self):
        # at p=0.5 drops are common; the oracle must still finish clean
        task = get_task("notes-pin")
        for seed in range(5):
            record = run_episode(
                get_site("notes"),
                task,
                OracleAgent(task),
                PerturbConfig(mode="failure", seed=seed, failure_p=0.5),
            )
            assert record.score == 1.0, seed
            assert record.terminal_status == "done_claimed"


class TestPopupMode:
    def test_modal_spawns_after_state_change(self):
        runner = make_runner(mode="popup", popup_f=1.0)
        record = runner.act(protocol.click("#nav-product"))
        assert record.internal_outcome == "executed"
        assert runner.state.modal is not None
        tree = runner.view().tree
        assert tree.element_by_attr_id("modal-dismiss") is not None

    def test_no_spawn_without_digest_change(self):
        runner = make_runner(mode="popup", popup_f=1.0)
        runner.act(protocol.wait())
        assert runner.state.modal is None
        # a no-behavior click also leaves the digest alone
        runner.act(protocol.click("h1"))
        assert runner.state.modal is None

    def test_interception_masked_as_executed(self):
        runner = make_runner(mode="popup", popup_f=1.0)
        runner.act(protocol.click("#nav-product"))
        blocked = runner.act(protocol.click("#back-home"))
        assert blocked.internal_outcome == "modal_blocked"
        assert blocked.outcome == "executed"
        assert runner.state.route == "/product"

    def test_dismiss_closes_and_does_not_respawn(self):
        runner = make_runner(mode="popup", popup_f=1.0)
        runner.act(protocol.click("#nav-product"))
        record = runner.act(protocol.click("#modal-dismiss"))
        assert record.internal_outcome == "executed"
        assert runner.state.modal is None  # dismissal changes no digest

    def test_no_spawn_on_terminal_action(self):
        runner = make_runner(mode="popup", popup_f=1.0)
        runner.act(protocol.done())
        assert runner.state.modal is None
        assert runner.terminated

    def test_oracle_dismisses_every_modal(self):
        task = get_task("shop-add-deal")
        record = run_episode(
            get_site("shop"),
            task,
            OracleAgent(task),
            PerturbConfig(mode="popup", seed=2, popup_f=1.0),
        )
        assert record.score == 1.0
        dismissals = [
            s for s in record.steps
            if s.action["parameters"].get("selector") == "#modal-dismiss"
        ]
        assert len(dismissals) == 2  # one per digest-changing golden click


class TestRemapModes:
    def test_first_click_selects_without_firing(self):
        runner = make_runner(task_id="shop-checkout", mode="remap")
        runner.act(protocol.click("#nav-cart"))  # nav-cart is not in the remap set
        assert runner.state.route == "/cart"
        record = runner.act(protocol.click("#checkout-btn"))
        assert record.internal_outcome == REMAP_SELECTED
        assert record.outcome == "executed"
        assert runner.state.route == "/cart"
        marked = runner.view().tree.element_by_attr_id("checkout-btn")
        assert marked.attributes.get("data-selected") == "true"

    def test_second_click_fires_once(self):
        runner = make_runner(task_id="shop-checkout", mode="remap")
        runner.act(protocol.click("#nav-cart"))
        runner.act(protocol.click("#checkout-btn"))
        record = runner.act(protocol.click("#checkout-btn"))
        assert record.internal_outcome == "executed"
        assert runner.state.route == "/checkout"
        assert runner.state.selected_key is None

    def test_non_click_interrupts_selection(self):
        runner = make_runner(task_id="shop-checkout", mode="remap")
        runner.act(protocol.click("#nav-cart"))
        runner.act(protocol.click("#checkout-btn"))
        runner.act(protocol.wait())
        record = runner.act(protocol.click("#checkout-btn"))
        assert record.internal_outcome == REMAP_SELECTED  # selection had been reset
        assert runner.state.route == "/cart"

    def test_rejected_click_leaves_selection(self):
        runner = make_runner(task_id="shop-checkout", mode="remap")
        runner.act(protocol.click("#nav-cart"))
        runner.act(protocol.click("#checkout-btn"))
        runner.act(protocol.click("#nonexistent"))
        record = runner.act(protocol.click("#checkout-btn"))
        assert record.internal_outcome == "executed"
        assert runner.state.route == "/checkout"

    def test_banner_only_in_the_explicit_variant(self):
        explicit = make_runner(mode="remapE")
        implicit = make_runner(mode="remap")
        assert RULE_BANNER_TEXT in explicit.view().tree.root.full_text()
        assert RULE_BANNER_TEXT not in implicit.view().tree.root.full_text()

    def test_unremapped_elements_unaffected(self):
        runner = make_runner(mode="remap")
        record = runner.act(protocol.click("#nav-product"))
        assert record.internal_outcome == "executed"
        assert runner.state.route == "/product"


class TestObservations:
    def test_noise_over_encodes_only_the_wire_text(self):
        runner = make_runner(mode="noise", seed=1)
        text = runner.observation_text()
        assert "&#" in text
        # the structured view is the parsed page: no double encoding
        view = runner.view()
        assert "&#" not in view.tree.root.full_text()

    def test_clean_observation_matches_serialized_view(self):
        runner = make_runner(mode="clean")
        obs = runner.observation()
        assert obs.dom.startswith("<html>")
        assert obs.step == 0
        assert obs.remaining_budget == 100
        assert obs.history == ()

    def test_history_accumulates_wire_outcomes(self):
        runner = make_runner()
        runner.act(protocol.click("#nav-product"))
        runner.act(protocol.wait())
        obs = runner.observation()
        assert [outcome for _, outcome in obs.history] == ["executed", "no_effect"]

    def test_view_is_stable_between_actions(self):
        runner = make_runner(mode="noise", seed=8)
        a = runner.observation_text()
        b = runner.observation_text()
        assert a == b


class TestScriptedAgents:
    def test_scripted_agent_replays_then_claims_done(self):
        task = get_task("notes-pin")
        script = [protocol.click("#pin-note--n2")]
        record = run_episode(
            get_site("notes"), task, ScriptedAgent(script, name="replay"),
            PerturbConfig(mode="clean"),
        )
        assert record.agent == "replay"
        assert record.score == 1.0
        assert record.steps_used == 2

    def test_oracle_declares_done_only_after_post_condition(self):
        task = get_task("shop-add-deal")
        record = run_episode(
            get_site("shop"), task, OracleAgent(task), PerturbConfig(mode="clean")
        )
        assert record.steps[-1].action["action_type"] == "DONE"
