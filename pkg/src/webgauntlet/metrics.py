"""Aggregation over run records: scoreboards, retention, calibration,
and action-repetition statistics, with deterministic text reports.

All functions consume the wire-form records produced by the suite runner
(plain dicts, as loaded from a JSONL file) and are pure: identical record
sets give byte-identical reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import groupby

from .perturb import MODES

MODE_LABELS = {
    "clean": "Clean",
    "chaos": "Chaos",
    "noise": "Noise",
    "failure": "Failure",
    "popup": "Pop-Up",
    "remapE": "RemapE",
    "remap": "Remap",
}

COLUMNS = tuple(MODE_LABELS[m] for m in MODES) + ("Avg",)


@dataclass(frozen=True)
class ModeCell:
    episodes: int
    checkpoints_passed: int
    checkpoints_total: int
    mean_steps: float

    @property
    def ckpt_pct(self) -> float:
        if self.checkpoints_total == 0:
            return 0.0
        return 100.0 * self.checkpoints_passed / self.checkpoints_total


@dataclass
class SuiteSummary:
    cells: dict  # (agent, mode) -> ModeCell

    @property
    def agents(self) -> list[str]:
        return sorted({agent for agent, _ in self.cells})

    def cell(self, agent: str, mode: str) -> ModeCell | None:
        return self.cells.get((agent, mode))

    def modes_for(self, agent: str) -> list[str]:
        return [m for m in MODES if (agent, m) in self.cells]


def summarize(records: list[dict]) -> SuiteSummary:
    """Micro-averaged checkpoint percentage and mean steps per
    (agent, mode)."""
    if not records:
        raise ValueError("no records to summarize")
    grouped: dict[tuple[str, str], list[dict]] = {}
    for record in records:
        grouped.setdefault((record["agent"], record["mode"]), []).append(record)
    cells = {}
    for key, group in grouped.items():
        passed = sum(
            sum(1 for c in r["checkpoints"] if c["passed"]) for r in group
        )
        total = sum(len(r["checkpoints"]) for r in group)
        steps = sum(r["steps_used"] for r in group) / len(group)
        cells[key] = ModeCell(
            episodes=len(group),
            checkpoints_passed=passed,
            checkpoints_total=total,
            mean_steps=steps,
        )
    return SuiteSummary(cells=cells)


@dataclass(frozen=True)
class RetentionCell:
    ratio: float | None
    step_diff: float
    undefined: bool = False


@dataclass
class RetentionReport:
    cells: dict  # (agent, mode) -> RetentionCell


def retention(summary: SuiteSummary) -> RetentionReport:
    """Each mode's checkpoint share of the clean run, and the extra steps
    it cost, per agent."""
    cells = {}
    for agent in summary.agents:
        clean = summary.cell(agent, "clean")
        if clean is None:
            raise ValueError(f"agent {agent!r} has no clean-mode records")
        for mode in summary.modes_for(agent):
            cell = summary.cell(agent, mode)
            diff = cell.mean_steps - clean.mean_steps
            if clean.ckpt_pct == 0.0:
                cells[(agent, mode)] = RetentionCell(
                    ratio=None, step_diff=diff, undefined=True
                )
            else:
                cells[(agent, mode)] = RetentionCell(
                    ratio=cell.ckpt_pct / clean.ckpt_pct, step_diff=diff
                )
    return RetentionReport(cells=cells)


@dataclass(frozen=True)
class CalibrationCell:
    episodes: int
    claimed: int
    actual: int
    ratio: float | None
    undefined: bool = False


@dataclass
class CalibrationReport:
    cells: dict  # (agent, mode) -> CalibrationCell


def calibration(records: list[dict]) -> CalibrationReport:
    """Claimed success (the agent said DONE) against actual success
    (every checkpoint passed), per (agent, mode)."""
    grouped: dict[tuple[str, str], list[dict]] = {}
    for record in records:
        grouped.setdefault((record["agent"], record["mode"]), []).append(record)
    cells = {}
    for key, group in grouped.items():
        claimed = sum(1 for r in group if r["terminal_status"] == "done_claimed")
        actual = sum(
            1 for r in group if all(c["passed"] for c in r["checkpoints"])
        )
        if actual == 0:
            cells[key] = CalibrationCell(
                episodes=len(group),
                claimed=claimed,
                actual=0,
                ratio=None,
                undefined=True,
            )
        else:
            cells[key] = CalibrationCell(
                episodes=len(group),
                claimed=claimed,
                actual=actual,
                ratio=claimed / actual,
            )
    return CalibrationReport(cells=cells)


@dataclass(frozen=True)
class RepetitionCell:
    trajectories: int
    with_repeat_pct: float
    total_repeats: int
    max_run: int


@dataclass
class RepetitionReport:
    cells: dict  # (agent, mode) -> RepetitionCell


def _action_key(step: dict) -> str:
    action = step.get("action", {})
    return json.dumps(
        {
            "action_type": action.get("action_type"),
            "parameters": action.get("parameters", {}),
        },
        sort_keys=True,
    )


def repetition(records: list[dict]) -> RepetitionReport:
    """Consecutive identical actions (reasoning excluded) per trajectory:
    share of trajectories containing a run of length >= 2, total excess
    repeats, and the longest run."""
    grouped: dict[tuple[str, str], list[dict]] = {}
    for record in records:
        grouped.setdefault((record["agent"], record["mode"]), []).append(record)
    cells = {}
    for key, group in grouped.items():
        with_repeat = 0
        total_repeats = 0
        max_run = 0
        for record in group:
            keys = [_action_key(step) for step in record["steps"]]
            longest = 0
            for _, run in groupby(keys):
                length = sum(1 for _ in run)
                longest = max(longest, length)
                if length >= 2:
                    total_repeats += length - 1
            if longest >= 2:
                with_repeat += 1
            max_run = max(max_run, longest)
        pct = 100.0 * with_repeat / len(group) if group else 0.0
        cells[key] = RepetitionCell(
            trajectories=len(group),
            with_repeat_pct=pct,
            total_repeats=total_repeats,
            max_run=max_run,
        )
    return RepetitionReport(cells=cells)


# --- report emission --------------------------------------------------------


def _fmt_value(value) -> str:
    if value is None:
        return "n/a"
    return f"{value:.1f}"


def _row_values(per_mode: dict, agent: str) -> list[str]:
    """Values for the seven mode columns plus the unweighted average.
    A missing cell is blank; an undefined value (None) prints as n/a and
    stays out of the average."""
    out = []
    defined = []
    for mode in MODES:
        key = (agent, mode)
        if key not in per_mode:
            out.append("")
            continue
        value = per_mode[key]
        out.append(_fmt_value(value))
        if value is not None:
            defined.append(value)
    out.append(_fmt_value(sum(defined) / len(defined)) if defined else "")
    return out


def _emit_section(title: str, metric_rows: list, fmt: str, out: list[str]) -> None:
    """metric_rows: list of (row_label, {(agent, mode): value})."""
    agents = sorted(
        {agent for _, values in metric_rows for agent, _ in values}
    )
    if fmt == "csv":
        out.append(f"# {title}")
        out.append(",".join(["metric", "agent", *COLUMNS]))
        for label, values in metric_rows:
            for agent in agents:
                out.append(",".join([label, agent, *_row_values(values, agent)]))
        out.append("")
        return
    out.append(f"== {title} ==")
    width = max([len("agent / metric")] + [
        len(f"{agent}: {label}") for label, _ in metric_rows for agent in agents
    ] or [12])
    header = "agent / metric".ljust(width) + "".join(c.rjust(9) for c in COLUMNS)
    out.append(header)
    for label, values in metric_rows:
        for agent in agents:
            cells = _row_values(values, agent)
            out.append(
                f"{agent}: {label}".ljust(width)
                + "".join(c.rjust(9) for c in cells)
            )
    out.append("")


def emit_report(
    summary: SuiteSummary | None = None,
    retention_report: RetentionReport | None = None,
    calibration_report: CalibrationReport | None = None,
    repetition_report: RepetitionReport | None = None,
    fmt: str = "table",
) -> str:
    if fmt not in ("table", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    out: list[str] = []
    if summary is not None:
        rows = [
            ("ckpt%", {k: c.ckpt_pct for k, c in summary.cells.items()}),
            ("steps", {k: c.mean_steps for k, c in summary.cells.items()}),
        ]
        _emit_section("Scoreboard", rows, fmt, out)
    if retention_report is not None:
        rows = [
            (
                "retention",
                {
                    k: (None if c.undefined else c.ratio)
                    for k, c in retention_report.cells.items()
                },
            ),
            ("step-diff", {k: c.step_diff for k, c in retention_report.cells.items()}),
        ]
        _emit_section("Retention vs clean", rows, fmt, out)
    if calibration_report is not None:
        rows = [
            ("claimed", {k: float(c.claimed) for k, c in calibration_report.cells.items()}),
            ("actual", {k: float(c.actual) for k, c in calibration_report.cells.items()}),
            (
                "ratio",
                {
                    k: (None if c.undefined else c.ratio)
                    for k, c in calibration_report.cells.items()
                },
            ),
        ]
        _emit_section("Claimed vs actual success", rows, fmt, out)
    if repetition_report is not None:
        rows = [
            ("repeat%", {k: c.with_repeat_pct for k, c in repetition_report.cells.items()}),
            (
                "repeats",
                {k: float(c.total_repeats) for k, c in repetition_report.cells.items()},
            ),
            ("max-run", {k: float(c.max_run) for k, c in repetition_report.cells.items()}),
        ]
        _emit_section("Action repetition", rows, fmt, out)
    return "\n".join(out)
