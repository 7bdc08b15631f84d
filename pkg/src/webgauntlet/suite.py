"""Suite planning and execution: the full (task x mode x seed) grid.

Episode seeds are mixed from (suite seed, task id, mode, seed index) and
never from the agent or from execution order, so a suite is reproducible
record-for-record regardless of parallelism.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .agents import make_agent
from .episode import DEFAULT_MAX_STEPS, RunRecord, run_episode
from .evaluator import TaskSpec
from .perturb import MODES, PerturbConfig
from .rng import mix_key
from .sitespec import SiteSpec


@dataclass(frozen=True)
class EpisodeSpec:
    task_id: str
    mode: str
    seed_index: int


def plan_suite(
    task_ids, modes=MODES, seeds_per_cell: int = 1
) -> list[EpisodeSpec]:
    """Enumerate the full episode grid in canonical order."""
    if seeds_per_cell < 1:
        raise ValueError("seeds_per_cell must be >= 1")
    unknown = [m for m in modes if m not in MODES]
    if unknown:
        raise ValueError(f"unknown modes: {unknown}")
    return [
        EpisodeSpec(task_id=task_id, mode=mode, seed_index=index)
        for task_id in task_ids
        for mode in modes
        for index in range(seeds_per_cell)
    ]


def episode_seed(suite_seed: int, task_id: str, mode: str, seed_index: int) -> int:
    return mix_key(suite_seed, task_id, mode, seed_index)


def build_config(
    mode: str, seed: int, overrides: dict | None = None
) -> PerturbConfig:
    overrides = overrides or {}
    return PerturbConfig(
        mode=mode,
        seed=seed,
        failure_p=overrides.get("failure_p", 0.35),
        popup_f=overrides.get("popup_f", 0.30),
        chaos_magnitude=overrides.get("chaos_magnitude", 0.5),
        noise_density=overrides.get("noise_density", 0.5),
    )


def _run_one(
    site: SiteSpec,
    task: TaskSpec,
    spec: EpisodeSpec,
    agent_kind: str,
    suite_seed: int,
    max_steps: int,
    overrides: dict | None,
) -> RunRecord:
    seed = episode_seed(suite_seed, spec.task_id, spec.mode, spec.seed_index)
    config = build_config(spec.mode, seed, overrides)
    agent = make_agent(
        agent_kind, task=task, seed=seed, session=f"{spec.task_id}:{spec.mode}"
    )
    return run_episode(
        site,
        task,
        agent,
        config,
        max_steps=max_steps,
        suite_seed=suite_seed,
        seed_index=spec.seed_index,
    )


def _run_one_packed(args) -> dict:
    return _run_one(*args).to_wire()


def record_sort_key(record: dict):
    mode = record.get("mode", "")
    mode_rank = MODES.index(mode) if mode in MODES else len(MODES)
    return (
        record.get("agent", ""),
        record.get("task_id", ""),
        mode_rank,
        record.get("seed_index") or 0,
    )


def run_suite(
    sites: dict[str, SiteSpec],
    tasks: dict[str, TaskSpec],
    *,
    agent_kind: str = "oracle",
    suite_seed: int = 0,
    task_ids=None,
    modes=MODES,
    seeds_per_cell: int = 1,
    max_steps: int = DEFAULT_MAX_STEPS,
    overrides: dict | None = None,
    parallel: int = 1,
) -> list[dict]:
    """Run the grid and return wire records in canonical sorted order."""
    if task_ids is None:
        task_ids = sorted(tasks)
    missing = [t for t in task_ids if t not in tasks]
    if missing:
        raise KeyError(f"unknown tasks: {missing}")
    plan = plan_suite(task_ids, modes, seeds_per_cell)
    jobs = [
        (
            sites[tasks[spec.task_id].site_id],
            tasks[spec.task_id],
            spec,
            agent_kind,
            suite_seed,
            max_steps,
            overrides,
        )
        for spec in plan
    ]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            records = list(pool.map(_run_one_packed, jobs, chunksize=8))
    else:
        records = [_run_one_packed(job) for job in jobs]
    records.sort(key=record_sort_key)
    return records


def dump_records(records: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
            handle.write("\n")


def load_records(path: str) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
