"""Bundled sites and tasks, loaded from the package's catalog directory."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

import yaml

from .evaluator import TaskSpec, load_task
from .sitespec import SiteSpec, load_site

SITE_FILES = ("shop.yaml", "notes.yaml", "calendar.yaml")


def _catalog_root():
    return resources.files(__package__) / "catalog"


@lru_cache(maxsize=1)
def bundled_sites() -> dict[str, SiteSpec]:
    sites: dict[str, SiteSpec] = {}
    root = _catalog_root()
    for name in SITE_FILES:
        spec = load_site((root / name).read_text(encoding="utf-8"))
        sites[spec.site_id] = spec
    return sites


@lru_cache(maxsize=1)
def bundled_tasks() -> dict[str, TaskSpec]:
    sites = bundled_sites()
    tasks: dict[str, TaskSpec] = {}
    tasks_dir = _catalog_root() / "tasks"
    for entry in sorted(tasks_dir.iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".yaml"):
            continue
        text = entry.read_text(encoding="utf-8")
        doc = yaml.safe_load(text)
        site = sites.get(str(doc.get("site_id", "")))
        if site is None:
            raise KeyError(f"task {entry.name}: unknown site {doc.get('site_id')!r}")
        task = load_task(text, site)
        tasks[task.task_id] = task
    return tasks


def get_site(site_id: str) -> SiteSpec:
    try:
        return bundled_sites()[site_id]
    except KeyError:
        raise KeyError(f"unknown site {site_id!r}") from None


def get_task(task_id: str) -> TaskSpec:
    try:
        return bundled_tasks()[task_id]
    except KeyError:
        raise KeyError(f"unknown task {task_id!r}") from None
