"""Canonical environment state, deterministic rendering, and transitions.

The kernel owns ground truth. Rendering is a pure function of
(site spec, state) and returns both a document tree and a provenance map
from node ids to the interactive meaning of each node (element_key, bound
row, form field, modal membership). Actions resolve against whatever tree
the agent saw — usually a perturbed one — and execute here against
canonical state through that provenance.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

from . import protocol
from .dom import DomTree, TreeBuilder, renumber
from .perturb import ModalDescriptor
from .selectors import SelectorError, parse_selector, query
from .sitespec import (
    CountBadge,
    DeleteEntity,
    EntityList,
    EntitySelector,
    EntitySchema,
    FilterClause,
    FocusInput,
    FormComponent,
    Navigate,
    NoOp,
    SetField,
    SiteSpec,
    SiteValidationError,
    Static,
    SubmitForm,
    ToggleFlag,
    Trigger,
    ValueSource,
)

# Internal outcomes. The first two are also agent-visible; the rest are
# reported as "executed" so injections never leak through outcome strings.
# (The double-click gate's selection state shows up as a DOM marker, which
# is the only channel an agent is supposed to learn the rule from.)
EXECUTED = protocol.EXECUTED
NO_EFFECT = protocol.NO_EFFECT
SILENTLY_DROPPED = "silently_dropped"
MODAL_BLOCKED = "modal_blocked"
REMAP_SELECTED = "remap_selected"


def reported_outcome(internal: str) -> str:
    if internal in (SILENTLY_DROPPED, MODAL_BLOCKED, REMAP_SELECTED):
        return EXECUTED
    return internal


@dataclass
class EntityRecord:
    type_name: str
    record_id: str
    fields: dict[str, object]

    def clone(self) -> EntityRecord:
        return EntityRecord(self.type_name, self.record_id, dict(self.fields))


@dataclass
class EnvState:
    route: str
    store: list[EntityRecord]
    form_buffer: dict[tuple[str, str], str] = field(default_factory=dict)
    focused_field: tuple[str, str] | None = None
    selected_key: str | None = None
    modal: ModalDescriptor | None = None
    replace_pending: bool = False
    step: int = 0
    terminated: bool = False
    terminal_status: str | None = None

    def clone(self) -> EnvState:
        return EnvState(
            route=self.route,
            store=[record.clone() for record in self.store],
            form_buffer=dict(self.form_buffer),
            focused_field=self.focused_field,
            selected_key=self.selected_key,
            modal=self.modal,
            replace_pending=self.replace_pending,
            step=self.step,
            terminated=self.terminated,
            terminal_status=self.terminal_status,
        )

    def records(self, type_name: str) -> list[EntityRecord]:
        return [r for r in self.store if r.type_name == type_name]


def canonical_digest(state: EnvState) -> str:
    """Digest of evaluator-visible canonical state.

    Selection markers and modals are perturbation surface, not ground
    truth, so they are excluded: the same action sequence must digest
    identically whether or not a pop-up was on screen.
    """
    payload = {
        "route": state.route,
        "store": sorted(
            (r.type_name, r.record_id, sorted(r.fields.items()))
            for r in state.store
        ),
        "form_buffer": sorted(
            (f"{form}/{field_name}", value)
            for (form, field_name), value in state.form_buffer.items()
        ),
        "focused": list(state.focused_field) if state.focused_field else None,
        "replace_pending": state.replace_pending,
        "terminated": state.terminated,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# --- reset ------------------------------------------------------------------


def reset(spec: SiteSpec, overlay: list[dict] | None = None) -> EnvState:
    """Initial state: root route, seeded store overlaid with task records."""
    records: dict[tuple[str, str], EntityRecord] = {}
    for raw in spec.initial_data:
        record = _build_record(spec, raw["type"], raw["id"], raw["fields"])
        records[(record.type_name, record.record_id)] = record
    for raw in overlay or []:
        raw = dict(raw)
        type_name = str(raw.pop("type", ""))
        record_id = str(raw.pop("id", ""))
        if type_name not in spec.entity_schemas:
            raise SiteValidationError(
                [f"overlay record {record_id!r}: unknown entity type {type_name!r}"]
            )
        record = _build_record(spec, type_name, record_id, raw)
        records[(record.type_name, record.record_id)] = record
    return EnvState(route="/", store=list(records.values()))


def _build_record(
    spec: SiteSpec, type_name: str, record_id: str, fields: dict
) -> EntityRecord:
    schema = spec.entity_schemas[type_name]
    values: dict[str, object] = {}
    for name in schema.fields:
        if name in fields:
            value = fields[name]
            if not schema.check_value(name, value):
                raise SiteValidationError(
                    [f"record {type_name}/{record_id}: field {name!r} has wrong kind"]
                )
            values[name] = value
        else:
            values[name] = schema.default_value(name)
    unknown = set(fields) - set(schema.fields)
    if unknown:
        raise SiteValidationError(
            [f"record {type_name}/{record_id}: unknown field {sorted(unknown)[0]!r}"]
        )
    return EntityRecord(type_name=type_name, record_id=record_id, fields=values)


def next_record_id(state: EnvState, type_name: str) -> str:
    pattern = re.compile(rf"^{re.escape(type_name)}-(\d+)$")
    highest = 0
    for record in state.records(type_name):
        match = pattern.match(record.record_id)
        if match:
            highest = max(highest, int(match.group(1)))
    return f"{type_name}-{highest + 1}"


# --- rendering --------------------------------------------------------------


@dataclass(frozen=True)
class Provenance:
    """What a rendered node means to the kernel."""

    element_key: str | None = None
    row_id: str | None = None
    form_field: tuple[str, str] | None = None
    in_modal: bool = False


def _fmt(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")


def _interpolate(template: str, record: EntityRecord) -> str:
    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name == "id":
            return record.record_id
        return _fmt(record.fields.get(name, ""))

    return _PLACEHOLDER_RE.sub(sub, template)


def _filter_records(
    state: EnvState,
    entity_type: str,
    clauses: tuple[FilterClause, ...],
) -> list[EntityRecord]:
    out = []
    for record in state.records(entity_type):
        keep = True
        for clause in clauses:
            actual = record.fields.get(clause.field_name)
            if clause.op == "equals":
                keep = actual == clause.value
            elif clause.op == "equals_form":
                keep = _fmt(actual) == state.form_buffer.get(
                    (clause.form, clause.form_field), ""
                )
            elif clause.op == "contains_form":
                needle = state.form_buffer.get((clause.form, clause.form_field), "")
                keep = needle.lower() in _fmt(actual).lower()
            if not keep:
                break
        if keep:
            out.append(record)
    return out


def _plain_filter(
    state: EnvState, entity_type: str, conditions: tuple[tuple[str, object], ...]
) -> list[EntityRecord]:
    return [
        record
        for record in state.records(entity_type)
        if all(record.fields.get(name) == value for name, value in conditions)
    ]


def render(spec: SiteSpec, state: EnvState) -> tuple[DomTree, dict[int, Provenance]]:
    """Pure render of the current page. Equal inputs give byte-identical
    serializations; every interactive node gets a provenance entry."""
    page = spec.pages[state.route]
    builder = TreeBuilder()
    noted: list = []  # (node, provenance) pairs; node ids are final only after renumber

    def note(node, **kwargs) -> None:
        noted.append((node, Provenance(**kwargs)))

    def render_static(component: Static):
        children = []
        if component.text:
            children.append(builder.text(component.text))
        children.extend(render_static(child) for child in component.children)
        return builder.element(component.tag, dict(component.attrs), children)

    def trigger_attrs(element_key: str, elem_id: str, classes=()) -> dict[str, str]:
        attrs = {"id": elem_id}
        if classes:
            attrs["class"] = " ".join(classes)
        if state.selected_key == element_key:
            attrs["data-selected"] = "true"
        return attrs

    def render_component(component):
        if isinstance(component, Static):
            return [render_static(component)]
        if isinstance(component, Trigger):
            node = builder.element(
                component.tag,
                trigger_attrs(component.element_key, component.elem_id, component.classes),
                [builder.text(component.text)],
            )
            note(node, element_key=component.element_key)
            return [node]
        if isinstance(component, CountBadge):
            n = len(_plain_filter(state, component.entity_type, component.filter))
            node = builder.element(
                "span",
                {
                    "id": component.elem_id,
                    "class": "count-badge",
                    "data-count": str(n),
                },
                [builder.text(component.template.replace("{n}", str(n)))],
            )
            return [node]
        if isinstance(component, EntityList):
            return [render_list(component)]
        if isinstance(component, FormComponent):
            return [render_form(component)]
        raise TypeError(f"unknown component {component!r}")

    def render_list(component: EntityList):
        records = _filter_records(state, component.entity_type, component.filters)
        if component.sort:
            sort_field = component.sort.lstrip("-")
            records = sorted(
                records,
                key=lambda r: (r.fields.get(sort_field), r.record_id),
                reverse=component.sort.startswith("-"),
            )
        children = []
        if not records:
            children.append(
                builder.element(
                    "div",
                    {"class": "empty-state"},
                    [builder.text(component.empty_text or "Nothing here yet.")],
                )
            )
        for record in records:
            row_children = [
                builder.element(
                    "span",
                    {"class": "row-text"},
                    [builder.text(_interpolate(component.row_text, record))],
                )
            ]
            for trig in component.row_triggers:
                attrs = {
                    "id": f"{trig.element_key}--{record.record_id}",
                    "class": " ".join(trig.classes) if trig.classes else "row-action",
                }
                button = builder.element(
                    "button", attrs, [builder.text(trig.text)]
                )
                note(
                    button,
                    element_key=trig.element_key,
                    row_id=record.record_id,
                )
                row_children.append(button)
            attrs = {
                "id": f"{component.elem_id}--{record.record_id}",
                "class": "row",
            }
            for name, template in component.row_attrs:
                attrs[name] = _interpolate(template, record)
            row = builder.element("div", attrs, row_children)
            note(row, row_id=record.record_id)
            children.append(row)
        return builder.element(
            "div", {"id": component.elem_id, "class": "entity-list"}, children
        )

    def render_form(component: FormComponent):
        children = []
        for form_field in component.fields:
            if form_field.label:
                children.append(
                    builder.element(
                        "label", {}, [builder.text(form_field.label)]
                    )
                )
            field_key = (component.form_id, form_field.name)
            attrs = {
                "id": form_field.elem_id or f"{component.form_id}--{form_field.name}",
                "name": form_field.name,
                "value": state.form_buffer.get(field_key, ""),
            }
            if form_field.placeholder:
                attrs["placeholder"] = form_field.placeholder
            if state.focused_field == field_key:
                attrs["data-focused"] = "true"
            node = builder.element("input", attrs)
            note(
                node,
                element_key=form_field.element_key,
                form_field=field_key,
            )
            children.append(node)
        if component.submit and component.submit.render:
            submit_id = component.submit.elem_id or component.submit.element_key
            button = builder.element(
                "button",
                trigger_attrs(component.submit.element_key, submit_id, ("submit",)),
                [builder.text(component.submit.text)],
            )
            note(button, element_key=component.submit.element_key)
            children.append(button)
        return builder.element("form", {"id": component.form_id}, children)

    body_children = []
    for component in page.components:
        body_children.extend(render_component(component))

    if state.modal is not None:
        prompt = builder.element(
            "p", {"class": "modal-prompt"}, [builder.text(state.modal.prompt)]
        )
        dismiss = builder.element(
            "button",
            {"id": "modal-dismiss", "class": "modal-dismiss"},
            [builder.text(state.modal.dismiss_label)],
        )
        note(prompt, in_modal=True)
        note(
            dismiss,
            element_key=state.modal.dismiss_key,
            in_modal=True,
        )
        overlay = builder.element(
            "section", {"id": "modal", "class": "modal"}, [prompt, dismiss]
        )
        note(overlay, in_modal=True)
        body_children.append(overlay)

    body = builder.element(
        "body",
        {"data-route": state.route, "data-site": spec.site_id},
        body_children,
    )
    root = builder.element("html", {}, [body])
    renumber(root)
    tree = DomTree(root)
    provenance = {node.node_id: entry for node, entry in noted}
    return tree, provenance


# --- resolution -------------------------------------------------------------


@dataclass(frozen=True)
class Resolution:
    """Outcome of selector resolution for CLICK/FILL."""

    rejected_reason: str | None = None
    node_id: int | None = None
    provenance: Provenance | None = None

    @property
    def ok(self) -> bool:
        return self.rejected_reason is None


NO_RESOLUTION = Resolution()


def resolve(
    tree: DomTree,
    provenance: dict[int, Provenance],
    message: protocol.AgentMessage,
) -> Resolution:
    """Evaluate the action's selector against the agent-visible tree and
    map the first document-order match back to canonical meaning."""
    if message.action_type not in (protocol.CLICK, protocol.FILL):
        return NO_RESOLUTION
    try:
        selector = parse_selector(message.selector)
    except SelectorError:
        return Resolution(rejected_reason="malformed_action")
    matches = query(tree, selector)
    if not matches:
        return Resolution(rejected_reason="selector_no_match")
    node_id = matches[0]
    return Resolution(
        node_id=node_id, provenance=provenance.get(node_id) or Provenance()
    )


# --- transition -------------------------------------------------------------


def transition(
    spec: SiteSpec,
    state: EnvState,
    message: protocol.AgentMessage,
    resolution: Resolution = NO_RESOLUTION,
) -> tuple[EnvState, str]:
    """Apply one agent action to canonical state.

    Returns (new state, internal outcome). Pure: no clocks, no randomness.
    The step counter increments for every processed action, including
    rejections and terminal actions.
    """
    out = state.clone()
    out.step += 1
    kind = message.action_type

    if kind == protocol.DONE:
        out.terminated = True
        out.terminal_status = "done_claimed"
        return out, EXECUTED
    if kind == protocol.FAIL:
        out.terminated = True
        out.terminal_status = "fail_claimed"
        return out, EXECUTED
    if kind == protocol.WAIT:
        return out, NO_EFFECT

    if not resolution.ok:
        return out, f"rejected({resolution.rejected_reason})"

    if out.modal is not None:
        return _transition_under_modal(spec, out, message, resolution)

    if kind == protocol.CLICK:
        return _apply_click(spec, out, resolution)
    if kind == protocol.FILL:
        return _apply_fill(out, message, resolution)
    if kind == protocol.TYPE:
        return _apply_type(out, message)
    if kind == protocol.HOTKEY:
        return _apply_hotkey(spec, out, message)
    return out, "rejected(malformed_action)"


def consume_step(state: EnvState, outcome: str) -> tuple[EnvState, str]:
    """Advance the step counter without touching anything else — used for
    malformed messages and for remap first-clicks, which are consumed by
    the gate before reaching transition."""
    out = state.clone()
    out.step += 1
    return out, outcome


def _transition_under_modal(
    spec: SiteSpec,
    out: EnvState,
    message: protocol.AgentMessage,
    resolution: Resolution,
) -> tuple[EnvState, str]:
    """An open modal intercepts everything not aimed at the modal itself."""
    prov = resolution.provenance
    if message.action_type == protocol.CLICK and prov is not None and prov.in_modal:
        if prov.element_key == out.modal.dismiss_key:
            out.modal = None
            return out, EXECUTED
        return out, NO_EFFECT
    return out, MODAL_BLOCKED


def _apply_click(
    spec: SiteSpec, out: EnvState, resolution: Resolution
) -> tuple[EnvState, str]:
    prov = resolution.provenance or Provenance()
    if prov.element_key is None:
        return out, NO_EFFECT
    effect = spec.effect_for(prov.element_key)
    if effect is None:
        return out, NO_EFFECT
    _apply_effect(spec, out, effect, prov.row_id)
    return out, EXECUTED


def _apply_fill(
    out: EnvState, message: protocol.AgentMessage, resolution: Resolution
) -> tuple[EnvState, str]:
    prov = resolution.provenance or Provenance()
    if prov.form_field is None:
        return out, "rejected(invalid_target)"
    out.form_buffer[prov.form_field] = message.text
    out.focused_field = prov.form_field
    out.replace_pending = False
    return out, EXECUTED


def _apply_type(out: EnvState, message: protocol.AgentMessage) -> tuple[EnvState, str]:
    if out.focused_field is None:
        return out, "rejected(invalid_target)"
    current = out.form_buffer.get(out.focused_field, "")
    if out.replace_pending:
        out.form_buffer[out.focused_field] = message.text
        out.replace_pending = False
    else:
        out.form_buffer[out.focused_field] = current + message.text
    return out, EXECUTED


def _apply_hotkey(
    spec: SiteSpec, out: EnvState, message: protocol.AgentMessage
) -> tuple[EnvState, str]:
    chord = message.keys.strip().lower().replace(" ", "")
    if chord in ("ctrl+a", "control+a"):
        if out.focused_field is None:
            return out, NO_EFFECT
        out.replace_pending = True
        return out, EXECUTED
    if chord == "enter":
        if out.focused_field is None:
            return out, NO_EFFECT
        form_id = out.focused_field[0]
        submit_key = _submit_key_for_form(spec, out.route, form_id)
        if submit_key is None:
            return out, NO_EFFECT
        effect = spec.effect_for(submit_key)
        if effect is None:
            return out, NO_EFFECT
        _apply_effect(spec, out, effect, row_id=None)
        return out, EXECUTED
    return out, NO_EFFECT


def _submit_key_for_form(spec: SiteSpec, route: str, form_id: str) -> str | None:
    page = spec.pages.get(route)
    if page is None:
        return None
    for component in page.components:
        if isinstance(component, FormComponent) and component.form_id == form_id:
            if component.submit is not None:
                return component.submit.element_key
    return None


# --- effects ----------------------------------------------------------------


def _select_records(
    state: EnvState, selector: EntitySelector, row_id: str | None
) -> list[EntityRecord]:
    records = state.records(selector.entity_type)
    if selector.row:
        return [r for r in records if r.record_id == row_id]
    if selector.record_id is not None:
        return [r for r in records if r.record_id == selector.record_id]
    if selector.filter:
        return [
            r
            for r in records
            if all(r.fields.get(name) == value for name, value in selector.filter)
        ]
    return records


def _coerce(schema: EntitySchema, field_name: str, value: object) -> object:
    kind = schema.fields[field_name].kind
    if kind == "integer":
        if isinstance(value, bool):
            return int(value)
        if isinstance(value, int):
            return value
        try:
            return int(str(value).strip())
        except ValueError:
            return 0
    if kind == "boolean":
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("true", "1", "yes")
    return _fmt(value)


def _resolve_source(
    state: EnvState, source: ValueSource, row: EntityRecord | None
) -> object:
    if source.kind == "literal":
        return source.literal
    if source.kind == "form":
        return state.form_buffer.get((source.form, source.field_name), "")
    if source.kind == "row":
        if row is None:
            return ""
        if source.field_name == "id":
            return row.record_id
        return row.fields.get(source.field_name, "")
    raise ValueError(f"unknown value source {source.kind!r}")


def _apply_effect(
    spec: SiteSpec, out: EnvState, effect, row_id: str | None
) -> None:
    if isinstance(effect, Navigate):
        out.route = effect.route
        out.form_buffer.clear()
        out.focused_field = None
        out.replace_pending = False
        return
    if isinstance(effect, SubmitForm):
        _apply_submit(spec, out, effect, row_id)
        return
    if isinstance(effect, SetField):
        schema = spec.entity_schemas[effect.selector.entity_type]
        row = _row_record(out, effect.selector.entity_type, row_id)
        value = _coerce(
            schema, effect.field_name, _resolve_source(out, effect.value, row)
        )
        for record in _select_records(out, effect.selector, row_id):
            record.fields[effect.field_name] = value
        return
    if isinstance(effect, DeleteEntity):
        doomed = {
            id(record) for record in _select_records(out, effect.selector, row_id)
        }
        out.store = [record for record in out.store if id(record) not in doomed]
        return
    if isinstance(effect, ToggleFlag):
        for record in _select_records(out, effect.selector, row_id):
            record.fields[effect.field_name] = not bool(
                record.fields.get(effect.field_name)
            )
        return
    if isinstance(effect, FocusInput):
        out.focused_field = (effect.form_id, effect.field_name)
        return
    if isinstance(effect, NoOp):
        return
    raise TypeError(f"unknown effect {effect!r}")


def _row_record(
    state: EnvState, entity_type: str, row_id: str | None
) -> EntityRecord | None:
    if row_id is None:
        return None
    for record in state.records(entity_type):
        if record.record_id == row_id:
            return record
    return None


def _apply_submit(
    spec: SiteSpec, out: EnvState, effect: SubmitForm, row_id: str | None
) -> None:
    schema = spec.entity_schemas[effect.entity_type]
    row = _row_record(out, effect.entity_type, row_id)
    if row is None and row_id is not None:
        # row-sourced submits may bind rows of a different type (e.g. a
        # product row creating a cart item); look the row up by id anywhere
        for record in out.store:
            if record.record_id == row_id:
                row = record
                break

    if effect.op == "create":
        values: dict[str, object] = {}
        for name in schema.fields:
            if name in effect.field_sources:
                raw = _resolve_source(out, effect.field_sources[name], row)
                values[name] = _coerce(schema, name, raw)
            else:
                values[name] = schema.default_value(name)
        record = EntityRecord(
            type_name=effect.entity_type,
            record_id=next_record_id(out, effect.entity_type),
            fields=values,
        )
        out.store.append(record)
    else:  # update
        for record in _select_records(out, effect.target, row_id):
            for name, source in effect.field_sources.items():
                record.fields[name] = _coerce(
                    schema, name, _resolve_source(out, source, row)
                )

    cleared_forms = {effect.form_id} if effect.form_id else set()
    for source in effect.field_sources.values():
        if source.kind == "form":
            cleared_forms.add(source.form)
    if cleared_forms:
        out.form_buffer = {
            key: value
            for key, value in out.form_buffer.items()
            if key[0] not in cleared_forms
        }
        if out.focused_field is not None and out.focused_field[0] in cleared_forms:
            out.focused_field = None
        out.replace_pending = False


# --- abstract replay --------------------------------------------------------


def golden_message(item: dict) -> protocol.AgentMessage:
    """Translate one abstract golden entry into a protocol message using
    its authored concrete selector."""
    if "click" in item:
        return protocol.click(item.get("selector") or f"#{item['click']}")
    if "fill" in item:
        form_id, field_name, text = item["fill"]
        selector = item.get("selector") or f"#{form_id}--{field_name}"
        return protocol.fill(selector, text)
    if "type" in item:
        return protocol.type_text(item["type"])
    if "hotkey" in item:
        return protocol.hotkey(item["hotkey"])
    raise ValueError(f"unknown golden entry {item!r}")


def apply_abstract(
    spec: SiteSpec, state: EnvState, item: dict
) -> tuple[EnvState, str]:
    """Replay one golden entry directly by element_key, bypassing the DOM.

    Used for CI solvability checks and ground-truth comparisons; semantics
    are the kernel's own transition under a synthetic resolution.
    """
    if "click" in item:
        resolution = Resolution(
            provenance=Provenance(
                element_key=item["click"], row_id=item.get("row")
            )
        )
        return transition(spec, state, protocol.click(""), resolution)
    if "fill" in item:
        form_id, field_name, text = item["fill"]
        resolution = Resolution(
            provenance=Provenance(form_field=(form_id, field_name))
        )
        return transition(spec, state, protocol.fill("", text), resolution)
    if "type" in item:
        return transition(spec, state, protocol.type_text(item["type"]))
    if "hotkey" in item:
        return transition(spec, state, protocol.hotkey(item["hotkey"]))
    raise ValueError(f"unknown golden entry {item!r}")
