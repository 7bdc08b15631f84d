"""Site-definition model: schemas, page templates, effects, and the loader.

A site is defined declaratively in one YAML document: entity schemas,
pages built from components (static elements, triggers, entity-bound
lists, forms, count badges), a behaviors map from element_key to effect,
initial data, and an optional remap_set naming the triggers eligible for
semantic remapping. ``load_site`` validates everything and reports all
violations together. See ``docs/site-format.md`` for the grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import yaml

FIELD_KINDS = ("string", "integer", "boolean", "reference")

_PY_KINDS = {"string": str, "integer": int, "boolean": bool, "reference": str}


class SiteValidationError(ValueError):
    """One or more site-definition violations, collected and reported together."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


# --- schemas and records ----------------------------------------------------


@dataclass(frozen=True)
class FieldSchema:
    name: str
    kind: str  # one of FIELD_KINDS


@dataclass(frozen=True)
class EntitySchema:
    type_name: str
    fields: dict[str, FieldSchema]

    def default_value(self, name: str):
        kind = self.fields[name].kind
        return {"string": "", "integer": 0, "boolean": False, "reference": ""}[kind]

    def check_value(self, name: str, value) -> bool:
        expected = _PY_KINDS[self.fields[name].kind]
        if expected is int:
            return isinstance(value, int) and not isinstance(value, bool)
        return isinstance(value, expected)


# --- value sources and entity selectors ------------------------------------


@dataclass(frozen=True)
class ValueSource:
    """Where an effect gets a value: a literal, a form buffer, or the bound row."""

    kind: str  # "literal" | "form" | "row"
    literal: object = None
    form: str | None = None
    field_name: str | None = None


@dataclass(frozen=True)
class EntitySelector:
    """Picks store records: by id, by field filter, the bound row, or all."""

    entity_type: str
    record_id: str | None = None
    filter: tuple[tuple[str, object], ...] = ()
    row: bool = False
    all_records: bool = False


# --- effects ----------------------------------------------------------------


@dataclass(frozen=True)
class Navigate:
    route: str


@dataclass(frozen=True)
class SubmitForm:
    entity_type: str
    op: str  # "create" | "update"
    field_sources: dict[str, ValueSource]
    form_id: str | None = None
    target: EntitySelector | None = None  # required for update


@dataclass(frozen=True)
class SetField:
    selector: EntitySelector
    field_name: str
    value: ValueSource


@dataclass(frozen=True)
class DeleteEntity:
    selector: EntitySelector


@dataclass(frozen=True)
class ToggleFlag:
    selector: EntitySelector
    field_name: str


@dataclass(frozen=True)
class FocusInput:
    form_id: str
    field_name: str


@dataclass(frozen=True)
class NoOp:
    pass


Effect = Navigate | SubmitForm | SetField | DeleteEntity | ToggleFlag | FocusInput | NoOp


# --- page components --------------------------------------------------------


@dataclass(frozen=True)
class Static:
    tag: str
    text: str = ""
    attrs: tuple[tuple[str, str], ...] = ()
    children: tuple[Static, ...] = ()


@dataclass(frozen=True)
class Trigger:
    element_key: str
    elem_id: str
    text: str
    tag: str = "button"
    classes: tuple[str, ...] = ()


@dataclass(frozen=True)
class CountBadge:
    elem_id: str
    entity_type: str
    filter: tuple[tuple[str, object], ...] = ()
    template: str = "{n}"


@dataclass(frozen=True)
class RowTrigger:
    element_key: str
    text: str
    classes: tuple[str, ...] = ()


@dataclass(frozen=True)
class FilterClause:
    """One filter condition on an entity-bound list."""

    field_name: str
    op: str  # "equals" | "equals_form" | "contains_form"
    value: object = None
    form: str | None = None
    form_field: str | None = None


@dataclass(frozen=True)
class EntityList:
    elem_id: str
    entity_type: str
    filters: tuple[FilterClause, ...] = ()
    sort: str | None = None  # field name, "-field" for descending
    empty_text: str = ""
    row_text: str = ""
    row_attrs: tuple[tuple[str, str], ...] = ()
    row_triggers: tuple[RowTrigger, ...] = ()


@dataclass(frozen=True)
class FormField:
    name: str
    label: str = ""
    placeholder: str = ""
    elem_id: str | None = None  # defaults to "<form>--<name>"
    element_key: str | None = None  # optional click-to-focus behavior


@dataclass(frozen=True)
class FormSubmit:
    element_key: str
    text: str = ""
    elem_id: str | None = None
    render: bool = True


@dataclass(frozen=True)
class FormComponent:
    form_id: str
    fields: tuple[FormField, ...]
    submit: FormSubmit | None = None


Component = Static | Trigger | CountBadge | EntityList | FormComponent


@dataclass(frozen=True)
class PageTemplate:
    route: str
    title: str
    components: tuple[Component, ...]


@dataclass(frozen=True)
class SiteSpec:
    site_id: str
    pages: dict[str, PageTemplate]
    entity_schemas: dict[str, EntitySchema]
    behaviors: dict[str, Effect]
    initial_data: list[dict]
    remap_set: frozenset[str]

    def effect_for(self, element_key: str) -> Effect | None:
        return self.behaviors.get(element_key)


# --- YAML parsing -----------------------------------------------------------


def _parse_value_source(raw, errors: list[str], where: str) -> ValueSource:
    if not isinstance(raw, dict) or len(raw) != 1:
        errors.append(f"{where}: value source must be one of literal/form/row")
        return ValueSource(kind="literal", literal="")
    (key, value), = raw.items()
    if key == "literal":
        return ValueSource(kind="literal", literal=value)
    if key == "form":
        if not (isinstance(value, list) and len(value) == 2):
            errors.append(f"{where}: form source needs [form_id, field]")
            return ValueSource(kind="literal", literal="")
        return ValueSource(kind="form", form=str(value[0]), field_name=str(value[1]))
    if key == "row":
        return ValueSource(kind="row", field_name=str(value))
    errors.append(f"{where}: unknown value source {key!r}")
    return ValueSource(kind="literal", literal="")


def _parse_entity_selector(raw, errors: list[str], where: str) -> EntitySelector:
    if not isinstance(raw, dict) or "entity" not in raw:
        errors.append(f"{where}: entity selector needs an entity type")
        return EntitySelector(entity_type="")
    entity = str(raw["entity"])
    select = raw.get("select", {"all": True})
    if not isinstance(select, dict) or len(select) != 1:
        errors.append(f"{where}: select must be one of id/filter/row/all")
        return EntitySelector(entity_type=entity, all_records=True)
    (key, value), = select.items()
    if key == "id":
        return EntitySelector(entity_type=entity, record_id=str(value))
    if key == "filter":
        return EntitySelector(
            entity_type=entity, filter=tuple(sorted((value or {}).items()))
        )
    if key == "row":
        return EntitySelector(entity_type=entity, row=True)
    if key == "all":
        return EntitySelector(entity_type=entity, all_records=True)
    errors.append(f"{where}: unknown select form {key!r}")
    return EntitySelector(entity_type=entity, all_records=True)


def _parse_effect(key: str, raw, errors: list[str]) -> Effect:
    where = f"behavior {key!r}"
    if not isinstance(raw, dict) or len(raw) != 1:
        errors.append(f"{where}: effect must have exactly one kind")
        return NoOp()
    (kind, body), = raw.items()
    if kind == "navigate":
        return Navigate(route=str(body))
    if kind == "submit_form":
        sources = {
            name: _parse_value_source(src, errors, f"{where} field {name!r}")
            for name, src in (body.get("fields") or {}).items()
        }
        target = None
        if "target" in body:
            target = _parse_entity_selector(body["target"], errors, where)
        op = body.get("op", "create")
        if op not in ("create", "update"):
            errors.append(f"{where}: op must be create or update")
        return SubmitForm(
            entity_type=str(body.get("entity", "")),
            op=op,
            field_sources=sources,
            form_id=body.get("form"),
            target=target,
        )
    if kind == "set_field":
        return SetField(
            selector=_parse_entity_selector(body, errors, where),
            field_name=str(body.get("field", "")),
            value=_parse_value_source(body.get("value"), errors, where),
        )
    if kind == "delete_entity":
        return DeleteEntity(selector=_parse_entity_selector(body, errors, where))
    if kind == "toggle_flag":
        return ToggleFlag(
            selector=_parse_entity_selector(body, errors, where),
            field_name=str(body.get("field", "")),
        )
    if kind == "focus_input":
        return FocusInput(form_id=str(body.get("form", "")), field_name=str(body.get("field", "")))
    if kind == "no_op":
        return NoOp()
    errors.append(f"{where}: unknown effect kind {kind!r}")
    return NoOp()


def _parse_filters(raw, errors: list[str], where: str) -> tuple[FilterClause, ...]:
    clauses: list[FilterClause] = []
    for field_name, cond in (raw or {}).items():
        if isinstance(cond, dict) and len(cond) == 1:
            (op, value), = cond.items()
            if op == "equals":
                clauses.append(FilterClause(field_name, "equals", value=value))
            elif op in ("equals_form", "contains_form"):
                if not (isinstance(value, list) and len(value) == 2):
                    errors.append(f"{where}: {op} needs [form_id, field]")
                    continue
                clauses.append(
                    FilterClause(
                        field_name, op, form=str(value[0]), form_field=str(value[1])
                    )
                )
            else:
                errors.append(f"{where}: unknown filter op {op!r}")
        else:
            # shorthand: bare value means equality
            clauses.append(FilterClause(field_name, "equals", value=cond))
    return tuple(clauses)


def _parse_static(raw, errors: list[str], where: str) -> Static:
    children = tuple(
        _parse_static(child, errors, where) for child in (raw.get("children") or [])
    )
    return Static(
        tag=str(raw.get("tag", "div")),
        text=str(raw.get("text", "")),
        attrs=tuple(sorted({str(k): str(v) for k, v in (raw.get("attrs") or {}).items()}.items())),
        children=children,
    )


def _parse_component(raw, errors: list[str], where: str) -> Component:
    kind = raw.get("kind")
    if kind == "static":
        return _parse_static(raw, errors, where)
    if kind == "trigger":
        return Trigger(
            element_key=str(raw.get("element_key", "")),
            elem_id=str(raw.get("id", raw.get("element_key", ""))),
            text=str(raw.get("text", "")),
            tag=str(raw.get("tag", "button")),
            classes=tuple(raw.get("classes") or ()),
        )
    if kind == "count":
        return CountBadge(
            elem_id=str(raw.get("id", "")),
            entity_type=str(raw.get("entity", "")),
            filter=tuple(sorted((raw.get("filter") or {}).items())),
            template=str(raw.get("template", "{n}")),
        )
    if kind == "entity_list":
        row = raw.get("row") or {}
        triggers = tuple(
            RowTrigger(
                element_key=str(t.get("element_key", "")),
                text=str(t.get("text", "")),
                classes=tuple(t.get("classes") or ()),
            )
            for t in (raw.get("row_triggers") or [])
        )
        return EntityList(
            elem_id=str(raw.get("id", "")),
            entity_type=str(raw.get("entity", "")),
            filters=_parse_filters(raw.get("filter"), errors, where),
            sort=raw.get("sort"),
            empty_text=str(raw.get("empty_text", "")),
            row_text=str(row.get("text", "")),
            row_attrs=tuple(sorted({str(k): str(v) for k, v in (row.get("attrs") or {}).items()}.items())),
            row_triggers=triggers,
        )
    if kind == "form":
        fields = tuple(
            FormField(
                name=str(f.get("name", "")),
                label=str(f.get("label", "")),
                placeholder=str(f.get("placeholder", "")),
                elem_id=f.get("id"),
                element_key=f.get("element_key"),
            )
            for f in (raw.get("fields") or [])
        )
        submit = None
        if raw.get("submit"):
            s = raw["submit"]
            submit = FormSubmit(
                element_key=str(s.get("element_key", "")),
                text=str(s.get("text", "")),
                elem_id=s.get("id"),
                render=bool(s.get("render", True)),
            )
        return FormComponent(form_id=str(raw.get("id", "")), fields=fields, submit=submit)
    errors.append(f"{where}: unknown component kind {kind!r}")
    return Static(tag="div")


def _iter_components(page: PageTemplate):
    """All components of a page, flattening nothing (statics stay nested)."""
    yield from page.components


def _element_keys_on_page(page: PageTemplate) -> list[str]:
    keys: list[str] = []
    for component in page.components:
        if isinstance(component, Trigger):
            keys.append(component.element_key)
        elif isinstance(component, EntityList):
            keys.extend(t.element_key for t in component.row_triggers)
        elif isinstance(component, FormComponent):
            if component.submit:
                keys.append(component.submit.element_key)
            keys.extend(f.element_key for f in component.fields if f.element_key)
    return keys


def load_site(text: str) -> SiteSpec:
    """Parse and validate a site definition; all violations raised together."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SiteValidationError([f"parse error: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise SiteValidationError(["parse error: document must be a mapping"])

    errors: list[str] = []
    site_id = str(doc.get("site_id", ""))
    if not site_id:
        errors.append("missing site_id")

    schemas: dict[str, EntitySchema] = {}
    for type_name, body in (doc.get("entities") or {}).items():
        fields: dict[str, FieldSchema] = {}
        for field_name, kind in (body.get("fields") or {}).items():
            if kind not in FIELD_KINDS:
                errors.append(f"entity {type_name!r} field {field_name!r}: unknown kind {kind!r}")
                kind = "string"
            fields[str(field_name)] = FieldSchema(name=str(field_name), kind=kind)
        schemas[str(type_name)] = EntitySchema(type_name=str(type_name), fields=fields)

    pages: dict[str, PageTemplate] = {}
    for route, body in (doc.get("pages") or {}).items():
        route = str(route)
        components = tuple(
            _parse_component(c, errors, f"page {route!r}")
            for c in (body.get("components") or [])
        )
        pages[route] = PageTemplate(
            route=route, title=str(body.get("title", route)), components=components
        )
    if not pages:
        errors.append("a site must have at least the root route")
    elif "/" not in pages:
        errors.append("missing root route '/'")

    behaviors: dict[str, Effect] = {}
    for key, raw in (doc.get("behaviors") or {}).items():
        behaviors[str(key)] = _parse_effect(str(key), raw, errors)

    initial_data: list[dict] = []
    seen_ids: set[tuple[str, str]] = set()
    for raw in doc.get("initial_data") or []:
        record = dict(raw)
        type_name = str(record.pop("type", ""))
        record_id = str(record.pop("id", ""))
        if type_name not in schemas:
            errors.append(f"initial record {record_id!r}: unknown entity type {type_name!r}")
            continue
        if (type_name, record_id) in seen_ids:
            errors.append(f"duplicate initial record {type_name}/{record_id}")
        seen_ids.add((type_name, record_id))
        initial_data.append({"type": type_name, "id": record_id, "fields": record})

    if "remap_set" in doc:
        remap_set = frozenset(str(k) for k in (doc.get("remap_set") or []))
    else:
        # default: every trigger whose effect is a transition (nav or submit)
        remap_set = frozenset(
            key
            for key, effect in behaviors.items()
            if isinstance(effect, (Navigate, SubmitForm))
        )

    spec = SiteSpec(
        site_id=site_id,
        pages=pages,
        entity_schemas=schemas,
        behaviors=behaviors,
        initial_data=initial_data,
        remap_set=remap_set,
    )
    errors.extend(_validate(spec))
    if errors:
        raise SiteValidationError(errors)
    return spec


def _validate(spec: SiteSpec) -> list[str]:
    errors: list[str] = []
    forms: dict[str, FormComponent] = {}
    key_pages: dict[str, list[str]] = {}

    for route, page in spec.pages.items():
        for key in _element_keys_on_page(page):
            key_pages.setdefault(key, []).append(route)
        for component in page.components:
            if isinstance(component, FormComponent):
                if component.form_id in forms:
                    errors.append(f"duplicate form id {component.form_id!r}")
                forms[component.form_id] = component
                names = [f.name for f in component.fields]
                if len(names) != len(set(names)):
                    errors.append(f"form {component.form_id!r}: duplicate field names")
            elif isinstance(component, (EntityList, CountBadge)):
                if component.entity_type not in spec.entity_schemas:
                    errors.append(
                        f"page {route!r}: unknown entity type {component.entity_type!r}"
                    )

    for key, routes in key_pages.items():
        if len(routes) > 1:
            errors.append(f"duplicate element_key {key!r} on pages {sorted(routes)}")

    def check_selector(sel: EntitySelector, where: str) -> None:
        schema = spec.entity_schemas.get(sel.entity_type)
        if schema is None:
            errors.append(f"{where}: unknown entity type {sel.entity_type!r}")
            return
        for field_name, _ in sel.filter:
            if field_name not in schema.fields:
                errors.append(f"{where}: unknown entity field {field_name!r}")

    def check_source(src: ValueSource, where: str) -> None:
        if src.kind == "form":
            form = forms.get(src.form or "")
            if form is None:
                errors.append(f"{where}: unknown form {src.form!r}")
            elif src.field_name not in [f.name for f in form.fields]:
                errors.append(f"{where}: unknown form field {src.field_name!r}")

    for key, effect in spec.behaviors.items():
        where = f"behavior {key!r}"
        if key not in key_pages:
            errors.append(f"{where}: element_key not placed on any page")
        if isinstance(effect, Navigate):
            if effect.route not in spec.pages:
                errors.append(f"{where}: dangling route {effect.route!r}")
        elif isinstance(effect, SubmitForm):
            schema = spec.entity_schemas.get(effect.entity_type)
            if schema is None:
                errors.append(f"{where}: unknown entity type {effect.entity_type!r}")
            else:
                for field_name, src in effect.field_sources.items():
                    if field_name not in schema.fields:
                        errors.append(f"{where}: unknown entity field {field_name!r}")
                    check_source(src, where)
            if effect.op == "update":
                if effect.target is None:
                    errors.append(f"{where}: update requires a target selector")
                else:
                    check_selector(effect.target, where)
        elif isinstance(effect, SetField):
            check_selector(effect.selector, where)
            schema = spec.entity_schemas.get(effect.selector.entity_type)
            if schema and effect.field_name not in schema.fields:
                errors.append(f"{where}: unknown entity field {effect.field_name!r}")
            check_source(effect.value, where)
        elif isinstance(effect, DeleteEntity):
            check_selector(effect.selector, where)
        elif isinstance(effect, ToggleFlag):
            check_selector(effect.selector, where)
            schema = spec.entity_schemas.get(effect.selector.entity_type)
            if schema and effect.field_name not in schema.fields:
                errors.append(f"{where}: unknown entity field {effect.field_name!r}")
        elif isinstance(effect, FocusInput):
            form = forms.get(effect.form_id)
            if form is None:
                errors.append(f"{where}: unknown form {effect.form_id!r}")
            elif effect.field_name not in [f.name for f in form.fields]:
                errors.append(f"{where}: unknown form field {effect.field_name!r}")

    for key in spec.remap_set:
        if key not in spec.behaviors:
            errors.append(f"remap_set names unknown element_key {key!r}")

    for record in spec.initial_data:
        schema = spec.entity_schemas[record["type"]]
        where = f"initial record {record['type']}/{record['id']}"
        for field_name, value in record["fields"].items():
            if field_name not in schema.fields:
                errors.append(f"{where}: unknown field {field_name!r}")
            elif not schema.check_value(field_name, value):
                errors.append(f"{where}: field {field_name!r} has wrong kind")

    # list filters and sorts against schemas, and interpolations in row templates
    for route, page in spec.pages.items():
        for component in page.components:
            if isinstance(component, EntityList):
                schema = spec.entity_schemas.get(component.entity_type)
                if schema is None:
                    continue
                where = f"list {component.elem_id!r}"
                for clause in component.filters:
                    if clause.field_name not in schema.fields:
                        errors.append(f"{where}: unknown filter field {clause.field_name!r}")
                    if clause.op in ("equals_form", "contains_form"):
                        if clause.form not in forms:
                            errors.append(f"{where}: unknown form {clause.form!r}")
                if component.sort:
                    sort_field = component.sort.lstrip("-")
                    if sort_field not in schema.fields:
                        errors.append(f"{where}: unknown sort field {sort_field!r}")
                for placeholder in _placeholders(component.row_text, component.row_attrs):
                    if placeholder != "id" and placeholder not in schema.fields:
                        errors.append(f"{where}: unknown placeholder {{{placeholder}}}")
    return errors


def _placeholders(text: str, attrs: tuple[tuple[str, str], ...]) -> set[str]:
    found = set(re.findall(r"\{(\w+)\}", text))
    for _, value in attrs:
        found.update(re.findall(r"\{(\w+)\}", value))
    return found
