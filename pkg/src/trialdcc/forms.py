"""Case report form schemas and form-write validation.

Schemas ship as data (JSON), not code, so a study can reconfigure the
required-field sets without touching the engine. A form is COMPLETE iff
every required field of its schema holds a valid value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date, datetime
from importlib import resources
from typing import Any

from .errors import ConfigError, ValidationFailure
from .model import CaseReportForm, FormName, FormStatus

FIELD_TYPES = ("text", "integer", "decimal", "date", "enum")


@dataclass(frozen=True)
class FieldSpec:
    name: str
    type: str
    required: bool = False
    values: tuple[str, ...] = ()  # enum members
    identifying: bool = False  # stripped by de-identified export


@dataclass(frozen=True)
class FormSchema:
    form_name: FormName
    fields: tuple[FieldSpec, ...]

    @property
    def field_map(self) -> dict[str, FieldSpec]:
        return {f.name: f for f in self.fields}

    @property
    def required_fields(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields if f.required)


SchemaRegistry = dict[FormName, FormSchema]


def load_schemas(document: str) -> SchemaRegistry:
    """Parse and semantically check a form-schema document."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"form schema parse error at line {exc.lineno} col {exc.colno}: {exc.msg}")
    forms = data.get("forms")
    if not isinstance(forms, dict) or not forms:
        raise ConfigError("form schema document must define a non-empty 'forms' map")
    registry: SchemaRegistry = {}
    for raw_name, body in forms.items():
        try:
            form_name = FormName(raw_name)
        except ValueError:
            raise ConfigError(f"unknown form name {raw_name!r}")
        specs: list[FieldSpec] = []
        seen: set[str] = set()
        for entry in body.get("fields", []):
            name = entry.get("name", "")
            if not name:
                raise ConfigError(f"form {raw_name}: field with empty name")
            if name in seen:
                raise ConfigError(f"form {raw_name}: duplicate field {name!r}")
            seen.add(name)
            ftype = entry.get("type", "")
            if ftype not in FIELD_TYPES:
                raise ConfigError(f"form {raw_name} field {name!r}: unknown type {ftype!r}")
            values = tuple(entry.get("values", ()))
            if ftype == "enum" and not values:
                raise ConfigError(f"form {raw_name} field {name!r}: enum type requires values")
            specs.append(
                FieldSpec(
                    name=name,
                    type=ftype,
                    required=bool(entry.get("required", False)),
                    values=values,
                    identifying=bool(entry.get("identifying", False)),
                )
            )
        if not specs:
            raise ConfigError(f"form {raw_name}: at least one field required")
        registry[form_name] = FormSchema(form_name=form_name, fields=tuple(specs))
    missing = [n.value for n in FormName if n not in registry]
    if missing:
        raise ConfigError(f"form schema document missing forms: {', '.join(missing)}")
    return registry


def default_schemas() -> SchemaRegistry:
    text = resources.files("trialdcc.config").joinpath("form_schemas.json").read_text()
    return load_schemas(text)


def check_value(spec: FieldSpec, value: Any) -> str | None:
    """Return an error message when the value does not fit the field type."""
    if value is None:
        return None if not spec.required else None  # absence handled by status logic
    if spec.type == "text":
        if not isinstance(value, str):
            return f"{spec.name}: expected text"
        return None
    if spec.type == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            return f"{spec.name}: expected integer"
        return None
    if spec.type == "decimal":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return f"{spec.name}: expected decimal"
        return None
    if spec.type == "date":
        if not isinstance(value, str):
            return f"{spec.name}: expected date string YYYY-MM-DD"
        try:
            date.fromisoformat(value)
        except ValueError:
            return f"{spec.name}: bad date {value!r}, expected YYYY-MM-DD"
        return None
    if spec.type == "enum":
        if value not in spec.values:
            return f"{spec.name}: {value!r} not one of {list(spec.values)}"
        return None
    return f"{spec.name}: unknown field type {spec.type!r}"


def compute_status(fields: dict[str, Any], schema: FormSchema) -> FormStatus:
    present = {k: v for k, v in fields.items() if v is not None}
    if not present:
        return FormStatus.EMPTY
    for name in schema.required_fields:
        value = present.get(name)
        if value is None or check_value(schema.field_map[name], value):
            return FormStatus.IN_PROGRESS
    return FormStatus.COMPLETE


def apply_write(
    form: CaseReportForm,
    values: dict[str, Any],
    schema: FormSchema,
    editor: str,
    at: datetime,
) -> CaseReportForm:
    """Merge a field write into the form and recompute completion.

    Rejects unknown fields and type-invalid values with one message per
    offending field. Writing null clears a field.
    """
    errors: list[str] = []
    field_map = schema.field_map
    for name, value in values.items():
        spec = field_map.get(name)
        if spec is None:
            errors.append(f"{name}: unknown field for form {form.form_name.value}")
            continue
        err = check_value(spec, value)
        if err:
            errors.append(err)
    if errors:
        raise ValidationFailure(
            f"invalid write to form {form.form_name.value}", details=errors
        )
    merged = dict(form.fields)
    for name, value in values.items():
        if value is None:
            merged.pop(name, None)
        else:
            merged[name] = value
    return CaseReportForm(
        form_name=form.form_name,
        fields=merged,
        status=compute_status(merged, schema),
        last_edited_by=editor,
        last_edited_at=at,
    )


def empty_forms(registry: SchemaRegistry) -> dict[FormName, CaseReportForm]:
    return {name: CaseReportForm(form_name=name) for name in registry}


def incomplete_forms(
    forms: dict[FormName, CaseReportForm], registry: SchemaRegistry
) -> list[str]:
    """Names of required forms that are not COMPLETE, in schema order."""
    out = []
    for name in registry:
        form = forms.get(name)
        if form is None or form.status is not FormStatus.COMPLETE:
            out.append(name.value)
    return out


_DEFAULT_REGISTRY: SchemaRegistry | None = None


def _default_registry() -> SchemaRegistry:
    global _DEFAULT_REGISTRY
    if _DEFAULT_REGISTRY is None:
        _DEFAULT_REGISTRY = default_schemas()
    return _DEFAULT_REGISTRY


def validate_form(form: CaseReportForm, schema: FormSchema | None = None) -> list[str]:
    """Value-level invariant check used by model.validate."""
    if schema is None:
        schema = _default_registry().get(form.form_name)
        if schema is None:  # unknown form name cannot be checked further
            return []
    v: list[str] = []
    field_map = schema.field_map
    for name, value in form.fields.items():
        spec = field_map.get(name)
        if spec is None:
            v.append(f"{name}: unknown field for form {form.form_name.value}")
            continue
        err = check_value(spec, value)
        if err:
            v.append(err)
    expected = compute_status(form.fields, schema)
    if form.status is not expected:
        v.append(
            f"status {form.status.value} inconsistent with fields (expected {expected.value})"
        )
    return v
