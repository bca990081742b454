"""Form schemas: loading, write validation, completion status."""

from __future__ import annotations

import json

import pytest

from trialdcc.errors import ConfigError, ValidationFailure
from trialdcc.forms import (
    apply_write,
    compute_status,
    default_schemas,
    empty_forms,
    incomplete_forms,
    load_schemas,
)
from trialdcc.model import CaseReportForm, FormName, FormStatus, utc_now


def test_default_schemas_cover_all_four_forms():
    registry = default_schemas()
    assert set(registry) == set(FormName)
    demo = registry[FormName.DEMOGRAPHICS]
    assert "full_name" in demo.required_fields
    assert demo.field_map["full_name"].identifying
    biopsy = registry[FormName.BIOPSY]
    assert {"biopsy_date", "gleason_score", "positive_cores", "total_cores"} <= set(
        biopsy.required_fields
    )


def test_partial_write_is_in_progress_and_full_write_completes():
    registry = default_schemas()
    schema = registry[FormName.DRE]
    form = CaseReportForm(form_name=FormName.DRE)
    now = utc_now()
    partial = apply_write(form, {"exam_date": "2026-05-01"}, schema, "acct", now)
    assert partial.status is FormStatus.IN_PROGRESS
    full = apply_write(partial, {"tumor_palpable": "NO"}, schema, "acct", now)
    assert full.status is FormStatus.COMPLETE
    assert full.last_edited_by == "acct"


def test_write_rejects_unknown_field_and_bad_types():
    registry = default_schemas()
    schema = registry[FormName.PSA_HISTORY]
    form = CaseReportForm(form_name=FormName.PSA_HISTORY)
    now = utc_now()
    with pytest.raises(ValidationFailure) as err:
        apply_write(
            form,
            {"psa_density": 0.1, "latest_psa_ng_ml": "four"},
            schema,
            "acct",
            now,
        )
    details = " ".join(err.value.details)
    assert "psa_density" in details and "latest_psa_ng_ml" in details


def test_write_rejects_bad_date_and_enum():
    registry = default_schemas()
    schema = registry[FormName.DRE]
    form = CaseReportForm(form_name=FormName.DRE)
    with pytest.raises(ValidationFailure):
        apply_write(form, {"exam_date": "May 1st"}, schema, "acct", utc_now())
    with pytest.raises(ValidationFailure):
        apply_write(form, {"tumor_palpable": "MAYBE"}, schema, "acct", utc_now())


def test_null_clears_field_and_status_recomputes():
    registry = default_schemas()
    schema = registry[FormName.DRE]
    now = utc_now()
    form = CaseReportForm(form_name=FormName.DRE)
    form = apply_write(
        form, {"exam_date": "2026-05-01", "tumor_palpable": "NO"}, schema, "acct", now
    )
    assert form.status is FormStatus.COMPLETE
    form = apply_write(form, {"tumor_palpable": None}, schema, "acct", now)
    assert form.status is FormStatus.IN_PROGRESS
    form = apply_write(form, {"exam_date": None}, schema, "acct", now)
    assert form.status is FormStatus.EMPTY


def test_compute_status_empty_for_no_fields():
    registry = default_schemas()
    assert compute_status({}, registry[FormName.BIOPSY]) is FormStatus.EMPTY


def test_incomplete_forms_lists_schema_order():
    registry = default_schemas()
    forms = empty_forms(registry)
    assert incomplete_forms(forms, registry) == [n.value for n in registry]


def test_load_rejects_missing_forms_and_bad_types():
    with pytest.raises(ConfigError, match="missing forms"):
        load_schemas(json.dumps({"forms": {"DEMOGRAPHICS": {"fields": [
            {"name": "x", "type": "text"}]}}}))
    with pytest.raises(ConfigError, match="unknown type"):
        load_schemas(json.dumps({"forms": {"DEMOGRAPHICS": {"fields": [
            {"name": "x", "type": "float"}]}}}))
    with pytest.raises(ConfigError, match="enum type requires values"):
        load_schemas(json.dumps({"forms": {"DEMOGRAPHICS": {"fields": [
            {"name": "x", "type": "enum"}]}}}))
    with pytest.raises(ConfigError, match="duplicate field"):
        load_schemas(json.dumps({"forms": {"DEMOGRAPHICS": {"fields": [
            {"name": "x", "type": "text"}, {"name": "x", "type": "text"}]}}}))
