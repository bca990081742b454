"""Role-capability policy with site scoping, plus de-identified export.

Every "may actor X do Y to Z" question resolves through a static matrix of
(role, action) -> scope entries loaded at startup. Anything absent from
the matrix is denied. Scope narrows the grant: OWN_RECORD ties a patient
to their own record, OWN_SITE confines staff to their site, ALL_SITES is
reserved for DCC-level roles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Any

from .errors import ConfigError
from .forms import SchemaRegistry
from .model import (
    AuditAction,
    PatientRecord,
    Role,
    UserAccount,
    format_ts,
)


class Action(str, Enum):
    # Mirrors the audit action vocabulary...
    STATE_TRANSITION = "STATE_TRANSITION"
    FORM_WRITE = "FORM_WRITE"
    READ = "READ"
    LOGIN = "LOGIN"
    LOGIN_FAILED = "LOGIN_FAILED"
    CREDENTIAL_ISSUED = "CREDENTIAL_ISSUED"
    PASSWORD_CHANGED = "PASSWORD_CHANGED"
    NOTIFY_SENT = "NOTIFY_SENT"
    EXPORT = "EXPORT"
    ADMIN_CHANGE = "ADMIN_CHANGE"
    # ...plus the query/management capabilities.
    READ_PATIENT = "READ_PATIENT"
    LIST_PATIENTS = "LIST_PATIENTS"
    MANAGE_SITES = "MANAGE_SITES"
    MANAGE_USERS = "MANAGE_USERS"


class Scope(str, Enum):
    OWN_RECORD = "OWN_RECORD"
    OWN_SITE = "OWN_SITE"
    ALL_SITES = "ALL_SITES"


@dataclass(frozen=True)
class Subject:
    """What the action targets. site_id is the isolation key."""

    site_id: str | None = None
    patient_id: str | None = None
    account_id: str | None = None


@dataclass(frozen=True)
class Decision:
    allow: bool
    reason: str | None = None  # machine-readable, set on DENY
    scope: Scope | None = None
    cross_site: bool = False  # ALLOW that reaches outside the actor's site


CapabilityMatrix = dict[tuple[Role, Action], Scope]


def load_matrix(document: str) -> CapabilityMatrix:
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"capability matrix parse error at line {exc.lineno} col {exc.colno}: {exc.msg}"
        )
    entries = data.get("capabilities")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("capability matrix must define a non-empty 'capabilities' list")
    matrix: CapabilityMatrix = {}
    for entry in entries:
        try:
            role = Role(entry.get("role", ""))
        except ValueError:
            raise ConfigError(f"capability entry with unknown role {entry.get('role')!r}")
        try:
            action = Action(entry.get("action", ""))
        except ValueError:
            raise ConfigError(f"capability entry with unknown action {entry.get('action')!r}")
        try:
            scope = Scope(entry.get("scope", ""))
        except ValueError:
            raise ConfigError(f"capability entry with unknown scope {entry.get('scope')!r}")
        key = (role, action)
        if key in matrix:
            raise ConfigError(f"duplicate capability for ({role.value}, {action.value})")
        matrix[key] = scope
    return matrix


def default_matrix() -> CapabilityMatrix:
    text = resources.files("trialdcc.config").joinpath("capabilities.json").read_text()
    return load_matrix(text)


def authorize(
    actor: UserAccount,
    action: Action | str,
    subject: Subject,
    matrix: CapabilityMatrix,
) -> Decision:
    """Pure policy decision; total over any (actor, action, subject).

    Denials carry a machine-readable reason; the caller audits every DENY
    and every cross-site ALLOW.
    """
    if actor.disabled:
        return Decision(allow=False, reason="account_disabled")
    if not isinstance(action, Action):
        try:
            action = Action(str(action))
        except ValueError:
            return Decision(allow=False, reason="unknown_action")
    scope = matrix.get((actor.role, action))
    if scope is None:
        return Decision(allow=False, reason="not_permitted")
    if scope is Scope.OWN_RECORD:
        own_patient = actor.patient_id and actor.patient_id == subject.patient_id
        own_account = subject.account_id and subject.account_id == actor.account_id
        if not (own_patient or own_account):
            return Decision(allow=False, reason="own_record_only", scope=scope)
        return Decision(allow=True, scope=scope)
    if scope is Scope.OWN_SITE:
        if subject.site_id is None or actor.site_id != subject.site_id:
            return Decision(allow=False, reason="cross_site", scope=scope)
        return Decision(allow=True, scope=scope)
    # ALL_SITES
    crossing = subject.site_id is not None and subject.site_id != actor.site_id
    return Decision(allow=True, scope=scope, cross_site=crossing)


# Capability actions that audit as READ events.
AUDIT_ACTION_FOR: dict[Action, AuditAction] = {
    Action.READ: AuditAction.READ,
    Action.READ_PATIENT: AuditAction.READ,
    Action.LIST_PATIENTS: AuditAction.READ,
    Action.EXPORT: AuditAction.EXPORT,
}


# ---------------------------------------------------------------------------
# De-identified export
# ---------------------------------------------------------------------------

def _month(dt) -> str | None:
    return None if dt is None else format_ts(dt)[:7]


def deidentify_patient(record: PatientRecord, schemas: SchemaRegistry) -> dict[str, Any]:
    """Research-export view of one patient.

    Strips account linkage, schema-flagged identifying fields, and
    free-text notes; coarsens every timestamp and date field to month
    precision. The opaque patient_id remains as the pseudonymous study key.
    """
    forms_out: dict[str, Any] = {}
    for name, form in sorted(record.forms.items()):
        schema = schemas.get(name)
        fields_out: dict[str, Any] = {}
        for fname, value in form.fields.items():
            spec = schema.field_map.get(fname) if schema else None
            if spec is None or spec.identifying:
                continue
            if spec.type == "date" and isinstance(value, str):
                value = value[:7]
            fields_out[fname] = value
        forms_out[name.value] = {"status": form.status.value, "fields": fields_out}
    return {
        "patient_id": record.patient_id,
        "site_id": record.site_id,
        "workflow_state": record.workflow_state.value,
        "created_at": _month(record.created_at),
        "updated_at": _month(record.updated_at),
        "assessments": [
            {
                "kind": a.kind.value,
                "inputs": {
                    "dre_palpable": a.inputs.dre_palpable,
                    "histology_aggressive": a.inputs.histology_aggressive,
                    "gleason_score": a.inputs.gleason_score,
                    "psa_ng_ml": a.inputs.psa_ng_ml,
                    "positive_cores": a.inputs.positive_cores,
                    "total_cores": a.inputs.total_cores,
                },
                "verdicts": dict(a.verdicts),
                "overall": a.overall.value,
                "assessed_at": _month(a.assessed_at),
            }
            for a in record.assessments
        ],
        "forms": forms_out,
        "specimens": [
            {
                "specimen_id": s.specimen_id,
                "kind": s.kind.value,
                "collected_at": _month(s.collected_at),
            }
            for s in record.specimens
        ],
    }
