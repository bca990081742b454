"""Shared domain types, canonical JSON encoding, and invariant validation.

All types are immutable values; mutation happens only through store writes.
The canonical encoding (snake_case fields, RFC 3339 UTC timestamps with
millisecond precision, UPPER_SNAKE enum strings) is both the wire format
and the storage format, so encode/decode must round-trip exactly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any

__all__ = [
    "WorkflowState",
    "Role",
    "AssessmentKind",
    "Overall",
    "FormName",
    "FormStatus",
    "SpecimenKind",
    "AuditAction",
    "NotificationTemplate",
    "NotificationStatus",
    "Site",
    "CriterionInputs",
    "EligibilityAssessment",
    "CaseReportForm",
    "BiospecimenRecord",
    "UserAccount",
    "PatientRecord",
    "AuditEvent",
    "Notification",
    "Session",
    "utc_now",
    "format_ts",
    "parse_ts",
    "to_canonical",
    "from_canonical",
    "dumps_canonical",
    "validate",
    "replace",
]


# ---------------------------------------------------------------------------
# Enums
# ---------------------------------------------------------------------------

class WorkflowState(str, Enum):
    SELF_SCREENED = "SELF_SCREENED"
    CONSULTED = "CONSULTED"
    PHYSICIAN_VALIDATED = "PHYSICIAN_VALIDATED"
    CREDENTIALED = "CREDENTIALED"
    ENROLLMENT_IN_PROGRESS = "ENROLLMENT_IN_PROGRESS"
    ENROLLED = "ENROLLED"
    INELIGIBLE = "INELIGIBLE"
    WITHDRAWN = "WITHDRAWN"

    @property
    def terminal(self) -> bool:
        """True when the enrollment machine admits no further transitions.

        ENROLLED is terminal for enrollment but opens follow-up operations
        (withdrawal, specimen capture), which the transition table models
        explicitly.
        """
        return self in (WorkflowState.INELIGIBLE, WorkflowState.WITHDRAWN)

    @property
    def credentialed_or_later(self) -> bool:
        return self in (
            WorkflowState.CREDENTIALED,
            WorkflowState.ENROLLMENT_IN_PROGRESS,
            WorkflowState.ENROLLED,
        )


class Role(str, Enum):
    PATIENT = "PATIENT"
    COORDINATOR = "COORDINATOR"
    INVESTIGATOR = "INVESTIGATOR"
    RESEARCHER = "RESEARCHER"
    DCC_ADMIN = "DCC_ADMIN"


class AssessmentKind(str, Enum):
    SELF_SCREEN = "SELF_SCREEN"
    PHYSICIAN_VALIDATION = "PHYSICIAN_VALIDATION"


class Overall(str, Enum):
    ELIGIBLE = "ELIGIBLE"
    INELIGIBLE = "INELIGIBLE"


class FormName(str, Enum):
    DEMOGRAPHICS = "DEMOGRAPHICS"
    PSA_HISTORY = "PSA_HISTORY"
    BIOPSY = "BIOPSY"
    DRE = "DRE"


class FormStatus(str, Enum):
    EMPTY = "EMPTY"
    IN_PROGRESS = "IN_PROGRESS"
    COMPLETE = "COMPLETE"


class SpecimenKind(str, Enum):
    URINE = "URINE"
    SERUM = "SERUM"


class AuditAction(str, Enum):
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


class NotificationTemplate(str, Enum):
    ENROLLMENT_SUBMITTED = "ENROLLMENT_SUBMITTED"


class NotificationStatus(str, Enum):
    PENDING = "PENDING"
    SENT = "SENT"
    FAILED = "FAILED"


ANONYMOUS_ACTOR = "anonymous"


# ---------------------------------------------------------------------------
# Timestamps: UTC, millisecond precision
# ---------------------------------------------------------------------------

_TS_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[Tt](\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?"
    r"(?:[Zz]|\+00:00)$"
)


def utc_now() -> datetime:
    now = datetime.now(timezone.utc)
    return now.replace(microsecond=(now.microsecond // 1000) * 1000)


def format_ts(dt: datetime) -> str:
    if dt.tzinfo is None:
        raise ValueError("naive datetime rejected; timestamps are UTC")
    dt = dt.astimezone(timezone.utc)
    ms = dt.microsecond // 1000
    return f"{dt:%Y-%m-%dT%H:%M:%S}.{ms:03d}Z"


def parse_ts(text: str) -> datetime:
    m = _TS_RE.match(text)
    if not m:
        raise ValueError(f"bad RFC 3339 UTC timestamp: {text!r}")
    y, mo, d, h, mi, s = (int(g) for g in m.groups()[:6])
    frac = m.group(7) or "0"
    micro = int(frac.ljust(6, "0"))
    micro = (micro // 1000) * 1000
    return datetime(y, mo, d, h, mi, s, micro, tzinfo=timezone.utc)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Site:
    site_id: str
    name: str
    contact_email: str
    active: bool = True


@dataclass(frozen=True)
class CriterionInputs:
    """Inputs to the eligibility rules.

    `core_fraction` is the biopsy positive-core ratio; it is derived, not
    stored, but rule predicates may target it like any other field.
    """

    dre_palpable: bool
    histology_aggressive: bool
    gleason_score: int
    psa_ng_ml: float
    positive_cores: int
    total_cores: int

    @property
    def core_fraction(self) -> float:
        return self.positive_cores / self.total_cores if self.total_cores else float("inf")


@dataclass(frozen=True)
class EligibilityAssessment:
    assessment_id: str
    kind: AssessmentKind
    inputs: CriterionInputs
    verdicts: dict[str, bool]  # criterion name -> pass
    overall: Overall
    assessed_at: datetime
    assessor: str | None = None  # account_id; required for PHYSICIAN_VALIDATION


@dataclass(frozen=True)
class CaseReportForm:
    form_name: FormName
    fields: dict[str, Any] = field(default_factory=dict)
    status: FormStatus = FormStatus.EMPTY
    last_edited_by: str | None = None  # account_id
    last_edited_at: datetime | None = None


@dataclass(frozen=True)
class BiospecimenRecord:
    specimen_id: str
    patient_id: str
    kind: SpecimenKind
    collected_at: datetime
    collected_by: str  # account_id
    notes: str | None = None


@dataclass(frozen=True)
class UserAccount:
    account_id: str
    username: str
    password_hash: str
    role: Role
    site_id: str | None = None  # required for every role except DCC_ADMIN
    patient_id: str | None = None  # the one record a PATIENT account owns
    must_change_password: bool = False
    disabled: bool = False
    failed_logins: int = 0


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    site_id: str
    workflow_state: WorkflowState
    state_version: int
    created_at: datetime
    updated_at: datetime
    account_id: str | None = None
    assessments: tuple[EligibilityAssessment, ...] = ()
    forms: dict[FormName, CaseReportForm] = field(default_factory=dict)
    specimens: tuple[BiospecimenRecord, ...] = ()


@dataclass(frozen=True)
class AuditEvent:
    """Append-only audit record.

    `seq` and `prev_hash` are assigned by the store at append time; events
    are built with the zero placeholders and finalized exactly once.
    """

    seq: int
    at: datetime
    actor: str  # account_id or "anonymous"
    action: AuditAction
    subject: str  # patient_id / site_id / account_id
    detail: dict[str, Any] = field(default_factory=dict)
    prev_hash: str = ""


@dataclass(frozen=True)
class Notification:
    notification_id: str
    patient_id: str
    recipient: str
    template: NotificationTemplate
    status: NotificationStatus
    attempts: int
    created_at: datetime
    sent_at: datetime | None = None


@dataclass(frozen=True)
class Session:
    token: str
    account_id: str
    created_at: datetime
    expires_at: datetime


# ---------------------------------------------------------------------------
# Canonical JSON codec
# ---------------------------------------------------------------------------

def _enc_ts(dt: datetime | None) -> str | None:
    return None if dt is None else format_ts(dt)


def _dec_ts(v: str | None) -> datetime | None:
    return None if v is None else parse_ts(v)


def to_canonical(obj: Any) -> dict[str, Any]:
    """Encode a domain value to its canonical JSON-compatible dict."""
    if isinstance(obj, Site):
        return {
            "site_id": obj.site_id,
            "name": obj.name,
            "contact_email": obj.contact_email,
            "active": obj.active,
        }
    if isinstance(obj, CriterionInputs):
        return {
            "dre_palpable": obj.dre_palpable,
            "histology_aggressive": obj.histology_aggressive,
            "gleason_score": obj.gleason_score,
            "psa_ng_ml": obj.psa_ng_ml,
            "positive_cores": obj.positive_cores,
            "total_cores": obj.total_cores,
        }
    if isinstance(obj, EligibilityAssessment):
        return {
            "assessment_id": obj.assessment_id,
            "kind": obj.kind.value,
            "inputs": to_canonical(obj.inputs),
            "verdicts": dict(obj.verdicts),
            "overall": obj.overall.value,
            "assessed_at": format_ts(obj.assessed_at),
            "assessor": obj.assessor,
        }
    if isinstance(obj, CaseReportForm):
        return {
            "form_name": obj.form_name.value,
            "fields": dict(obj.fields),
            "status": obj.status.value,
            "last_edited_by": obj.last_edited_by,
            "last_edited_at": _enc_ts(obj.last_edited_at),
        }
    if isinstance(obj, BiospecimenRecord):
        return {
            "specimen_id": obj.specimen_id,
            "patient_id": obj.patient_id,
            "kind": obj.kind.value,
            "collected_at": format_ts(obj.collected_at),
            "collected_by": obj.collected_by,
            "notes": obj.notes,
        }
    if isinstance(obj, UserAccount):
        return {
            "account_id": obj.account_id,
            "username": obj.username,
            "password_hash": obj.password_hash,
            "role": obj.role.value,
            "site_id": obj.site_id,
            "patient_id": obj.patient_id,
            "must_change_password": obj.must_change_password,
            "disabled": obj.disabled,
            "failed_logins": obj.failed_logins,
        }
    if isinstance(obj, PatientRecord):
        return {
            "patient_id": obj.patient_id,
            "site_id": obj.site_id,
            "workflow_state": obj.workflow_state.value,
            "state_version": obj.state_version,
            "created_at": format_ts(obj.created_at),
            "updated_at": format_ts(obj.updated_at),
            "account_id": obj.account_id,
            "assessments": [to_canonical(a) for a in obj.assessments],
            "forms": {name.value: to_canonical(f) for name, f in sorted(obj.forms.items())},
            "specimens": [to_canonical(s) for s in obj.specimens],
        }
    if isinstance(obj, AuditEvent):
        return {
            "seq": obj.seq,
            "at": format_ts(obj.at),
            "actor": obj.actor,
            "action": obj.action.value,
            "subject": obj.subject,
            "detail": dict(obj.detail),
            "prev_hash": obj.prev_hash,
        }
    if isinstance(obj, Notification):
        return {
            "notification_id": obj.notification_id,
            "patient_id": obj.patient_id,
            "recipient": obj.recipient,
            "template": obj.template.value,
            "status": obj.status.value,
            "attempts": obj.attempts,
            "created_at": format_ts(obj.created_at),
            "sent_at": _enc_ts(obj.sent_at),
        }
    if isinstance(obj, Session):
        return {
            "token": obj.token,
            "account_id": obj.account_id,
            "created_at": format_ts(obj.created_at),
            "expires_at": format_ts(obj.expires_at),
        }
    raise TypeError(f"no canonical encoding for {type(obj).__name__}")


def from_canonical(cls: type, data: dict[str, Any]) -> Any:
    """Decode a canonical dict back into a domain value."""
    if cls is Site:
        return Site(
            site_id=data["site_id"],
            name=data["name"],
            contact_email=data["contact_email"],
            active=bool(data.get("active", True)),
        )
    if cls is CriterionInputs:
        return CriterionInputs(
            dre_palpable=data["dre_palpable"],
            histology_aggressive=data["histology_aggressive"],
            gleason_score=data["gleason_score"],
            psa_ng_ml=data["psa_ng_ml"],
            positive_cores=data["positive_cores"],
            total_cores=data["total_cores"],
        )
    if cls is EligibilityAssessment:
        return EligibilityAssessment(
            assessment_id=data["assessment_id"],
            kind=AssessmentKind(data["kind"]),
            inputs=from_canonical(CriterionInputs, data["inputs"]),
            verdicts=dict(data["verdicts"]),
            overall=Overall(data["overall"]),
            assessed_at=parse_ts(data["assessed_at"]),
            assessor=data.get("assessor"),
        )
    if cls is CaseReportForm:
        return CaseReportForm(
            form_name=FormName(data["form_name"]),
            fields=dict(data.get("fields", {})),
            status=FormStatus(data["status"]),
            last_edited_by=data.get("last_edited_by"),
            last_edited_at=_dec_ts(data.get("last_edited_at")),
        )
    if cls is BiospecimenRecord:
        return BiospecimenRecord(
            specimen_id=data["specimen_id"],
            patient_id=data["patient_id"],
            kind=SpecimenKind(data["kind"]),
            collected_at=parse_ts(data["collected_at"]),
            collected_by=data["collected_by"],
            notes=data.get("notes"),
        )
    if cls is UserAccount:
        return UserAccount(
            account_id=data["account_id"],
            username=data["username"],
            password_hash=data["password_hash"],
            role=Role(data["role"]),
            site_id=data.get("site_id"),
            patient_id=data.get("patient_id"),
            must_change_password=bool(data.get("must_change_password", False)),
            disabled=bool(data.get("disabled", False)),
            failed_logins=int(data.get("failed_logins", 0)),
        )
    if cls is PatientRecord:
        return PatientRecord(
            patient_id=data["patient_id"],
            site_id=data["site_id"],
            workflow_state=WorkflowState(data["workflow_state"]),
            state_version=int(data["state_version"]),
            created_at=parse_ts(data["created_at"]),
            updated_at=parse_ts(data["updated_at"]),
            account_id=data.get("account_id"),
            assessments=tuple(
                from_canonical(EligibilityAssessment, a) for a in data.get("assessments", [])
            ),
            forms={
                FormName(k): from_canonical(CaseReportForm, v)
                for k, v in data.get("forms", {}).items()
            },
            specimens=tuple(
                from_canonical(BiospecimenRecord, s) for s in data.get("specimens", [])
            ),
        )
    if cls is AuditEvent:
        return AuditEvent(
            seq=int(data["seq"]),
            at=parse_ts(data["at"]),
            actor=data["actor"],
            action=AuditAction(data["action"]),
            subject=data["subject"],
            detail=dict(data.get("detail", {})),
            prev_hash=data.get("prev_hash", ""),
        )
    if cls is Notification:
        return Notification(
            notification_id=data["notification_id"],
            patient_id=data["patient_id"],
            recipient=data["recipient"],
            template=NotificationTemplate(data["template"]),
            status=NotificationStatus(data["status"]),
            attempts=int(data["attempts"]),
            created_at=parse_ts(data["created_at"]),
            sent_at=_dec_ts(data.get("sent_at")),
        )
    if cls is Session:
        return Session(
            token=data["token"],
            account_id=data["account_id"],
            created_at=parse_ts(data["created_at"]),
            expires_at=parse_ts(data["expires_at"]),
        )
    raise TypeError(f"no canonical decoding for {cls.__name__}")


def dumps_canonical(obj: Any) -> str:
    """Deterministic serialization; the hash chain depends on this."""
    data = to_canonical(obj) if not isinstance(obj, dict) else obj
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# ---------------------------------------------------------------------------
# Invariant validation
# ---------------------------------------------------------------------------

_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")

# States on the linear enrollment path where account linkage is decided by
# position alone. Terminal states can be entered before or after
# credentialing, so linkage there is history-dependent and not checkable
# from the value.
_PRE_CREDENTIAL_STATES = frozenset(
    {WorkflowState.SELF_SCREENED, WorkflowState.CONSULTED, WorkflowState.PHYSICIAN_VALIDATED}
)


def validate(obj: Any) -> list[str]:
    """Return every violated invariant of the value; empty list means ok.

    Total: never raises for any well-typed domain value. Cross-record
    invariants (uniqueness, referential rules) are enforced by the store
    and workflow layers, not here.
    """
    v: list[str] = []
    if isinstance(obj, Site):
        if not obj.site_id:
            v.append("site_id must be non-empty")
        if not obj.name.strip():
            v.append("name must be non-empty")
        if not _EMAIL_RE.match(obj.contact_email or ""):
            v.append("contact_email must be a plausible email address")
        return v
    if isinstance(obj, CriterionInputs):
        if obj.positive_cores > obj.total_cores:
            v.append("positive_cores must be <= total_cores")
        if obj.positive_cores < 0:
            v.append("positive_cores must be >= 0")
        if obj.total_cores < 1:
            v.append("total_cores must be >= 1")
        if obj.psa_ng_ml < 0:
            v.append("psa_ng_ml must be >= 0")
        if not 2 <= obj.gleason_score <= 10:
            v.append("gleason_score must be within 2..10")
        return v
    if isinstance(obj, EligibilityAssessment):
        all_pass = all(obj.verdicts.values()) if obj.verdicts else False
        if (obj.overall is Overall.ELIGIBLE) != all_pass:
            v.append("overall must be ELIGIBLE iff every verdict passes")
        if obj.kind is AssessmentKind.PHYSICIAN_VALIDATION and not obj.assessor:
            v.append("PHYSICIAN_VALIDATION requires an assessor")
        v.extend(validate(obj.inputs))
        return v
    if isinstance(obj, CaseReportForm):
        from . import forms  # deferred: forms imports model

        return forms.validate_form(obj)
    if isinstance(obj, BiospecimenRecord):
        if not obj.specimen_id:
            v.append("specimen_id must be non-empty")
        if not obj.patient_id:
            v.append("patient_id must be non-empty")
        if not obj.collected_by:
            v.append("collected_by must be non-empty")
        return v
    if isinstance(obj, UserAccount):
        if not obj.username.strip():
            v.append("username must be non-empty")
        if not obj.password_hash:
            v.append("password_hash must be set")
        if obj.role is not Role.DCC_ADMIN and not obj.site_id:
            v.append("site_id required for every role except DCC_ADMIN")
        if obj.role is Role.PATIENT and not obj.patient_id:
            v.append("PATIENT accounts must reference exactly one patient record")
        if obj.role is not Role.PATIENT and obj.patient_id:
            v.append("only PATIENT accounts may reference a patient record")
        if obj.failed_logins < 0:
            v.append("failed_logins must be >= 0")
        return v
    if isinstance(obj, PatientRecord):
        if not obj.site_id:
            v.append("site_id must be set (exactly one owning site)")
        if obj.state_version < 1:
            v.append("state_version must be >= 1")
        if obj.workflow_state in _PRE_CREDENTIAL_STATES and obj.account_id:
            v.append("account_id must be unset before CREDENTIALED")
        if obj.workflow_state.credentialed_or_later and not obj.account_id:
            v.append("account_id must be set once CREDENTIALED")
        if obj.specimens and obj.workflow_state not in (
            WorkflowState.ENROLLED,
            WorkflowState.WITHDRAWN,
        ):
            v.append("specimens may only attach to patients that reached ENROLLED")
        for a in obj.assessments:
            v.extend(validate(a))
        for s in obj.specimens:
            if s.patient_id != obj.patient_id:
                v.append("specimen patient_id must match owning record")
        return v
    if isinstance(obj, AuditEvent):
        if obj.seq < 0:
            v.append("seq must be >= 0")
        if not obj.actor:
            v.append("actor must be an account_id or 'anonymous'")
        if not obj.subject:
            v.append("subject must be non-empty")
        return v
    if isinstance(obj, Notification):
        if obj.attempts < 0:
            v.append("attempts must be >= 0")
        if obj.status is NotificationStatus.SENT and obj.sent_at is None:
            v.append("SENT notifications must carry sent_at")
        return v
    if isinstance(obj, Session):
        if len(obj.token) < 22:  # 128 bits base64url
            v.append("session token must be at least 128 bits")
        return v
    return [f"unknown domain type {type(obj).__name__}"]
