"""The enrollment state machine: a static whitelist of guarded transitions.

Everything here is pure — functions over (record, command) pairs that
return new record values and audit-event drafts. Serialization against
concurrent writers is the store's job (per-patient compare-and-set), and
role/site policy is checked by the caller before the transition runs.

Operations and their whitelisted source states:

    register_prospect      (creation)                -> SELF_SCREENED | INELIGIBLE
    record_consultation    SELF_SCREENED             -> CONSULTED
    physician_validate     CONSULTED                 -> PHYSICIAN_VALIDATED | INELIGIBLE
    issue_credentials      PHYSICIAN_VALIDATED       -> CREDENTIALED
    patient_first_login    CREDENTIALED              -> ENROLLMENT_IN_PROGRESS
    write_form             ENROLLMENT_IN_PROGRESS    -> (same state, version bump)
    submit_enrollment      ENROLLMENT_IN_PROGRESS    -> ENROLLED
    withdraw               any non-terminal incl. ENROLLED -> WITHDRAWN
    register_specimen      ENROLLED                  -> (same state, version bump)

INELIGIBLE and WITHDRAWN are terminal. ENROLLED is terminal for the
enrollment machine; withdraw and register_specimen are the only follow-up
operations it admits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime
from typing import Any, Iterable

from .errors import TransitionError
from .model import (
    AuditAction,
    AuditEvent,
    PatientRecord,
    Role,
    WorkflowState,
)

S = WorkflowState


@dataclass(frozen=True)
class OperationSpec:
    name: str
    from_states: tuple[WorkflowState, ...]
    required_roles: tuple[Role, ...]
    changes_state: bool


_NON_TERMINAL = (
    S.SELF_SCREENED,
    S.CONSULTED,
    S.PHYSICIAN_VALIDATED,
    S.CREDENTIALED,
    S.ENROLLMENT_IN_PROGRESS,
    S.ENROLLED,
)

OPERATIONS: dict[str, OperationSpec] = {
    spec.name: spec
    for spec in (
        # register_prospect creates the record; empty from_states means no
        # existing record may be re-registered.
        OperationSpec("register_prospect", (), (Role.COORDINATOR,), True),
        OperationSpec("record_consultation", (S.SELF_SCREENED,), (Role.COORDINATOR,), True),
        OperationSpec("physician_validate", (S.CONSULTED,), (Role.INVESTIGATOR,), True),
        OperationSpec("issue_credentials", (S.PHYSICIAN_VALIDATED,), (Role.COORDINATOR,), True),
        OperationSpec("patient_first_login", (S.CREDENTIALED,), (Role.PATIENT,), True),
        OperationSpec(
            "write_form", (S.ENROLLMENT_IN_PROGRESS,), (Role.PATIENT, Role.COORDINATOR), False
        ),
        OperationSpec("submit_enrollment", (S.ENROLLMENT_IN_PROGRESS,), (Role.PATIENT,), True),
        OperationSpec("withdraw", _NON_TERMINAL, (Role.PATIENT, Role.COORDINATOR), True),
        OperationSpec("register_specimen", (S.ENROLLED,), (Role.COORDINATOR,), False),
    )
}


def check_state(record: PatientRecord, operation: str) -> OperationSpec:
    """Whitelist gate; raises TransitionError naming the allowed sources."""
    spec = OPERATIONS[operation]
    if record.workflow_state not in spec.from_states:
        raise TransitionError(
            f"{operation} not allowed from {record.workflow_state.value}; "
            f"allowed from: {', '.join(s.value for s in spec.from_states)}",
            allowed_from=tuple(s.value for s in spec.from_states),
        )
    return spec


def check_role(operation: str, role: Role) -> bool:
    return role in OPERATIONS[operation].required_roles


def advance(
    record: PatientRecord,
    to_state: WorkflowState,
    now: datetime,
    **updates: Any,
) -> PatientRecord:
    """New record value at the next version, in the target state."""
    return replace(
        record,
        workflow_state=to_state,
        state_version=record.state_version + 1,
        updated_at=now,
        **updates,
    )


def touch(record: PatientRecord, now: datetime, **updates: Any) -> PatientRecord:
    """Version bump without a state change (form/specimen writes)."""
    return replace(
        record, state_version=record.state_version + 1, updated_at=now, **updates
    )


def transition_event(
    record_before: PatientRecord | None,
    record_after: PatientRecord,
    actor: str,
    now: datetime,
    **extra: Any,
) -> AuditEvent:
    detail: dict[str, Any] = {
        "patient_id": record_after.patient_id,
        "from": record_before.workflow_state.value if record_before else None,
        "to": record_after.workflow_state.value,
        "version": record_after.state_version,
    }
    detail.update(extra)
    return AuditEvent(
        seq=0,
        at=now,
        actor=actor,
        action=AuditAction.STATE_TRANSITION,
        subject=record_after.patient_id,
        detail=detail,
    )


def reconstruct_states(events: Iterable[AuditEvent]) -> dict[str, WorkflowState]:
    """Final workflow_state of every patient, from the audit stream alone.

    Only successful transitions carry a "to" state in their detail;
    denial audits and other actions are ignored.
    """
    states: dict[str, WorkflowState] = {}
    for event in events:
        if event.action is not AuditAction.STATE_TRANSITION:
            continue
        to = event.detail.get("to")
        if to is None:
            continue
        states[event.detail.get("patient_id", event.subject)] = WorkflowState(to)
    return states
