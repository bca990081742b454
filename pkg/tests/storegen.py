"""Deterministic store-operation sequences for differential driver testing.

Given one seed, `generate_ops` yields the same operation list every time;
`apply_ops` executes them against any driver and returns a JSON-able
observation stream (every read result, every write outcome). Two drivers
are contract-equivalent when their observation streams are identical.
"""

from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone
from typing import Any

from trialdcc.errors import DuplicateError, VersionConflictError
from trialdcc.model import (
    AuditAction,
    AuditEvent,
    Notification,
    NotificationStatus,
    NotificationTemplate,
    PatientRecord,
    Site,
    UserAccount,
    Role,
    WorkflowState,
    to_canonical,
)
from trialdcc.store.base import StoreDriver

_BASE = datetime(2026, 1, 1, tzinfo=timezone.utc)

_STATES = list(WorkflowState)
_ACTIONS = list(AuditAction)


class _Model:
    """Tracks what exists so generated ops stay meaningful."""

    def __init__(self):
        self.sites: list[str] = []
        self.accounts: dict[str, str] = {}  # account_id -> username
        self.patients: dict[str, int] = {}  # patient_id -> version
        self.notifications: dict[str, int] = {}  # id -> attempts guess


def generate_ops(seed: int, count: int) -> list[dict[str, Any]]:
    rng = random.Random(seed)
    model = _Model()
    counter = 0

    def next_id(prefix: str) -> str:
        nonlocal counter
        counter += 1
        return f"{prefix}-{counter:06d}"

    def ts(i: int) -> str:
        return (_BASE + timedelta(milliseconds=i)).isoformat()

    ops: list[dict[str, Any]] = []
    for i in range(count):
        choices: list[str] = ["put_site", "put_account", "append_audit", "create_patient"]
        if model.patients:
            choices += [
                "update_patient",
                "stale_update",
                "get_patient",
                "list_patients",
                "enroll_with_notification",
            ]
        if model.accounts:
            choices += ["get_account_by_username", "duplicate_username"]
        if model.notifications:
            choices += ["claim_notification", "finalize_notification", "list_notifications"]
        choices += ["read_audit", "list_sites", "audit_head"]
        kind = rng.choice(choices)
        op: dict[str, Any] = {"kind": kind, "at": ts(i)}

        if kind == "put_site":
            site_id = next_id("site")
            model.sites.append(site_id)
            op.update(site_id=site_id, name=f"Site {site_id}")
        elif kind == "put_account":
            account_id = next_id("acct")
            username = f"user-{account_id}"
            model.accounts[account_id] = username
            op.update(account_id=account_id, username=username)
        elif kind == "duplicate_username":
            victim = rng.choice(sorted(model.accounts.values()))
            op.update(account_id=next_id("acct"), username=victim)
        elif kind == "create_patient":
            patient_id = next_id("pat")
            site = rng.choice(model.sites) if model.sites else "site-none"
            model.patients[patient_id] = 1
            op.update(patient_id=patient_id, site_id=site)
        elif kind in ("update_patient", "stale_update"):
            patient_id = rng.choice(sorted(model.patients))
            version = model.patients[patient_id]
            if kind == "update_patient":
                expected = version
                model.patients[patient_id] = version + 1
            else:
                expected = max(version - 1, 0) if version > 1 else version + 7
            op.update(
                patient_id=patient_id,
                expected=expected,
                state=rng.choice(_STATES).value,
            )
        elif kind == "enroll_with_notification":
            patient_id = rng.choice(sorted(model.patients))
            version = model.patients[patient_id]
            model.patients[patient_id] = version + 1
            notification_id = next_id("notif")
            model.notifications.setdefault(notification_id, 0)
            op.update(
                patient_id=patient_id,
                expected=version,
                notification_id=notification_id,
            )
        elif kind == "claim_notification":
            notification_id = rng.choice(sorted(model.notifications))
            op.update(
                notification_id=notification_id,
                expected_attempts=rng.choice([0, 1, 2]),
            )
        elif kind == "finalize_notification":
            notification_id = rng.choice(sorted(model.notifications))
            op.update(
                notification_id=notification_id,
                status=rng.choice(
                    [NotificationStatus.SENT.value, NotificationStatus.FAILED.value]
                ),
            )
        elif kind == "append_audit":
            op.update(
                events=[
                    {
                        "actor": f"actor-{rng.randrange(5)}",
                        "action": rng.choice(_ACTIONS).value,
                        "subject": f"subject-{rng.randrange(9)}",
                        "detail": {"n": rng.randrange(100)},
                    }
                    for _ in range(rng.randint(1, 3))
                ]
            )
        elif kind == "get_patient":
            op.update(patient_id=rng.choice(sorted(model.patients)))
        elif kind == "list_patients":
            op.update(
                site_id=rng.choice(model.sites) if model.sites and rng.random() < 0.5 else None,
                state=rng.choice(_STATES).value if rng.random() < 0.3 else None,
            )
        elif kind == "get_account_by_username":
            op.update(username=rng.choice(sorted(model.accounts.values())))
        elif kind == "read_audit":
            op.update(from_seq=rng.randint(1, 20), limit=rng.choice([None, 5, 50]))
        elif kind == "list_notifications":
            op.update(
                status=rng.choice([None] + [s.value for s in NotificationStatus])
            )
        ops.append(op)
    return ops


def _site(op) -> Site:
    return Site(site_id=op["site_id"], name=op["name"], contact_email="c@example.org")


def _account(op) -> UserAccount:
    return UserAccount(
        account_id=op["account_id"],
        username=op["username"],
        password_hash="scrypt$2048$8$1$00$00",
        role=Role.COORDINATOR,
        site_id="site-000001",
    )


def _patient(op, *, version: int, state: str = "SELF_SCREENED") -> PatientRecord:
    from trialdcc.model import parse_ts

    at = parse_ts(op["at"].replace("+00:00", "Z"))
    return PatientRecord(
        patient_id=op["patient_id"],
        site_id=op.get("site_id", "site-x"),
        workflow_state=WorkflowState(state),
        state_version=version,
        created_at=at,
        updated_at=at,
    )


def _event(spec, at) -> AuditEvent:
    from trialdcc.model import parse_ts

    return AuditEvent(
        seq=0,
        at=parse_ts(at.replace("+00:00", "Z")),
        actor=spec["actor"],
        action=AuditAction(spec["action"]),
        subject=spec["subject"],
        detail=dict(spec["detail"]),
    )


def apply_ops(driver: StoreDriver, ops: list[dict[str, Any]]) -> list[Any]:
    """Execute the sequence; every op contributes one observation."""
    from trialdcc.model import parse_ts

    observations: list[Any] = []
    site_cache: dict[str, str] = {}
    patient_state: dict[str, PatientRecord] = {}

    for op in ops:
        kind = op["kind"]
        try:
            if kind == "put_site":
                driver.put_site(_site(op))
                site_cache[op["site_id"]] = op["name"]
                observations.append(["site_ok", op["site_id"]])
            elif kind in ("put_account", "duplicate_username"):
                driver.put_account(_account(op))
                observations.append(["account_ok", op["account_id"]])
            elif kind == "create_patient":
                record = _patient(op, version=1)
                driver.put_patient_cas(record, 0)
                patient_state[record.patient_id] = record
                observations.append(["patient_created", record.patient_id])
            elif kind in ("update_patient", "stale_update"):
                current = patient_state.get(op["patient_id"])
                base = current if current else _patient(op, version=0)
                from dataclasses import replace

                updated = replace(
                    base,
                    workflow_state=WorkflowState(op["state"]),
                    state_version=op["expected"] + 1,
                    updated_at=parse_ts(op["at"].replace("+00:00", "Z")),
                )
                driver.put_patient_cas(updated, op["expected"])
                patient_state[updated.patient_id] = updated
                observations.append(["patient_updated", updated.patient_id, updated.state_version])
            elif kind == "enroll_with_notification":
                current = patient_state[op["patient_id"]]
                from dataclasses import replace

                at = parse_ts(op["at"].replace("+00:00", "Z"))
                updated = replace(
                    current,
                    workflow_state=WorkflowState.ENROLLED,
                    state_version=op["expected"] + 1,
                    updated_at=at,
                )
                notification = Notification(
                    notification_id=op["notification_id"],
                    patient_id=op["patient_id"],
                    recipient="coord@example.org",
                    template=NotificationTemplate.ENROLLMENT_SUBMITTED,
                    status=NotificationStatus.PENDING,
                    attempts=0,
                    created_at=at,
                )
                event = AuditEvent(
                    seq=0,
                    at=at,
                    actor="actor-enroll",
                    action=AuditAction.STATE_TRANSITION,
                    subject=op["patient_id"],
                    detail={"to": "ENROLLED"},
                )
                driver.put_patient_cas(
                    updated, op["expected"], events=[event], notifications=[notification]
                )
                patient_state[updated.patient_id] = updated
                observations.append(["enrolled", op["patient_id"]])
            elif kind == "claim_notification":
                row = driver.claim_notification(op["notification_id"], op["expected_attempts"])
                observations.append(
                    ["claim", op["notification_id"], None if row is None else row.attempts]
                )
            elif kind == "finalize_notification":
                at = parse_ts(op["at"].replace("+00:00", "Z"))
                row = driver.finalize_notification(
                    op["notification_id"],
                    NotificationStatus(op["status"]),
                    at if op["status"] == "SENT" else None,
                )
                observations.append(
                    ["finalize", op["notification_id"], None if row is None else row.status.value]
                )
            elif kind == "append_audit":
                first = driver.append_audit([_event(e, op["at"]) for e in op["events"]])
                observations.append(["audit_first_seq", first])
            elif kind == "get_patient":
                record = driver.get_patient(op["patient_id"])
                observations.append(
                    ["get_patient", None if record is None else to_canonical(record)]
                )
            elif kind == "list_patients":
                state = WorkflowState(op["state"]) if op["state"] else None
                records = driver.list_patients(op["site_id"], state)
                observations.append(["list_patients", [to_canonical(r) for r in records]])
            elif kind == "get_account_by_username":
                account = driver.get_account_by_username(op["username"])
                observations.append(
                    ["get_account", None if account is None else to_canonical(account)]
                )
            elif kind == "read_audit":
                events = driver.read_audit(op["from_seq"], op["limit"])
                observations.append(["read_audit", [to_canonical(e) for e in events]])
            elif kind == "list_sites":
                observations.append(["list_sites", [to_canonical(s) for s in driver.list_sites()]])
            elif kind == "list_notifications":
                status = NotificationStatus(op["status"]) if op["status"] else None
                rows = driver.list_notifications(status)
                observations.append(
                    ["list_notifications", [to_canonical(r) for r in rows]]
                )
            elif kind == "audit_head":
                seq, digest = driver.audit_head()
                observations.append(["audit_head", seq, digest])
            else:  # pragma: no cover
                raise AssertionError(f"unknown op {kind}")
        except VersionConflictError:
            observations.append(["conflict", kind])
        except DuplicateError:
            observations.append(["duplicate", kind])
    return observations
