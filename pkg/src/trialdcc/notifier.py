"""Outbox-backed notification dispatch.

The enrollment transition is the only notifying event: the outbox row is
persisted in the same store commit as the ENROLLED write, so a crash can
never lose it or double it. Delivery happens later via drain(), which
claims each PENDING row with a compare-and-set on its attempt counter —
concurrent drains race on the claim and exactly one wins per attempt, so
at most one delivery ever reaches SENT per (patient, template).
"""

from __future__ import annotations

import json
import smtplib
import threading
from dataclasses import dataclass, field
from datetime import datetime
from email.message import EmailMessage
from pathlib import Path
from typing import Callable, Protocol

from .errors import DccError, OutboxContractError
from .ids import new_id
from .model import (
    AuditAction,
    AuditEvent,
    Notification,
    NotificationStatus,
    NotificationTemplate,
    format_ts,
    utc_now,
)
from .store.base import StoreDriver

DEFAULT_MAX_ATTEMPTS = 10
BACKOFF_CAP_SECONDS = 900  # 15 minutes

# Audit actor for background dispatch, alongside "anonymous" for
# unauthenticated callers.
SYSTEM_ACTOR = "system"


class TransportError(DccError):
    code = "transport_failed"


class Transport(Protocol):
    def send(self, notification: Notification, sent_at: datetime) -> None: ...


class LogSinkTransport:
    """Default dev/test transport: one JSON object per line."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def send(self, notification: Notification, sent_at: datetime) -> None:
        line = json.dumps(
            {
                "notification_id": notification.notification_id,
                "recipient": notification.recipient,
                "template": notification.template.value,
                "patient_id": notification.patient_id,
                "sent_at": format_ts(sent_at),
            },
            sort_keys=True,
        )
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


class SmtpTransport:
    """RFC 5321 client; host/port/credentials come from the environment."""

    def __init__(
        self,
        host: str,
        port: int = 25,
        *,
        username: str | None = None,
        password: str | None = None,
        use_tls: bool = False,
        sender: str = "dcc-noreply@example.org",
        timeout: float = 10.0,
    ):
        self.host, self.port = host, port
        self.username, self.password = username, password
        self.use_tls = use_tls
        self.sender = sender
        self.timeout = timeout

    def send(self, notification: Notification, sent_at: datetime) -> None:
        msg = EmailMessage()
        msg["From"] = self.sender
        msg["To"] = notification.recipient
        msg["Subject"] = "Enrollment submission received"
        msg.set_content(
            f"Patient {notification.patient_id} completed enrollment submission.\n"
            f"Notification: {notification.notification_id}\n"
        )
        try:
            with smtplib.SMTP(self.host, self.port, timeout=self.timeout) as smtp:
                if self.use_tls:
                    smtp.starttls()
                if self.username:
                    smtp.login(self.username, self.password or "")
                smtp.send_message(msg)
        except (OSError, smtplib.SMTPException) as exc:
            raise TransportError(f"smtp delivery failed: {exc}")


class TransitionContext:
    """Handle for the single store commit of an enrollment transition.

    Enqueueing is only legal through an open context; the drafts it
    collects must be handed to the same put_patient_cas call that writes
    the transition.
    """

    def __init__(self, patient_id: str):
        self.patient_id = patient_id
        self.open = True
        self.drafts: list[Notification] = []

    def close(self) -> None:
        self.open = False


@dataclass
class DrainReport:
    attempted: int = 0
    sent: int = 0
    failed: int = 0
    retriable: int = 0
    skipped: int = 0  # lost claim races
    errors: list[str] = field(default_factory=list)


class Outbox:
    def __init__(self, store: StoreDriver, *, max_attempts: int = DEFAULT_MAX_ATTEMPTS):
        self.store = store
        self.max_attempts = max_attempts

    def enqueue(
        self,
        ctx: TransitionContext | None,
        patient_id: str,
        recipient: str,
        template: NotificationTemplate,
        *,
        now: datetime | None = None,
        id_fn: Callable[[], str] = new_id,
    ) -> Notification:
        """Add a PENDING row to the transition's commit.

        Duplicate enqueue for the same (patient, template) is a no-op
        returning the existing row or draft.
        """
        if ctx is None or not ctx.open:
            raise OutboxContractError(
                "enqueue is only valid inside an open enrollment transition commit"
            )
        if ctx.patient_id != patient_id:
            raise OutboxContractError(
                f"transition context is for patient {ctx.patient_id}, not {patient_id}"
            )
        existing = self.store.find_notification(patient_id, template)
        if existing is not None:
            return existing
        for draft in ctx.drafts:
            if draft.patient_id == patient_id and draft.template is template:
                return draft
        draft = Notification(
            notification_id=id_fn(),
            patient_id=patient_id,
            recipient=recipient,
            template=template,
            status=NotificationStatus.PENDING,
            attempts=0,
            created_at=now or utc_now(),
        )
        ctx.drafts.append(draft)
        return draft

    def drain(
        self,
        transport: Transport,
        *,
        now: datetime | None = None,
        actor: str = SYSTEM_ACTOR,
    ) -> DrainReport:
        """Attempt every PENDING row once; safe to run concurrently."""
        report = DrainReport()
        for row in self.store.list_notifications(NotificationStatus.PENDING):
            claimed = self.store.claim_notification(row.notification_id, row.attempts)
            if claimed is None:
                report.skipped += 1
                continue
            report.attempted += 1
            sent_at = now or utc_now()
            try:
                transport.send(claimed, sent_at)
            except TransportError as exc:
                report.errors.append(f"{claimed.notification_id}: {exc}")
                if claimed.attempts >= self.max_attempts:
                    if self.store.finalize_notification(
                        claimed.notification_id, NotificationStatus.FAILED, None
                    ):
                        report.failed += 1
                else:
                    report.retriable += 1
                continue
            event = AuditEvent(
                seq=0,
                at=sent_at,
                actor=actor,
                action=AuditAction.NOTIFY_SENT,
                subject=claimed.patient_id,
                detail={
                    "notification_id": claimed.notification_id,
                    "template": claimed.template.value,
                    "recipient": claimed.recipient,
                },
            )
            done = self.store.finalize_notification(
                claimed.notification_id,
                NotificationStatus.SENT,
                sent_at,
                events=[event],
            )
            if done is not None:
                report.sent += 1
            else:
                report.skipped += 1
        return report


def backoff_schedule(consecutive_failures: int, *, base: float = 2.0) -> float:
    """Exponential drain-loop delay capped at 15 minutes."""
    return min(base * (2**max(consecutive_failures - 1, 0)), BACKOFF_CAP_SECONDS)


def run_drain_loop(
    outbox: Outbox,
    transport: Transport,
    stop: threading.Event,
    *,
    interval: float = 5.0,
) -> None:
    """Periodic drain with exponential backoff while delivery is failing."""
    failures = 0
    while not stop.is_set():
        report = outbox.drain(transport)
        if report.errors:
            failures += 1
            delay = backoff_schedule(failures, base=interval)
        else:
            failures = 0
            delay = interval
        stop.wait(delay)
