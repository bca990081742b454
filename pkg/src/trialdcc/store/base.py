"""Store contract shared by both drivers, plus the audit hash chain.

The store is the single serialization point of the system: per-record
compare-and-set with read-your-writes visibility, and a totally ordered,
append-only audit log. Audit events are chained — each event carries the
SHA-256 of its predecessor's canonical JSON — so any rewrite of history is
detectable from the log alone.

Both drivers satisfy the identical observable contract; the equivalence
suite in the tests replays generated operation sequences against each and
compares every read.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import replace
from typing import Iterable, Sequence

from ..model import (
    AuditEvent,
    Notification,
    NotificationStatus,
    NotificationTemplate,
    PatientRecord,
    Site,
    UserAccount,
    WorkflowState,
    dumps_canonical,
)

GENESIS_HASH = "0" * 64


def event_hash(event: AuditEvent) -> str:
    """Digest of the event's canonical JSON (seq and prev_hash included)."""
    return hashlib.sha256(dumps_canonical(event).encode("utf-8")).hexdigest()


def chain_events(
    events: Sequence[AuditEvent], head_seq: int, head_hash: str
) -> list[AuditEvent]:
    """Assign gap-free sequence numbers and predecessor hashes."""
    out: list[AuditEvent] = []
    seq, prev = head_seq, head_hash
    for event in events:
        seq += 1
        finalized = replace(event, seq=seq, prev_hash=prev)
        prev = event_hash(finalized)
        out.append(finalized)
    return out


def verify_chain(events: Iterable[AuditEvent]) -> int | None:
    """Return the seq of the first broken link, or None when intact.

    Expects the full log from seq 1; checks gap-free numbering and
    predecessor-hash linkage from the genesis sentinel.
    """
    expected_seq, prev = 1, GENESIS_HASH
    for event in events:
        if event.seq != expected_seq or event.prev_hash != prev:
            return event.seq
        prev = event_hash(event)
        expected_seq += 1
    return None


class StoreDriver(ABC):
    """Contract every storage driver implements.

    Writes that carry `events` commit the entity mutation and its audit
    events atomically: both visible or neither. Not-found is a value
    (None), never a fault. I/O failures raise StoreIOError and leave no
    partial write observable.
    """

    driver_name: str = "abstract"

    # -- patients ----------------------------------------------------------
    @abstractmethod
    def put_patient_cas(
        self,
        record: PatientRecord,
        expected_version: int,
        *,
        events: Sequence[AuditEvent] = (),
        notifications: Sequence[Notification] = (),
        accounts: Sequence[UserAccount] = (),
    ) -> PatientRecord:
        """Compare-and-set write; expected_version 0 means create.

        `notifications` are outbox rows persisted with the same commit; a
        row for an already-known (patient_id, template) is skipped, which
        makes enqueue idempotent. `accounts` ride the same commit so that
        credential issuance and password rotation stay atomic with the
        record's transition.
        """

    @abstractmethod
    def get_patient(self, patient_id: str) -> PatientRecord | None: ...

    @abstractmethod
    def list_patients(
        self, site_id: str | None = None, state: WorkflowState | None = None
    ) -> list[PatientRecord]: ...

    # -- accounts ----------------------------------------------------------
    @abstractmethod
    def put_account(
        self, account: UserAccount, *, events: Sequence[AuditEvent] = ()
    ) -> UserAccount:
        """Upsert by account_id; username must stay unique across accounts."""

    @abstractmethod
    def get_account(self, account_id: str) -> UserAccount | None: ...

    @abstractmethod
    def get_account_by_username(self, username: str) -> UserAccount | None: ...

    @abstractmethod
    def list_accounts(self) -> list[UserAccount]: ...

    # -- sites ---------------------------------------------------------------
    @abstractmethod
    def put_site(self, site: Site, *, events: Sequence[AuditEvent] = ()) -> Site: ...

    @abstractmethod
    def get_site(self, site_id: str) -> Site | None: ...

    @abstractmethod
    def list_sites(self) -> list[Site]: ...

    # -- audit ---------------------------------------------------------------
    @abstractmethod
    def append_audit(self, events: Sequence[AuditEvent]) -> int:
        """Append events in order; returns the first assigned seq."""

    @abstractmethod
    def read_audit(self, from_seq: int = 1, limit: int | None = None) -> list[AuditEvent]: ...

    @abstractmethod
    def audit_head(self) -> tuple[int, str]:
        """(last assigned seq, hash of the last event); (0, genesis) when empty."""

    # -- notification outbox -------------------------------------------------
    @abstractmethod
    def get_notification(self, notification_id: str) -> Notification | None: ...

    @abstractmethod
    def find_notification(
        self, patient_id: str, template: NotificationTemplate
    ) -> Notification | None: ...

    @abstractmethod
    def list_notifications(
        self, status: NotificationStatus | None = None
    ) -> list[Notification]: ...

    @abstractmethod
    def claim_notification(
        self, notification_id: str, expected_attempts: int
    ) -> Notification | None:
        """CAS claim for one delivery attempt: PENDING row with matching
        attempts gets attempts+1 and is returned; anything else is a lost
        race and returns None."""

    @abstractmethod
    def finalize_notification(
        self,
        notification_id: str,
        status: NotificationStatus,
        sent_at,
        *,
        events: Sequence[AuditEvent] = (),
    ) -> Notification | None:
        """Move a PENDING row to SENT or FAILED atomically with its audit
        events; returns None when the row is no longer PENDING."""

    # -- lifecycle -------------------------------------------------------------
    @abstractmethod
    def close(self) -> None: ...

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
