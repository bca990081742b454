"""Relational driver: any SQL server reachable by URL (sqlite/postgres/...).

Schema style: one table per domain type holding the canonical JSON
document plus extracted, indexed columns for the filters the contract
needs (site_id, workflow_state, username, seq, outbox status). No joins —
every query is a single-entity fetch or a single-filter scan, so the
contract stays implementable on restricted datastores.

A singleton `audit_head` row carries (last seq, last hash); appends update
it inside the same transaction, which keeps the chain gap-free under
concurrent writers.
"""

from __future__ import annotations

import json
import threading
from typing import Any, Sequence

import sqlalchemy as sa
from sqlalchemy.exc import IntegrityError as SAIntegrityError
from sqlalchemy.exc import OperationalError

from ..errors import DuplicateError, StoreIOError, VersionConflictError
from ..model import (
    AuditEvent,
    Notification,
    NotificationStatus,
    NotificationTemplate,
    PatientRecord,
    Site,
    UserAccount,
    WorkflowState,
    format_ts,
    from_canonical,
    to_canonical,
)
from .base import GENESIS_HASH, StoreDriver, chain_events, event_hash

metadata = sa.MetaData()

sites_t = sa.Table(
    "sites",
    metadata,
    sa.Column("site_id", sa.String(64), primary_key=True),
    sa.Column("doc", sa.Text, nullable=False),
)

accounts_t = sa.Table(
    "accounts",
    metadata,
    sa.Column("account_id", sa.String(64), primary_key=True),
    sa.Column("username", sa.String(255), nullable=False, unique=True),
    sa.Column("doc", sa.Text, nullable=False),
)

patients_t = sa.Table(
    "patients",
    metadata,
    sa.Column("patient_id", sa.String(64), primary_key=True),
    sa.Column("site_id", sa.String(64), nullable=False, index=True),
    sa.Column("workflow_state", sa.String(40), nullable=False, index=True),
    sa.Column("state_version", sa.Integer, nullable=False),
    sa.Column("doc", sa.Text, nullable=False),
)

audit_t = sa.Table(
    "audit_events",
    metadata,
    sa.Column("seq", sa.Integer, primary_key=True, autoincrement=False),
    sa.Column("at", sa.String(32), nullable=False),
    sa.Column("actor", sa.String(64), nullable=False),
    sa.Column("action", sa.String(40), nullable=False),
    sa.Column("subject", sa.String(64), nullable=False),
    sa.Column("doc", sa.Text, nullable=False),
)

audit_head_t = sa.Table(
    "audit_head",
    metadata,
    sa.Column("id", sa.Integer, primary_key=True),
    sa.Column("seq", sa.Integer, nullable=False),
    sa.Column("last_hash", sa.String(64), nullable=False),
)

notifications_t = sa.Table(
    "notifications",
    metadata,
    sa.Column("notification_id", sa.String(64), primary_key=True),
    sa.Column("patient_id", sa.String(64), nullable=False),
    sa.Column("template", sa.String(40), nullable=False),
    sa.Column("status", sa.String(16), nullable=False, index=True),
    sa.Column("attempts", sa.Integer, nullable=False),
    sa.Column("doc", sa.Text, nullable=False),
    sa.UniqueConstraint("patient_id", "template", name="uq_outbox_once"),
)


def init_schema(engine: sa.Engine) -> None:
    metadata.create_all(engine)
    with engine.begin() as conn:
        head = conn.execute(sa.select(audit_head_t.c.id).where(audit_head_t.c.id == 1)).first()
        if head is None:
            conn.execute(
                audit_head_t.insert().values(id=1, seq=0, last_hash=GENESIS_HASH)
            )


def _dump(obj: Any) -> str:
    return json.dumps(to_canonical(obj), sort_keys=True, separators=(",", ":"))


class RelationalDriver(StoreDriver):
    driver_name = "relational"

    def __init__(self, url: str, *, create: bool = True):
        kwargs: dict[str, Any] = {"future": True}
        if url.startswith("sqlite"):
            kwargs["connect_args"] = {"check_same_thread": False, "timeout": 30}
        try:
            self._engine = sa.create_engine(url, **kwargs)
            if create:
                init_schema(self._engine)
        except OperationalError as exc:
            raise StoreIOError(f"cannot reach relational server: {exc}")
        # Serializes write transactions from this process; the database
        # itself serializes across processes.
        self._write_lock = threading.Lock()

    # -- internals ---------------------------------------------------------

    def _append_events(self, conn, events: Sequence[AuditEvent]) -> list[AuditEvent]:
        if not events:
            return []
        head = conn.execute(
            sa.select(audit_head_t.c.seq, audit_head_t.c.last_hash)
            .where(audit_head_t.c.id == 1)
            .with_for_update()
        ).one()
        finalized = chain_events(events, head.seq, head.last_hash)
        conn.execute(
            audit_t.insert(),
            [
                {
                    "seq": e.seq,
                    "at": format_ts(e.at),
                    "actor": e.actor,
                    "action": e.action.value,
                    "subject": e.subject,
                    "doc": _dump(e),
                }
                for e in finalized
            ],
        )
        conn.execute(
            audit_head_t.update()
            .where(audit_head_t.c.id == 1)
            .values(seq=finalized[-1].seq, last_hash=event_hash(finalized[-1]))
        )
        return finalized

    def _insert_notifications(self, conn, notifications: Sequence[Notification]) -> None:
        for row in notifications:
            exists = conn.execute(
                sa.select(notifications_t.c.notification_id).where(
                    notifications_t.c.patient_id == row.patient_id,
                    notifications_t.c.template == row.template.value,
                )
            ).first()
            if exists:
                continue
            conn.execute(
                notifications_t.insert().values(
                    notification_id=row.notification_id,
                    patient_id=row.patient_id,
                    template=row.template.value,
                    status=row.status.value,
                    attempts=row.attempts,
                    doc=_dump(row),
                )
            )

    # -- patients ------------------------------------------------------------

    def _upsert_account(self, conn, account: UserAccount) -> None:
        existing = conn.execute(
            sa.select(accounts_t.c.account_id).where(
                accounts_t.c.account_id == account.account_id
            )
        ).first()
        try:
            if existing:
                conn.execute(
                    accounts_t.update()
                    .where(accounts_t.c.account_id == account.account_id)
                    .values(username=account.username, doc=_dump(account))
                )
            else:
                conn.execute(
                    accounts_t.insert().values(
                        account_id=account.account_id,
                        username=account.username,
                        doc=_dump(account),
                    )
                )
        except SAIntegrityError:
            raise DuplicateError(f"username {account.username!r} already taken")

    def put_patient_cas(
        self,
        record: PatientRecord,
        expected_version: int,
        *,
        events: Sequence[AuditEvent] = (),
        notifications: Sequence[Notification] = (),
        accounts: Sequence[UserAccount] = (),
    ) -> PatientRecord:
        if record.state_version <= expected_version:
            raise VersionConflictError(
                f"patient {record.patient_id}: new version {record.state_version} "
                f"must exceed {expected_version}"
            )
        with self._write_lock, self._engine.begin() as conn:
            if expected_version == 0:
                exists = conn.execute(
                    sa.select(patients_t.c.state_version).where(
                        patients_t.c.patient_id == record.patient_id
                    )
                ).first()
                if exists is not None:
                    raise VersionConflictError(
                        f"patient {record.patient_id}: expected version 0, "
                        f"stored {exists.state_version}"
                    )
                conn.execute(
                    patients_t.insert().values(
                        patient_id=record.patient_id,
                        site_id=record.site_id,
                        workflow_state=record.workflow_state.value,
                        state_version=record.state_version,
                        doc=_dump(record),
                    )
                )
            else:
                result = conn.execute(
                    patients_t.update()
                    .where(
                        patients_t.c.patient_id == record.patient_id,
                        patients_t.c.state_version == expected_version,
                    )
                    .values(
                        site_id=record.site_id,
                        workflow_state=record.workflow_state.value,
                        state_version=record.state_version,
                        doc=_dump(record),
                    )
                )
                if result.rowcount != 1:
                    stored = conn.execute(
                        sa.select(patients_t.c.state_version).where(
                            patients_t.c.patient_id == record.patient_id
                        )
                    ).first()
                    raise VersionConflictError(
                        f"patient {record.patient_id}: expected version {expected_version}, "
                        f"stored {stored.state_version if stored else 0}"
                    )
            for account in accounts:
                self._upsert_account(conn, account)
            self._insert_notifications(conn, notifications)
            self._append_events(conn, events)
        return record

    def get_patient(self, patient_id: str) -> PatientRecord | None:
        with self._engine.connect() as conn:
            row = conn.execute(
                sa.select(patients_t.c.doc).where(patients_t.c.patient_id == patient_id)
            ).first()
        return from_canonical(PatientRecord, json.loads(row.doc)) if row else None

    def list_patients(
        self, site_id: str | None = None, state: WorkflowState | None = None
    ) -> list[PatientRecord]:
        query = sa.select(patients_t.c.doc).order_by(patients_t.c.patient_id)
        if site_id is not None:
            query = query.where(patients_t.c.site_id == site_id)
        if state is not None:
            query = query.where(patients_t.c.workflow_state == state.value)
        with self._engine.connect() as conn:
            rows = conn.execute(query).all()
        return [from_canonical(PatientRecord, json.loads(r.doc)) for r in rows]

    # -- accounts ------------------------------------------------------------

    def put_account(
        self, account: UserAccount, *, events: Sequence[AuditEvent] = ()
    ) -> UserAccount:
        with self._write_lock, self._engine.begin() as conn:
            self._upsert_account(conn, account)
            self._append_events(conn, events)
        return account

    def get_account(self, account_id: str) -> UserAccount | None:
        with self._engine.connect() as conn:
            row = conn.execute(
                sa.select(accounts_t.c.doc).where(accounts_t.c.account_id == account_id)
            ).first()
        return from_canonical(UserAccount, json.loads(row.doc)) if row else None

    def get_account_by_username(self, username: str) -> UserAccount | None:
        with self._engine.connect() as conn:
            row = conn.execute(
                sa.select(accounts_t.c.doc).where(accounts_t.c.username == username)
            ).first()
        return from_canonical(UserAccount, json.loads(row.doc)) if row else None

    def list_accounts(self) -> list[UserAccount]:
        with self._engine.connect() as conn:
            rows = conn.execute(
                sa.select(accounts_t.c.doc).order_by(accounts_t.c.account_id)
            ).all()
        return [from_canonical(UserAccount, json.loads(r.doc)) for r in rows]

    # -- sites ------------------------------------------------------------

    def put_site(self, site: Site, *, events: Sequence[AuditEvent] = ()) -> Site:
        with self._write_lock, self._engine.begin() as conn:
            existing = conn.execute(
                sa.select(sites_t.c.site_id).where(sites_t.c.site_id == site.site_id)
            ).first()
            if existing:
                conn.execute(
                    sites_t.update()
                    .where(sites_t.c.site_id == site.site_id)
                    .values(doc=_dump(site))
                )
            else:
                conn.execute(sites_t.insert().values(site_id=site.site_id, doc=_dump(site)))
            self._append_events(conn, events)
        return site

    def get_site(self, site_id: str) -> Site | None:
        with self._engine.connect() as conn:
            row = conn.execute(
                sa.select(sites_t.c.doc).where(sites_t.c.site_id == site_id)
            ).first()
        return from_canonical(Site, json.loads(row.doc)) if row else None

    def list_sites(self) -> list[Site]:
        with self._engine.connect() as conn:
            rows = conn.execute(sa.select(sites_t.c.doc).order_by(sites_t.c.site_id)).all()
        return [from_canonical(Site, json.loads(r.doc)) for r in rows]

    # -- audit ------------------------------------------------------------

    def append_audit(self, events: Sequence[AuditEvent]) -> int:
        if not events:
            raise ValueError("append_audit requires at least one event")
        with self._write_lock, self._engine.begin() as conn:
            finalized = self._append_events(conn, events)
        return finalized[0].seq

    def read_audit(self, from_seq: int = 1, limit: int | None = None) -> list[AuditEvent]:
        query = (
            sa.select(audit_t.c.doc)
            .where(audit_t.c.seq >= max(from_seq, 1))
            .order_by(audit_t.c.seq)
        )
        if limit is not None:
            query = query.limit(limit)
        with self._engine.connect() as conn:
            rows = conn.execute(query).all()
        return [from_canonical(AuditEvent, json.loads(r.doc)) for r in rows]

    def audit_head(self) -> tuple[int, str]:
        with self._engine.connect() as conn:
            head = conn.execute(
                sa.select(audit_head_t.c.seq, audit_head_t.c.last_hash).where(
                    audit_head_t.c.id == 1
                )
            ).one()
        return head.seq, head.last_hash

    # -- notification outbox ---------------------------------------------------

    def get_notification(self, notification_id: str) -> Notification | None:
        with self._engine.connect() as conn:
            row = conn.execute(
                sa.select(notifications_t.c.doc).where(
                    notifications_t.c.notification_id == notification_id
                )
            ).first()
        return from_canonical(Notification, json.loads(row.doc)) if row else None

    def find_notification(
        self, patient_id: str, template: NotificationTemplate
    ) -> Notification | None:
        with self._engine.connect() as conn:
            row = conn.execute(
                sa.select(notifications_t.c.doc).where(
                    notifications_t.c.patient_id == patient_id,
                    notifications_t.c.template == template.value,
                )
            ).first()
        return from_canonical(Notification, json.loads(row.doc)) if row else None

    def list_notifications(
        self, status: NotificationStatus | None = None
    ) -> list[Notification]:
        query = sa.select(notifications_t.c.doc).order_by(notifications_t.c.notification_id)
        if status is not None:
            query = query.where(notifications_t.c.status == status.value)
        with self._engine.connect() as conn:
            rows = conn.execute(query).all()
        return [from_canonical(Notification, json.loads(r.doc)) for r in rows]

    def claim_notification(
        self, notification_id: str, expected_attempts: int
    ) -> Notification | None:
        from dataclasses import replace as _replace

        with self._write_lock, self._engine.begin() as conn:
            row = conn.execute(
                sa.select(notifications_t.c.doc).where(
                    notifications_t.c.notification_id == notification_id
                )
            ).first()
            if row is None:
                return None
            current = from_canonical(Notification, json.loads(row.doc))
            if (
                current.status is not NotificationStatus.PENDING
                or current.attempts != expected_attempts
            ):
                return None
            claimed = _replace(current, attempts=current.attempts + 1)
            result = conn.execute(
                notifications_t.update()
                .where(
                    notifications_t.c.notification_id == notification_id,
                    notifications_t.c.status == NotificationStatus.PENDING.value,
                    notifications_t.c.attempts == expected_attempts,
                )
                .values(attempts=claimed.attempts, doc=_dump(claimed))
            )
            if result.rowcount != 1:
                return None
            return claimed

    def finalize_notification(
        self,
        notification_id: str,
        status: NotificationStatus,
        sent_at,
        *,
        events: Sequence[AuditEvent] = (),
    ) -> Notification | None:
        from dataclasses import replace as _replace

        with self._write_lock, self._engine.begin() as conn:
            row = conn.execute(
                sa.select(notifications_t.c.doc).where(
                    notifications_t.c.notification_id == notification_id
                )
            ).first()
            if row is None:
                return None
            current = from_canonical(Notification, json.loads(row.doc))
            if current.status is not NotificationStatus.PENDING:
                return None
            done = _replace(current, status=status, sent_at=sent_at)
            result = conn.execute(
                notifications_t.update()
                .where(
                    notifications_t.c.notification_id == notification_id,
                    notifications_t.c.status == NotificationStatus.PENDING.value,
                )
                .values(status=done.status.value, doc=_dump(done))
            )
            if result.rowcount != 1:
                return None
            self._append_events(conn, events)
            return done

    # -- lifecycle ---------------------------------------------------------------

    def close(self) -> None:
        self._engine.dispose()
