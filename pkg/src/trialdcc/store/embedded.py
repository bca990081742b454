"""Single-node file-backed driver: write-ahead log plus periodic snapshots.

Layout of the data directory:

    wal.log            append-only commit frames (format below)
    snapshot-<N>.json  full logical state as of frame N, atomic rename
    store.lock         OS-level exclusive lock for the directory

WAL frame format (bit-exact): 4-byte big-endian payload length, 4-byte
big-endian CRC-32 of the payload, then the payload — one UTF-8 JSON object
per commit carrying every entity written and every audit event appended,
so a frame is the unit of atomicity. Frames are fsync'd before the write
is acknowledged. Recovery loads the newest parseable snapshot, replays
frames after it, and truncates a torn tail (an unacknowledged final frame
that fails the length or CRC check).
"""

from __future__ import annotations

import json
import os
import struct
import threading
import zlib
from pathlib import Path
from typing import Any, Sequence

from filelock import FileLock, Timeout

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
    from_canonical,
    to_canonical,
)
from .base import GENESIS_HASH, StoreDriver, chain_events, event_hash

_HEADER = struct.Struct(">II")

WAL_NAME = "wal.log"
SNAPSHOT_PREFIX = "snapshot-"
DEFAULT_SNAPSHOT_EVERY = 1000


def encode_frame(payload: dict[str, Any]) -> bytes:
    raw = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )
    return _HEADER.pack(len(raw), zlib.crc32(raw)) + raw


def read_frames(path: Path) -> tuple[list[dict[str, Any]], int]:
    """Scan the WAL; returns (frames, clean_length).

    clean_length is the byte offset after the last intact frame; anything
    beyond it is a torn tail from an interrupted write.
    """
    frames: list[dict[str, Any]] = []
    offset = 0
    if not path.exists():
        return frames, 0
    data = path.read_bytes()
    total = len(data)
    while offset + _HEADER.size <= total:
        length, crc = _HEADER.unpack_from(data, offset)
        start = offset + _HEADER.size
        end = start + length
        if end > total:
            break
        payload = data[start:end]
        if zlib.crc32(payload) != crc:
            break
        try:
            frames.append(json.loads(payload.decode("utf-8")))
        except (UnicodeDecodeError, json.JSONDecodeError):
            break
        offset = end
    return frames, offset


class _State:
    """In-memory logical state; mutated only while holding the driver lock."""

    def __init__(self) -> None:
        self.patients: dict[str, PatientRecord] = {}
        self.accounts: dict[str, UserAccount] = {}
        self.usernames: dict[str, str] = {}  # username -> account_id
        self.sites: dict[str, Site] = {}
        self.notifications: dict[str, Notification] = {}
        self.outbox_index: dict[tuple[str, str], str] = {}  # (patient, template) -> id
        self.audit: list[AuditEvent] = []
        self.head_hash: str = GENESIS_HASH
        self.frame: int = 0

    def apply_frame(self, frame: dict[str, Any]) -> None:
        self.frame = frame["frame"]
        for doc in frame.get("sites", ()):
            site = from_canonical(Site, doc)
            self.sites[site.site_id] = site
        for doc in frame.get("accounts", ()):
            account = from_canonical(UserAccount, doc)
            old = self.accounts.get(account.account_id)
            if old and old.username != account.username:
                self.usernames.pop(old.username, None)
            self.accounts[account.account_id] = account
            self.usernames[account.username] = account.account_id
        for doc in frame.get("patients", ()):
            record = from_canonical(PatientRecord, doc)
            self.patients[record.patient_id] = record
        for doc in frame.get("notifications", ()):
            row = from_canonical(Notification, doc)
            self.notifications[row.notification_id] = row
            self.outbox_index[(row.patient_id, row.template.value)] = row.notification_id
        for doc in frame.get("audit", ()):
            event = from_canonical(AuditEvent, doc)
            self.audit.append(event)
            self.head_hash = event_hash(event)

    @property
    def head_seq(self) -> int:
        return self.audit[-1].seq if self.audit else 0

    def to_snapshot(self) -> dict[str, Any]:
        return {
            "as_of_frame": self.frame,
            "as_of_seq": self.head_seq,
            "entities": {
                "sites": [to_canonical(s) for _, s in sorted(self.sites.items())],
                "accounts": [to_canonical(a) for _, a in sorted(self.accounts.items())],
                "patients": [to_canonical(p) for _, p in sorted(self.patients.items())],
                "notifications": [
                    to_canonical(n) for _, n in sorted(self.notifications.items())
                ],
                "audit": [to_canonical(e) for e in self.audit],
            },
        }

    def load_snapshot(self, snap: dict[str, Any]) -> None:
        self.frame = snap["as_of_frame"]
        entities = snap["entities"]
        for doc in entities.get("sites", ()):
            site = from_canonical(Site, doc)
            self.sites[site.site_id] = site
        for doc in entities.get("accounts", ()):
            account = from_canonical(UserAccount, doc)
            self.accounts[account.account_id] = account
            self.usernames[account.username] = account.account_id
        for doc in entities.get("patients", ()):
            record = from_canonical(PatientRecord, doc)
            self.patients[record.patient_id] = record
        for doc in entities.get("notifications", ()):
            row = from_canonical(Notification, doc)
            self.notifications[row.notification_id] = row
            self.outbox_index[(row.patient_id, row.template.value)] = row.notification_id
        for doc in entities.get("audit", ()):
            event = from_canonical(AuditEvent, doc)
            self.audit.append(event)
        self.head_hash = event_hash(self.audit[-1]) if self.audit else GENESIS_HASH


def replay_state(frames: Sequence[dict[str, Any]]) -> _State:
    """Rebuild logical state purely from WAL frames (no snapshot)."""
    state = _State()
    for frame in frames:
        state.apply_frame(frame)
    return state


class EmbeddedDriver(StoreDriver):
    driver_name = "embedded"

    def __init__(
        self,
        data_dir: str | os.PathLike,
        *,
        snapshot_every: int = DEFAULT_SNAPSHOT_EVERY,
        fsync: bool = True,
        lock_timeout: float = 0.0,
    ):
        self._dir = Path(data_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._snapshot_every = snapshot_every
        self._fsync = fsync
        self._lock = threading.RLock()
        self._flock = FileLock(str(self._dir / "store.lock"))
        try:
            self._flock.acquire(timeout=lock_timeout)
        except Timeout:
            raise StoreIOError(
                f"data directory {self._dir} is locked by another process"
            )
        self._wal_path = self._dir / WAL_NAME
        self._state = _State()
        self._recover()
        self._fh = open(self._wal_path, "ab")
        self._frames_since_snapshot = 0

    # -- recovery ------------------------------------------------------------

    def _latest_snapshot(self) -> dict[str, Any] | None:
        best: tuple[int, dict[str, Any]] | None = None
        for path in self._dir.glob(f"{SNAPSHOT_PREFIX}*.json"):
            try:
                snap = json.loads(path.read_text())
                frame = int(snap["as_of_frame"])
            except (json.JSONDecodeError, KeyError, ValueError):
                continue  # half-written snapshot; WAL replay covers it
            if best is None or frame > best[0]:
                best = (frame, snap)
        return best[1] if best else None

    def _recover(self) -> None:
        frames, clean_len = read_frames(self._wal_path)
        if self._wal_path.exists() and clean_len < self._wal_path.stat().st_size:
            with open(self._wal_path, "r+b") as fh:
                fh.truncate(clean_len)
        snap = self._latest_snapshot()
        if snap:
            self._state.load_snapshot(snap)
        for frame in frames:
            if frame["frame"] > self._state.frame:
                self._state.apply_frame(frame)

    # -- commit ---------------------------------------------------------------

    def _commit(
        self,
        *,
        sites: Sequence[Site] = (),
        accounts: Sequence[UserAccount] = (),
        patients: Sequence[PatientRecord] = (),
        notifications: Sequence[Notification] = (),
        events: Sequence[AuditEvent] = (),
    ) -> list[AuditEvent]:
        """Append one atomic frame and apply it. Caller holds the lock."""
        finalized = chain_events(events, self._state.head_seq, self._state.head_hash)
        frame = {
            "frame": self._state.frame + 1,
            "sites": [to_canonical(s) for s in sites],
            "accounts": [to_canonical(a) for a in accounts],
            "patients": [to_canonical(p) for p in patients],
            "notifications": [to_canonical(n) for n in notifications],
            "audit": [to_canonical(e) for e in finalized],
        }
        try:
            self._fh.write(encode_frame(frame))
            self._fh.flush()
            if self._fsync:
                os.fsync(self._fh.fileno())
        except OSError as exc:
            raise StoreIOError(f"WAL append failed: {exc}")
        self._state.apply_frame(frame)
        self._frames_since_snapshot += 1
        if self._snapshot_every and self._frames_since_snapshot >= self._snapshot_every:
            self._write_snapshot()
        return finalized

    def _write_snapshot(self) -> None:
        snap = self._state.to_snapshot()
        path = self._dir / f"{SNAPSHOT_PREFIX}{snap['as_of_frame']}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(snap, sort_keys=True))
        os.replace(tmp, path)
        self._frames_since_snapshot = 0

    # -- patients ---------------------------------------------------------------

    def put_patient_cas(
        self,
        record: PatientRecord,
        expected_version: int,
        *,
        events: Sequence[AuditEvent] = (),
        notifications: Sequence[Notification] = (),
        accounts: Sequence[UserAccount] = (),
    ) -> PatientRecord:
        with self._lock:
            current = self._state.patients.get(record.patient_id)
            current_version = current.state_version if current else 0
            if current_version != expected_version:
                raise VersionConflictError(
                    f"patient {record.patient_id}: expected version {expected_version}, "
                    f"stored {current_version}"
                )
            if record.state_version <= expected_version:
                raise VersionConflictError(
                    f"patient {record.patient_id}: new version {record.state_version} "
                    f"must exceed {expected_version}"
                )
            for account in accounts:
                holder = self._state.usernames.get(account.username)
                if holder is not None and holder != account.account_id:
                    raise DuplicateError(f"username {account.username!r} already taken")
            fresh = [
                n
                for n in notifications
                if (n.patient_id, n.template.value) not in self._state.outbox_index
            ]
            self._commit(
                patients=[record], notifications=fresh, accounts=accounts, events=events
            )
            return record

    def get_patient(self, patient_id: str) -> PatientRecord | None:
        with self._lock:
            return self._state.patients.get(patient_id)

    def list_patients(
        self, site_id: str | None = None, state: WorkflowState | None = None
    ) -> list[PatientRecord]:
        with self._lock:
            records = [
                r
                for _, r in sorted(self._state.patients.items())
                if (site_id is None or r.site_id == site_id)
                and (state is None or r.workflow_state is state)
            ]
            return records

    # -- accounts ---------------------------------------------------------------

    def put_account(
        self, account: UserAccount, *, events: Sequence[AuditEvent] = ()
    ) -> UserAccount:
        with self._lock:
            holder = self._state.usernames.get(account.username)
            if holder is not None and holder != account.account_id:
                raise DuplicateError(f"username {account.username!r} already taken")
            self._commit(accounts=[account], events=events)
            return account

    def get_account(self, account_id: str) -> UserAccount | None:
        with self._lock:
            return self._state.accounts.get(account_id)

    def get_account_by_username(self, username: str) -> UserAccount | None:
        with self._lock:
            account_id = self._state.usernames.get(username)
            return self._state.accounts.get(account_id) if account_id else None

    def list_accounts(self) -> list[UserAccount]:
        with self._lock:
            return [a for _, a in sorted(self._state.accounts.items())]

    # -- sites ---------------------------------------------------------------

    def put_site(self, site: Site, *, events: Sequence[AuditEvent] = ()) -> Site:
        with self._lock:
            self._commit(sites=[site], events=events)
            return site

    def get_site(self, site_id: str) -> Site | None:
        with self._lock:
            return self._state.sites.get(site_id)

    def list_sites(self) -> list[Site]:
        with self._lock:
            return [s for _, s in sorted(self._state.sites.items())]

    # -- audit ---------------------------------------------------------------

    def append_audit(self, events: Sequence[AuditEvent]) -> int:
        if not events:
            raise ValueError("append_audit requires at least one event")
        with self._lock:
            first = self._state.head_seq + 1
            self._commit(events=events)
            return first

    def read_audit(self, from_seq: int = 1, limit: int | None = None) -> list[AuditEvent]:
        with self._lock:
            start = max(from_seq, 1) - 1
            events = self._state.audit[start:]
            return events[:limit] if limit is not None else list(events)

    def audit_head(self) -> tuple[int, str]:
        with self._lock:
            return self._state.head_seq, self._state.head_hash

    # -- notification outbox -----------------------------------------------------

    def get_notification(self, notification_id: str) -> Notification | None:
        with self._lock:
            return self._state.notifications.get(notification_id)

    def find_notification(
        self, patient_id: str, template: NotificationTemplate
    ) -> Notification | None:
        with self._lock:
            nid = self._state.outbox_index.get((patient_id, template.value))
            return self._state.notifications.get(nid) if nid else None

    def list_notifications(
        self, status: NotificationStatus | None = None
    ) -> list[Notification]:
        with self._lock:
            return [
                n
                for _, n in sorted(self._state.notifications.items())
                if status is None or n.status is status
            ]

    def claim_notification(
        self, notification_id: str, expected_attempts: int
    ) -> Notification | None:
        from dataclasses import replace as _replace

        with self._lock:
            row = self._state.notifications.get(notification_id)
            if (
                row is None
                or row.status is not NotificationStatus.PENDING
                or row.attempts != expected_attempts
            ):
                return None
            claimed = _replace(row, attempts=row.attempts + 1)
            self._commit(notifications=[claimed])
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

        with self._lock:
            row = self._state.notifications.get(notification_id)
            if row is None or row.status is not NotificationStatus.PENDING:
                return None
            done = _replace(row, status=status, sent_at=sent_at)
            self._commit(notifications=[done], events=events)
            return done

    # -- lifecycle ---------------------------------------------------------------

    def close(self) -> None:
        with self._lock:
            if self._fh.closed:
                return
            if self._frames_since_snapshot:
                self._write_snapshot()
            self._fh.close()
        self._flock.release()

    # -- introspection used by verify/migrate ----------------------------------

    @property
    def data_dir(self) -> Path:
        return self._dir

    def dump_state(self) -> dict[str, Any]:
        with self._lock:
            return self._state.to_snapshot()


def wal_state(data_dir: str | os.PathLike) -> tuple[dict[str, Any], int]:
    """Replay the full WAL from scratch; returns (snapshot-shaped state, frames)."""
    frames, _ = read_frames(Path(data_dir) / WAL_NAME)
    state = replay_state(frames)
    return state.to_snapshot(), len(frames)
