"""Integrity verification and the one-way EMBEDDED -> RELATIONAL copy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import sqlalchemy as sa

from ..model import AuditEvent, from_canonical
from .base import verify_chain
from .embedded import (
    SNAPSHOT_PREFIX,
    WAL_NAME,
    EmbeddedDriver,
    read_frames,
    replay_state,
)


@dataclass
class VerifyReport:
    ok: bool
    frames: int = 0
    events: int = 0
    first_divergent_seq: int | None = None
    errors: list[str] = field(default_factory=list)


def verify_embedded_store(
    data_dir: str | Path, live: EmbeddedDriver | None = None
) -> VerifyReport:
    """Replay the full WAL, verify the hash chain, and cross-check snapshots.

    When a live driver is supplied its current state must equal the replay.
    """
    data_dir = Path(data_dir)
    report = VerifyReport(ok=True)
    wal_path = data_dir / WAL_NAME
    frames, clean_len = read_frames(wal_path)
    if wal_path.exists() and clean_len < wal_path.stat().st_size:
        report.errors.append(
            f"wal has {wal_path.stat().st_size - clean_len} trailing bytes past the "
            "last intact frame (torn tail; recovery will truncate)"
        )
    report.frames = len(frames)
    replayed = replay_state(frames)
    report.events = len(replayed.audit)

    bad = verify_chain(replayed.audit)
    if bad is not None:
        report.ok = False
        report.first_divergent_seq = bad
        report.errors.append(f"audit hash chain broken at seq {bad}")
        return report

    for snap_path in sorted(data_dir.glob(f"{SNAPSHOT_PREFIX}*.json")):
        try:
            snap = json.loads(snap_path.read_text())
        except json.JSONDecodeError:
            report.errors.append(f"{snap_path.name}: unreadable (ignored by recovery)")
            continue
        upto = [f for f in frames if f["frame"] <= snap["as_of_frame"]]
        expected = replay_state(upto).to_snapshot()
        if expected != snap:
            report.ok = False
            events = [from_canonical(AuditEvent, e) for e in snap["entities"]["audit"]]
            mismatch = _first_divergence(expected["entities"]["audit"], snap["entities"]["audit"])
            report.first_divergent_seq = mismatch if mismatch is not None else (
                events[0].seq if events else 0
            )
            report.errors.append(
                f"{snap_path.name}: snapshot diverges from WAL replay at frame "
                f"{snap['as_of_frame']}"
            )
            return report

    if live is not None:
        current = live.dump_state()
        replay_now = replayed.to_snapshot()
        # Frame counters may differ when recovery skipped pre-snapshot frames;
        # logical content is what must match.
        if current["entities"] != replay_now["entities"]:
            report.ok = False
            mismatch = _first_divergence(
                replay_now["entities"]["audit"], current["entities"]["audit"]
            )
            report.first_divergent_seq = mismatch or 0
            report.errors.append("live state diverges from full WAL replay")
    return report


def _first_divergence(expected: list[dict], actual: list[dict]) -> int | None:
    for i, (e, a) in enumerate(zip(expected, actual)):
        if e != a:
            return e.get("seq", i + 1)
    if len(expected) != len(actual):
        shorter = min(len(expected), len(actual))
        longer = expected if len(expected) > len(actual) else actual
        return longer[shorter].get("seq", shorter + 1)
    return None


def migrate_embedded_to_relational(src: EmbeddedDriver, url: str) -> dict[str, int]:
    """Copy the full logical state into an empty relational database.

    Audit events are copied verbatim (seqs and hashes preserved) so the
    chain remains verifiable after the move. Refuses a non-empty target.
    """
    from .relational import (
        RelationalDriver,
        accounts_t,
        audit_head_t,
        audit_t,
        notifications_t,
        patients_t,
        sites_t,
    )

    state = src.dump_state()
    entities = state["entities"]
    dst = RelationalDriver(url, create=True)
    try:
        head_seq, _ = dst.audit_head()
        if head_seq != 0 or dst.list_sites() or dst.list_accounts() or dst.list_patients():
            raise ValueError("migration target must be empty")
        with dst._engine.begin() as conn:
            for doc in entities["sites"]:
                conn.execute(
                    sites_t.insert().values(
                        site_id=doc["site_id"], doc=json.dumps(doc, sort_keys=True,
                                                               separators=(",", ":"))
                    )
                )
            for doc in entities["accounts"]:
                conn.execute(
                    accounts_t.insert().values(
                        account_id=doc["account_id"],
                        username=doc["username"],
                        doc=json.dumps(doc, sort_keys=True, separators=(",", ":")),
                    )
                )
            for doc in entities["patients"]:
                conn.execute(
                    patients_t.insert().values(
                        patient_id=doc["patient_id"],
                        site_id=doc["site_id"],
                        workflow_state=doc["workflow_state"],
                        state_version=doc["state_version"],
                        doc=json.dumps(doc, sort_keys=True, separators=(",", ":")),
                    )
                )
            for doc in entities["notifications"]:
                conn.execute(
                    notifications_t.insert().values(
                        notification_id=doc["notification_id"],
                        patient_id=doc["patient_id"],
                        template=doc["template"],
                        status=doc["status"],
                        attempts=doc["attempts"],
                        doc=json.dumps(doc, sort_keys=True, separators=(",", ":")),
                    )
                )
            last_seq, last_hash = 0, None
            for doc in entities["audit"]:
                conn.execute(
                    audit_t.insert().values(
                        seq=doc["seq"],
                        at=doc["at"],
                        actor=doc["actor"],
                        action=doc["action"],
                        subject=doc["subject"],
                        doc=json.dumps(doc, sort_keys=True, separators=(",", ":")),
                    )
                )
                last_seq = doc["seq"]
            if last_seq:
                from .base import event_hash

                last_event = from_canonical(AuditEvent, entities["audit"][-1])
                last_hash = event_hash(last_event)
                conn.execute(
                    audit_head_t.update()
                    .where(audit_head_t.c.id == 1)
                    .values(seq=last_seq, last_hash=last_hash)
                )
        return {
            "sites": len(entities["sites"]),
            "accounts": len(entities["accounts"]),
            "patients": len(entities["patients"]),
            "notifications": len(entities["notifications"]),
            "audit_events": len(entities["audit"]),
        }
    finally:
        dst.close()
