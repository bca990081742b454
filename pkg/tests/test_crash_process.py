"""Durability under a real SIGKILL: acknowledged writes must survive."""

from __future__ import annotations

import os
import signal
import subprocess
import sys
import time
from pathlib import Path

from trialdcc.store.base import verify_chain
from trialdcc.store.embedded import EmbeddedDriver
from trialdcc.store.verify import verify_embedded_store

CHILD = Path(__file__).with_name("crash_child.py")


def test_sigkill_preserves_every_acknowledged_write(tmp_path):
    data_dir = tmp_path / "data"
    acked: dict[str, int] = {}
    for cycle in range(3):
        proc = subprocess.Popen(
            [sys.executable, str(CHILD), str(data_dir), "4000"],
            stdout=subprocess.PIPE,
            text=True,
        )
        deadline = time.monotonic() + 0.35 + 0.2 * cycle
        lines: list[str] = []
        while time.monotonic() < deadline:
            line = proc.stdout.readline()
            if not line:
                break
            lines.append(line.strip())
        if proc.poll() is None:
            os.kill(proc.pid, signal.SIGKILL)
        proc.wait()
        proc.stdout.close()
        for line in lines:
            _, pid, version = line.split()
            acked[pid] = max(acked.get(pid, 0), int(version))
        assert lines, "child produced no acknowledged writes before the kill"

        store = EmbeddedDriver(data_dir)  # recovery
        try:
            for pid, version in acked.items():
                record = store.get_patient(pid)
                assert record is not None, f"lost acknowledged patient {pid}"
                assert record.state_version >= version, (
                    f"lost acknowledged version of {pid}: "
                    f"{record.state_version} < {version}"
                )
            assert verify_chain(store.read_audit()) is None
            report = verify_embedded_store(data_dir, live=store)
            assert report.ok, report.errors
            # continue the next cycle from recovered versions
            acked = {p.patient_id: p.state_version for p in store.list_patients()}
        finally:
            store.close()
