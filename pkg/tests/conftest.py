"""Shared fixtures: a two-site study bed with one account per role."""

from __future__ import annotations

import itertools

import pytest

from trialdcc.model import (
    CriterionInputs,
    Role,
    UserAccount,
    WorkflowState,
)
from trialdcc.passwords import hash_password
from trialdcc.service import ServiceConfig, StudyService
from trialdcc.store.embedded import EmbeddedDriver

SCRYPT_N = 2**11  # keep hashing cheap in tests; format is self-describing
ADMIN_PW = "admin-pw-123"
STAFF_PW = "staff-pw-123"

_counter = itertools.count(1)


def unique_name(prefix: str) -> str:
    return f"{prefix}{next(_counter)}"


def eligible_inputs(**overrides) -> CriterionInputs:
    base = dict(
        dre_palpable=False,
        histology_aggressive=False,
        gleason_score=6,
        psa_ng_ml=4.5,
        positive_cores=2,
        total_cores=12,
    )
    base.update(overrides)
    return CriterionInputs(**base)


def ineligible_inputs() -> CriterionInputs:
    return eligible_inputs(dre_palpable=True)


class Bed:
    """A service over a fresh embedded store with a two-site population."""

    def __init__(self, data_dir, transport=None):
        self.store = EmbeddedDriver(data_dir, fsync=False)
        self.config = ServiceConfig(scrypt_n=SCRYPT_N)
        self.svc = StudyService(self.store, config=self.config, transport=transport)
        self.admin = self._seed_admin()
        self.site_a = self.svc.create_site("Site A", "coord-a@example.org", self.admin)
        self.site_b = self.svc.create_site("Site B", "coord-b@example.org", self.admin)
        self.coord_a = self._staff("coord-a", Role.COORDINATOR, self.site_a.site_id)
        self.coord_b = self._staff("coord-b", Role.COORDINATOR, self.site_b.site_id)
        self.inv_a = self._staff("inv-a", Role.INVESTIGATOR, self.site_a.site_id)
        self.inv_b = self._staff("inv-b", Role.INVESTIGATOR, self.site_b.site_id)
        self.res_a = self._staff("res-a", Role.RESEARCHER, self.site_a.site_id)

    def _seed_admin(self) -> UserAccount:
        admin = UserAccount(
            account_id="acct-admin",
            username="root",
            password_hash=hash_password(ADMIN_PW, n=SCRYPT_N),
            role=Role.DCC_ADMIN,
        )
        self.store.put_account(admin)
        return admin

    def _staff(self, username: str, role: Role, site_id: str) -> UserAccount:
        from dataclasses import replace

        account, _ = self.svc.create_account(username, role, site_id, self.admin)
        # Tests drive the service directly; give staff a known, rotated password.
        rotated = replace(
            account,
            password_hash=hash_password(STAFF_PW, n=SCRYPT_N),
            must_change_password=False,
        )
        self.store.put_account(rotated)
        return rotated

    # -- patient drivers -----------------------------------------------------

    def fill_all_forms(self, patient_id: str, actor, start_version: int) -> int:
        """Write every form to COMPLETE; returns the resulting version."""
        writes = {
            "DEMOGRAPHICS": {"full_name": "Pat Example", "date_of_birth": "1954-02-11"},
            "PSA_HISTORY": {"latest_psa_ng_ml": 4.2, "latest_psa_date": "2026-06-10"},
            "BIOPSY": {
                "biopsy_date": "2026-05-20",
                "gleason_score": 6,
                "positive_cores": 2,
                "total_cores": 12,
                "histology_aggressive": "NO",
            },
            "DRE": {"exam_date": "2026-05-01", "tumor_palpable": "NO"},
        }
        version = start_version
        for form, values in writes.items():
            record = self.svc.write_form(patient_id, form, values, version, actor)
            version = record.state_version
        return version

    def make_patient(self, target: WorkflowState, *, site=None, coord=None, inv=None):
        """Drive a fresh patient to the target state.

        Returns (record, ctx); ctx carries patient account details once
        credentials exist.
        """
        site = site or self.site_a
        coord = coord or self.coord_a
        inv = inv or self.inv_a
        ctx: dict = {}
        if target is WorkflowState.INELIGIBLE:
            record = self.svc.register_prospect(site.site_id, ineligible_inputs(), coord)
            assert record.workflow_state is WorkflowState.INELIGIBLE
            return record, ctx
        record = self.svc.register_prospect(site.site_id, eligible_inputs(), coord)
        if target is WorkflowState.SELF_SCREENED:
            return record, ctx
        if target is WorkflowState.WITHDRAWN:
            record = self.svc.withdraw(
                record.patient_id, "declined", record.state_version, coord
            )
            return record, ctx
        record = self.svc.record_consultation(record.patient_id, record.state_version, coord)
        if target is WorkflowState.CONSULTED:
            return record, ctx
        record = self.svc.physician_validate(
            record.patient_id, eligible_inputs(), record.state_version, inv
        )
        if target is WorkflowState.PHYSICIAN_VALIDATED:
            return record, ctx
        username = unique_name("patient")
        record, temp = self.svc.issue_credentials(
            record.patient_id, username, record.state_version, coord
        )
        ctx["username"] = username
        ctx["temp_password"] = temp
        ctx["account"] = self.store.get_account(record.account_id)
        if target is WorkflowState.CREDENTIALED:
            return record, ctx
        password = "rotated-pw-999"
        _, account = self.svc.patient_first_login(username, temp, password)
        ctx["password"] = password
        ctx["account"] = account
        record = self.store.get_patient(record.patient_id)
        version = self.fill_all_forms(record.patient_id, account, record.state_version)
        record = self.store.get_patient(record.patient_id)
        if target is WorkflowState.ENROLLMENT_IN_PROGRESS:
            return record, ctx
        record = self.svc.submit_enrollment(record.patient_id, version, account)
        assert record.workflow_state is WorkflowState.ENROLLED
        return record, ctx

    def close(self):
        self.store.close()


@pytest.fixture
def bed(tmp_path):
    b = Bed(tmp_path / "data")
    yield b
    b.close()
