"""Application service: every operation of the coordinating center.

One class wires the pure pieces (eligibility rules, workflow table,
capability matrix) to the store, the session registry, and the
notification outbox. The HTTP layer and the admin CLI are both thin
clients of this class.

Ordering of checks on patient operations: authorization (policy), then
role (transition table), then workflow state, then version, then
operation guards. Any failure leaves the store untouched. Every denial
and every cross-site allow is audited; successful reads of patient data
audit READ events; mutations commit their audit events atomically with
the write.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Any, Callable

from . import forms as forms_mod
from . import workflow
from .access import (
    Action,
    CapabilityMatrix,
    Decision,
    Subject,
    authorize,
    default_matrix,
    deidentify_patient,
)
from .eligibility import RuleSet, default_ruleset, evaluate, failed_criteria
from .errors import (
    AccountLockedError,
    AuthenticationError,
    AuthorizationDenied,
    DuplicateError,
    NotFoundError,
    PreconditionError,
    TransitionError,
    ValidationFailure,
    VersionConflictError,
)
from .forms import SchemaRegistry
from .ids import new_id, new_session_token, new_temp_password
from .model import (
    ANONYMOUS_ACTOR,
    AssessmentKind,
    AuditAction,
    AuditEvent,
    BiospecimenRecord,
    CriterionInputs,
    FormName,
    NotificationTemplate,
    Overall,
    PatientRecord,
    Role,
    Session,
    Site,
    SpecimenKind,
    UserAccount,
    WorkflowState,
    utc_now,
    validate,
)
from .notifier import DrainReport, Outbox, Transport, TransitionContext
from .passwords import DEFAULT_N, check_password, hash_password
from .store.base import StoreDriver

# Capability action -> audit action for denial records and read audits.
_AUDIT_FOR: dict[Action, AuditAction] = {
    Action.READ: AuditAction.READ,
    Action.READ_PATIENT: AuditAction.READ,
    Action.LIST_PATIENTS: AuditAction.READ,
    Action.EXPORT: AuditAction.EXPORT,
    Action.STATE_TRANSITION: AuditAction.STATE_TRANSITION,
    Action.FORM_WRITE: AuditAction.FORM_WRITE,
    Action.CREDENTIAL_ISSUED: AuditAction.CREDENTIAL_ISSUED,
    Action.PASSWORD_CHANGED: AuditAction.PASSWORD_CHANGED,
    Action.MANAGE_SITES: AuditAction.ADMIN_CHANGE,
    Action.MANAGE_USERS: AuditAction.ADMIN_CHANGE,
    Action.ADMIN_CHANGE: AuditAction.ADMIN_CHANGE,
    Action.LOGIN: AuditAction.LOGIN,
    Action.LOGIN_FAILED: AuditAction.LOGIN_FAILED,
    Action.NOTIFY_SENT: AuditAction.NOTIFY_SENT,
}


@dataclass
class ServiceConfig:
    session_ttl_seconds: int = 1800
    lockout_threshold: int = 5
    max_notify_attempts: int = 10
    min_password_length: int = 8
    scrypt_n: int = DEFAULT_N
    next_steps: dict[str, str] = field(
        default_factory=lambda: {
            "ELIGIBLE": (
                "Based on the answers provided you appear to meet the study's "
                "low-risk criteria. Contact a participating site to schedule an "
                "initial physician consultation."
            ),
            "INELIGIBLE": (
                "Based on the answers provided you do not appear to meet the "
                "study's criteria. Please discuss management options with your "
                "physician."
            ),
        }
    )


class SessionManager:
    """Server-side session registry; idle expiry, revocable."""

    def __init__(self, ttl_seconds: int, clock: Callable[[], datetime] = utc_now):
        self._ttl = ttl_seconds
        self._clock = clock
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, account_id: str) -> Session:
        now = self._clock()
        session = Session(
            token=new_session_token(),
            account_id=account_id,
            created_at=now,
            expires_at=now + timedelta(seconds=self._ttl),
        )
        with self._lock:
            self._sessions[session.token] = session
        return session

    def resolve(self, token: str) -> Session:
        now = self._clock()
        with self._lock:
            session = self._sessions.get(token)
            if session is None:
                raise AuthenticationError("no such session")
            if session.expires_at <= now:
                del self._sessions[token]
                raise AuthenticationError("session expired")
            refreshed = replace(session, expires_at=now + timedelta(seconds=self._ttl))
            self._sessions[token] = refreshed
            return refreshed

    def revoke(self, token: str) -> None:
        with self._lock:
            self._sessions.pop(token, None)

    def revoke_account(self, account_id: str) -> None:
        with self._lock:
            for token in [t for t, s in self._sessions.items() if s.account_id == account_id]:
                del self._sessions[token]


class StudyService:
    def __init__(
        self,
        store: StoreDriver,
        *,
        self_screen_rules: RuleSet | None = None,
        validation_rules: RuleSet | None = None,
        schemas: SchemaRegistry | None = None,
        matrix: CapabilityMatrix | None = None,
        transport: Transport | None = None,
        config: ServiceConfig | None = None,
        clock: Callable[[], datetime] = utc_now,
        id_fn: Callable[[], str] = new_id,
    ):
        self.store = store
        self.config = config or ServiceConfig()
        # The self-screen and physician validation default to the same
        # criteria; deployments may load distinct rule files per kind.
        self.self_screen_rules = self_screen_rules or default_ruleset()
        self.validation_rules = validation_rules or self.self_screen_rules
        self.schemas = schemas or forms_mod.default_schemas()
        self.matrix = matrix or default_matrix()
        self.transport = transport
        self.clock = clock
        self.id_fn = id_fn
        self.sessions = SessionManager(self.config.session_ttl_seconds, clock)
        self.outbox = Outbox(store, max_attempts=self.config.max_notify_attempts)

    # ------------------------------------------------------------------
    # audit helpers
    # ------------------------------------------------------------------

    def _event(
        self,
        action: AuditAction,
        actor: str,
        subject: str,
        detail: dict[str, Any] | None = None,
    ) -> AuditEvent:
        return AuditEvent(
            seq=0,
            at=self.clock(),
            actor=actor,
            action=action,
            subject=subject,
            detail=detail or {},
        )

    def _audit(self, *events: AuditEvent) -> None:
        self.store.append_audit(list(events))

    def _authorize(
        self,
        actor: UserAccount,
        action: Action,
        subject: Subject,
        *,
        conceal: bool = False,
    ) -> Decision:
        decision = authorize(actor, action, subject, self.matrix)
        if not decision.allow:
            audit_subject = subject.patient_id or subject.site_id or subject.account_id
            self._audit(
                self._event(
                    _AUDIT_FOR[action],
                    actor.account_id,
                    audit_subject or actor.account_id,
                    {"decision": "DENY", "reason": decision.reason, "action": action.value},
                )
            )
            raise AuthorizationDenied(
                f"{action.value} denied: {decision.reason}",
                reason=decision.reason or "denied",
                conceal=conceal and decision.reason in ("cross_site", "own_record_only"),
            )
        return decision

    def _role_gate(self, operation: str, actor: UserAccount, subject: Subject) -> None:
        if not workflow.check_role(operation, actor.role):
            audit_subject = subject.patient_id or subject.site_id or actor.account_id
            self._audit(
                self._event(
                    AuditAction.STATE_TRANSITION,
                    actor.account_id,
                    audit_subject,
                    {"decision": "DENY", "reason": "role_not_permitted", "operation": operation},
                )
            )
            raise AuthorizationDenied(
                f"role {actor.role.value} may not perform {operation}",
                reason="role_not_permitted",
            )

    # ------------------------------------------------------------------
    # authentication
    # ------------------------------------------------------------------

    def login(self, username: str, password: str) -> tuple[Session, UserAccount]:
        account = self.store.get_account_by_username(username)
        if account is None:
            self._audit(
                self._event(
                    AuditAction.LOGIN_FAILED, ANONYMOUS_ACTOR, username, {"reason": "unknown_user"}
                )
            )
            raise AuthenticationError("invalid credentials")
        if account.disabled:
            self._audit(
                self._event(
                    AuditAction.LOGIN_FAILED,
                    account.account_id,
                    account.account_id,
                    {"reason": "locked"},
                )
            )
            raise AccountLockedError("account is locked; ask a coordinator to reset it")
        if not check_password(password, account.password_hash):
            failed = account.failed_logins + 1
            locked = failed >= self.config.lockout_threshold
            updated = replace(account, failed_logins=failed, disabled=locked)
            self.store.put_account(
                updated,
                events=[
                    self._event(
                        AuditAction.LOGIN_FAILED,
                        account.account_id,
                        account.account_id,
                        {"reason": "bad_password", "failed_logins": failed, "locked": locked},
                    )
                ],
            )
            if locked:
                self.sessions.revoke_account(account.account_id)
                raise AccountLockedError("account locked after repeated failures")
            raise AuthenticationError("invalid credentials")
        if account.failed_logins:
            account = replace(account, failed_logins=0)
            self.store.put_account(account)
        session = self.sessions.create(account.account_id)
        self._audit(
            self._event(AuditAction.LOGIN, account.account_id, account.account_id, {})
        )
        return session, account

    def logout(self, token: str) -> None:
        self.sessions.revoke(token)

    def authenticate(self, token: str) -> UserAccount:
        session = self.sessions.resolve(token)
        account = self.store.get_account(session.account_id)
        if account is None or account.disabled:
            self.sessions.revoke(token)
            raise AuthenticationError("account unavailable")
        return account

    def change_password(
        self, account: UserAccount, old_password: str, new_password: str
    ) -> UserAccount:
        """Self-service rotation; a patient's first rotation also advances
        their record from CREDENTIALED to ENROLLMENT_IN_PROGRESS."""
        if not check_password(old_password, account.password_hash):
            raise AuthenticationError("current password incorrect")
        if len(new_password) < self.config.min_password_length:
            raise ValidationFailure(
                f"new password must have at least {self.config.min_password_length} characters"
            )
        if check_password(new_password, account.password_hash):
            raise ValidationFailure("new password must differ from the current one")
        updated = replace(
            account,
            password_hash=hash_password(new_password, n=self.config.scrypt_n),
            must_change_password=False,
            failed_logins=0,
        )
        pw_event = self._event(
            AuditAction.PASSWORD_CHANGED, account.account_id, account.account_id, {}
        )
        if account.role is Role.PATIENT and account.patient_id:
            record = self.store.get_patient(account.patient_id)
            if record is not None and record.workflow_state is WorkflowState.CREDENTIALED:
                now = self.clock()
                advanced = workflow.advance(
                    record, WorkflowState.ENROLLMENT_IN_PROGRESS, now
                )
                self.store.put_patient_cas(
                    advanced,
                    record.state_version,
                    accounts=[updated],
                    events=[
                        pw_event,
                        workflow.transition_event(record, advanced, account.account_id, now),
                    ],
                )
                return updated
        self.store.put_account(updated, events=[pw_event])
        return updated

    def patient_first_login(
        self, username: str, temp_password: str, new_password: str
    ) -> tuple[Session, UserAccount]:
        """Fig-style first sign-in: temp credential check, forced rotation,
        and the CREDENTIALED -> ENROLLMENT_IN_PROGRESS move, atomically."""
        session, account = self.login(username, temp_password)
        if account.role is not Role.PATIENT or not account.patient_id:
            raise PreconditionError("first-login flow is for patient accounts")
        if not account.must_change_password:
            raise PreconditionError("temporary password already rotated")
        record = self.store.get_patient(account.patient_id)
        if record is None:
            raise NotFoundError("patient record missing")
        workflow.check_state(record, "patient_first_login")
        updated = self.change_password(account, temp_password, new_password)
        return session, updated

    # ------------------------------------------------------------------
    # anonymous eligibility self-check
    # ------------------------------------------------------------------

    def self_check(self, inputs: CriterionInputs) -> dict[str, Any]:
        """Anonymous screen: returns the verdict and configured next steps;
        persists nothing identifying, audits an anonymous event."""
        assessment = evaluate(
            inputs,
            self.self_screen_rules,
            AssessmentKind.SELF_SCREEN,
            now=self.clock(),
            id_fn=self.id_fn,
        )
        failed = failed_criteria(assessment)
        self._audit(
            self._event(
                AuditAction.READ,
                ANONYMOUS_ACTOR,
                "self_check",
                {"kind": "self_check", "overall": assessment.overall.value, "failed": failed},
            )
        )
        return {
            "overall": assessment.overall.value,
            "verdicts": dict(assessment.verdicts),
            "failed": failed,
            "next_steps": self.config.next_steps[assessment.overall.value],
            "ruleset_version": self.self_screen_rules.version,
        }

    # ------------------------------------------------------------------
    # patient workflow operations
    # ------------------------------------------------------------------

    def _load_for_operation(
        self,
        patient_id: str,
        operation: str,
        action: Action,
        actor: UserAccount,
    ) -> PatientRecord:
        record = self.store.get_patient(patient_id)
        if record is None:
            raise NotFoundError(f"no patient {patient_id}")
        subject = Subject(site_id=record.site_id, patient_id=record.patient_id)
        self._authorize(actor, action, subject, conceal=True)
        self._role_gate(operation, actor, subject)
        return record

    @staticmethod
    def _check_version(record: PatientRecord, expected_version: int) -> None:
        if expected_version != record.state_version:
            raise VersionConflictError(
                f"expected version {expected_version}, stored {record.state_version}"
            )

    def register_prospect(
        self, site_id: str, inputs: CriterionInputs, actor: UserAccount
    ) -> PatientRecord:
        site = self.store.get_site(site_id)
        if site is None:
            raise NotFoundError(f"no site {site_id}")
        if not site.active:
            raise PreconditionError(f"site {site_id} is deactivated")
        subject = Subject(site_id=site_id)
        self._authorize(actor, Action.STATE_TRANSITION, subject)
        self._role_gate("register_prospect", actor, subject)
        assessment = evaluate(
            inputs,
            self.self_screen_rules,
            AssessmentKind.SELF_SCREEN,
            now=self.clock(),
            id_fn=self.id_fn,
        )
        now = self.clock()
        state = (
            WorkflowState.SELF_SCREENED
            if assessment.overall is Overall.ELIGIBLE
            else WorkflowState.INELIGIBLE
        )
        record = PatientRecord(
            patient_id=self.id_fn(),
            site_id=site_id,
            workflow_state=state,
            state_version=1,
            created_at=now,
            updated_at=now,
            assessments=(assessment,),
            forms=forms_mod.empty_forms(self.schemas),
        )
        event = workflow.transition_event(
            None, record, actor.account_id, now, screen_overall=assessment.overall.value
        )
        return self.store.put_patient_cas(record, 0, events=[event])

    def record_consultation(
        self, patient_id: str, expected_version: int, actor: UserAccount
    ) -> PatientRecord:
        record = self._load_for_operation(
            patient_id, "record_consultation", Action.STATE_TRANSITION, actor
        )
        workflow.check_state(record, "record_consultation")
        self._check_version(record, expected_version)
        now = self.clock()
        advanced = workflow.advance(record, WorkflowState.CONSULTED, now)
        return self.store.put_patient_cas(
            advanced,
            expected_version,
            events=[workflow.transition_event(record, advanced, actor.account_id, now)],
        )

    def physician_validate(
        self,
        patient_id: str,
        inputs: CriterionInputs,
        expected_version: int,
        actor: UserAccount,
        *,
        kind: AssessmentKind = AssessmentKind.PHYSICIAN_VALIDATION,
    ) -> PatientRecord:
        record = self._load_for_operation(
            patient_id, "physician_validate", Action.STATE_TRANSITION, actor
        )
        if kind is not AssessmentKind.PHYSICIAN_VALIDATION:
            raise PreconditionError(
                "physician validation requires a PHYSICIAN_VALIDATION assessment"
            )
        workflow.check_state(record, "physician_validate")
        self._check_version(record, expected_version)
        assessment = evaluate(
            inputs,
            self.validation_rules,
            kind,
            assessor=actor.account_id,
            now=self.clock(),
            id_fn=self.id_fn,
        )
        now = self.clock()
        to_state = (
            WorkflowState.PHYSICIAN_VALIDATED
            if assessment.overall is Overall.ELIGIBLE
            else WorkflowState.INELIGIBLE
        )
        advanced = workflow.advance(
            record, to_state, now, assessments=record.assessments + (assessment,)
        )
        return self.store.put_patient_cas(
            advanced,
            expected_version,
            events=[
                workflow.transition_event(
                    record, advanced, actor.account_id, now,
                    validation_overall=assessment.overall.value,
                )
            ],
        )

    def issue_credentials(
        self, patient_id: str, username: str, expected_version: int, actor: UserAccount
    ) -> tuple[PatientRecord, str]:
        """Create the patient's portal account; the temporary password is
        returned exactly once and never persisted or audited in clear."""
        record = self._load_for_operation(
            patient_id, "issue_credentials", Action.CREDENTIAL_ISSUED, actor
        )
        workflow.check_state(record, "issue_credentials")
        self._check_version(record, expected_version)
        if not username.strip():
            raise ValidationFailure("username must be non-empty")
        if self.store.get_account_by_username(username) is not None:
            raise DuplicateError(f"username {username!r} already taken")
        temp_password = new_temp_password()
        account = UserAccount(
            account_id=self.id_fn(),
            username=username,
            password_hash=hash_password(temp_password, n=self.config.scrypt_n),
            role=Role.PATIENT,
            site_id=record.site_id,
            patient_id=record.patient_id,
            must_change_password=True,
        )
        now = self.clock()
        advanced = workflow.advance(
            record, WorkflowState.CREDENTIALED, now, account_id=account.account_id
        )
        stored = self.store.put_patient_cas(
            advanced,
            expected_version,
            accounts=[account],
            events=[
                workflow.transition_event(record, advanced, actor.account_id, now),
                self._event(
                    AuditAction.CREDENTIAL_ISSUED,
                    actor.account_id,
                    account.account_id,
                    {"patient_id": record.patient_id, "username": username},
                ),
            ],
        )
        return stored, temp_password

    def write_form(
        self,
        patient_id: str,
        form_name: FormName | str,
        values: dict[str, Any],
        expected_version: int,
        actor: UserAccount,
    ) -> PatientRecord:
        record = self._load_for_operation(
            patient_id, "write_form", Action.FORM_WRITE, actor
        )
        workflow.check_state(record, "write_form")
        self._check_version(record, expected_version)
        try:
            name = FormName(form_name)
        except ValueError:
            raise ValidationFailure(f"unknown form {form_name!r}")
        schema = self.schemas[name]
        current = record.forms.get(name) or forms_mod.empty_forms(self.schemas)[name]
        now = self.clock()
        updated_form = forms_mod.apply_write(current, values, schema, actor.account_id, now)
        new_forms = dict(record.forms)
        new_forms[name] = updated_form
        touched = workflow.touch(record, now, forms=new_forms)
        event = self._event(
            AuditAction.FORM_WRITE,
            actor.account_id,
            record.patient_id,
            {
                "patient_id": record.patient_id,
                "form": name.value,
                "fields": sorted(values.keys()),  # names only, never values
                "status": updated_form.status.value,
                "version": touched.state_version,
            },
        )
        return self.store.put_patient_cas(touched, expected_version, events=[event])

    def submit_enrollment(
        self, patient_id: str, expected_version: int, actor: UserAccount
    ) -> PatientRecord:
        record = self._load_for_operation(
            patient_id, "submit_enrollment", Action.STATE_TRANSITION, actor
        )
        workflow.check_state(record, "submit_enrollment")
        self._check_version(record, expected_version)
        incomplete = forms_mod.incomplete_forms(record.forms, self.schemas)
        if incomplete:
            raise PreconditionError(
                "enrollment submission requires every form COMPLETE",
                details=incomplete,
            )
        site = self.store.get_site(record.site_id)
        if site is None:
            raise NotFoundError(f"no site {record.site_id}")
        now = self.clock()
        advanced = workflow.advance(record, WorkflowState.ENROLLED, now)
        ctx = TransitionContext(patient_id)
        try:
            self.outbox.enqueue(
                ctx,
                patient_id,
                site.contact_email,
                NotificationTemplate.ENROLLMENT_SUBMITTED,
                now=now,
                id_fn=self.id_fn,
            )
            stored = self.store.put_patient_cas(
                advanced,
                expected_version,
                notifications=ctx.drafts,
                events=[workflow.transition_event(record, advanced, actor.account_id, now)],
            )
        finally:
            ctx.close()
        return stored

    def withdraw(
        self, patient_id: str, reason: str, expected_version: int, actor: UserAccount
    ) -> PatientRecord:
        record = self._load_for_operation(
            patient_id, "withdraw", Action.STATE_TRANSITION, actor
        )
        workflow.check_state(record, "withdraw")
        self._check_version(record, expected_version)
        now = self.clock()
        advanced = workflow.advance(record, WorkflowState.WITHDRAWN, now)
        return self.store.put_patient_cas(
            advanced,
            expected_version,
            events=[
                workflow.transition_event(
                    record, advanced, actor.account_id, now, reason=reason
                )
            ],
        )

    def register_specimen(
        self,
        patient_id: str,
        kind: SpecimenKind | str,
        expected_version: int,
        actor: UserAccount,
        *,
        notes: str | None = None,
    ) -> tuple[PatientRecord, BiospecimenRecord]:
        record = self._load_for_operation(
            patient_id, "register_specimen", Action.FORM_WRITE, actor
        )
        workflow.check_state(record, "register_specimen")
        self._check_version(record, expected_version)
        try:
            specimen_kind = SpecimenKind(kind)
        except ValueError:
            raise ValidationFailure(f"unknown specimen kind {kind!r}")
        now = self.clock()
        specimen = BiospecimenRecord(
            specimen_id=self.id_fn(),
            patient_id=record.patient_id,
            kind=specimen_kind,
            collected_at=now,
            collected_by=actor.account_id,
            notes=notes,
        )
        touched = workflow.touch(record, now, specimens=record.specimens + (specimen,))
        event = self._event(
            AuditAction.FORM_WRITE,
            actor.account_id,
            record.patient_id,
            {
                "patient_id": record.patient_id,
                "write": "specimen",
                "specimen_id": specimen.specimen_id,
                "specimen_kind": specimen_kind.value,
                "version": touched.state_version,
            },
        )
        stored = self.store.put_patient_cas(touched, expected_version, events=[event])
        return stored, specimen

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def get_patient(self, patient_id: str, actor: UserAccount) -> PatientRecord:
        record = self.store.get_patient(patient_id)
        if record is None:
            raise NotFoundError(f"no patient {patient_id}")
        decision = self._authorize(
            actor,
            Action.READ_PATIENT,
            Subject(site_id=record.site_id, patient_id=record.patient_id),
            conceal=True,
        )
        detail: dict[str, Any] = {"patient_id": record.patient_id, "version": record.state_version}
        if decision.cross_site:
            detail["cross_site"] = True
        self._audit(self._event(AuditAction.READ, actor.account_id, record.patient_id, detail))
        return record

    def list_patients(
        self,
        actor: UserAccount,
        site_id: str | None = None,
        state: WorkflowState | str | None = None,
    ) -> list[PatientRecord]:
        requested = site_id if site_id is not None else actor.site_id
        decision = self._authorize(
            actor, Action.LIST_PATIENTS, Subject(site_id=requested)
        )
        effective_site = requested if decision.scope.value != "ALL_SITES" else site_id
        workflow_state: WorkflowState | None = None
        if state is not None:
            try:
                workflow_state = WorkflowState(state)
            except ValueError:
                raise ValidationFailure(f"unknown workflow state {state!r}")
        records = self.store.list_patients(effective_site, workflow_state)
        detail: dict[str, Any] = {
            "kind": "list",
            "site_id": effective_site,
            "state": workflow_state.value if workflow_state else None,
            "count": len(records),
        }
        if decision.cross_site:
            detail["cross_site"] = True
        self._audit(
            self._event(
                AuditAction.READ, actor.account_id, effective_site or "all_sites", detail
            )
        )
        return records

    def export_deidentified(self, actor: UserAccount) -> dict[str, Any]:
        self._authorize(actor, Action.EXPORT, Subject())
        records = self.store.list_patients()
        payload = {
            "export_version": 1,
            "generated_month": self.clock().strftime("%Y-%m"),
            "patients": [deidentify_patient(r, self.schemas) for r in records],
        }
        self._audit(
            self._event(
                AuditAction.EXPORT,
                actor.account_id,
                "all_sites",
                {"patients": len(records)},
            )
        )
        return payload

    def read_audit(
        self, actor: UserAccount, from_seq: int = 1, limit: int | None = None
    ) -> list[AuditEvent]:
        # Audit reads are not themselves audited; everything else is.
        self._authorize(actor, Action.READ, Subject())
        return self.store.read_audit(from_seq, limit)

    # ------------------------------------------------------------------
    # site and account administration
    # ------------------------------------------------------------------

    def create_site(self, name: str, contact_email: str, actor: UserAccount) -> Site:
        self._authorize(actor, Action.MANAGE_SITES, Subject())
        site = Site(site_id=self.id_fn(), name=name, contact_email=contact_email)
        violations = validate(site)
        if violations:
            raise ValidationFailure("invalid site", details=violations)
        return self.store.put_site(
            site,
            events=[
                self._event(
                    AuditAction.ADMIN_CHANGE,
                    actor.account_id,
                    site.site_id,
                    {"op": "create_site", "name": name},
                )
            ],
        )

    def deactivate_site(self, site_id: str, actor: UserAccount) -> Site:
        self._authorize(actor, Action.MANAGE_SITES, Subject(site_id=site_id))
        site = self.store.get_site(site_id)
        if site is None:
            raise NotFoundError(f"no site {site_id}")
        updated = replace(site, active=False)
        return self.store.put_site(
            updated,
            events=[
                self._event(
                    AuditAction.ADMIN_CHANGE,
                    actor.account_id,
                    site_id,
                    {"op": "deactivate_site"},
                )
            ],
        )

    def list_sites(self, actor: UserAccount) -> list[Site]:
        self._authorize(actor, Action.MANAGE_SITES, Subject())
        return self.store.list_sites()

    def create_account(
        self,
        username: str,
        role: Role | str,
        site_id: str | None,
        actor: UserAccount,
    ) -> tuple[UserAccount, str]:
        """Staff/admin account creation (patient accounts come from
        issue_credentials). DCC admin only."""
        try:
            role = Role(role)
        except ValueError:
            raise ValidationFailure(f"unknown role {role!r}")
        self._authorize(actor, Action.MANAGE_USERS, Subject(site_id=site_id))
        if actor.role is not Role.DCC_ADMIN:
            raise AuthorizationDenied(
                "only the DCC admin may create accounts", reason="role_not_permitted"
            )
        if role is Role.PATIENT:
            raise PreconditionError(
                "patient accounts are created by credential issuance, not user add"
            )
        if role is not Role.DCC_ADMIN:
            if not site_id:
                raise ValidationFailure("site_id required for site-scoped roles")
            if self.store.get_site(site_id) is None:
                raise NotFoundError(f"no site {site_id}")
        if self.store.get_account_by_username(username) is not None:
            raise DuplicateError(f"username {username!r} already taken")
        temp_password = new_temp_password()
        account = UserAccount(
            account_id=self.id_fn(),
            username=username,
            password_hash=hash_password(temp_password, n=self.config.scrypt_n),
            role=role,
            site_id=site_id if role is not Role.DCC_ADMIN else None,
            must_change_password=True,
        )
        violations = validate(account)
        if violations:
            raise ValidationFailure("invalid account", details=violations)
        self.store.put_account(
            account,
            events=[
                self._event(
                    AuditAction.ADMIN_CHANGE,
                    actor.account_id,
                    account.account_id,
                    {"op": "create_account", "username": username, "role": role.value},
                )
            ],
        )
        return account, temp_password

    def _manage_target(self, username: str, actor: UserAccount) -> UserAccount:
        target = self.store.get_account_by_username(username)
        if target is None:
            raise NotFoundError(f"no account {username!r}")
        self._authorize(actor, Action.MANAGE_USERS, Subject(site_id=target.site_id))
        if actor.role is not Role.DCC_ADMIN and target.role is not Role.PATIENT:
            raise AuthorizationDenied(
                "coordinators may only manage patient accounts",
                reason="role_not_permitted",
            )
        return target

    def disable_account(self, username: str, actor: UserAccount) -> UserAccount:
        target = self._manage_target(username, actor)
        updated = replace(target, disabled=True)
        self.store.put_account(
            updated,
            events=[
                self._event(
                    AuditAction.ADMIN_CHANGE,
                    actor.account_id,
                    target.account_id,
                    {"op": "disable_account", "username": username},
                )
            ],
        )
        self.sessions.revoke_account(target.account_id)
        return updated

    def reset_password(self, username: str, actor: UserAccount) -> tuple[UserAccount, str]:
        """Coordinator/admin reset: new temporary password, lockout cleared."""
        target = self._manage_target(username, actor)
        temp_password = new_temp_password()
        updated = replace(
            target,
            password_hash=hash_password(temp_password, n=self.config.scrypt_n),
            must_change_password=True,
            failed_logins=0,
            disabled=False,
        )
        self.store.put_account(
            updated,
            events=[
                self._event(
                    AuditAction.ADMIN_CHANGE,
                    actor.account_id,
                    target.account_id,
                    {"op": "reset_password", "username": username},
                )
            ],
        )
        self.sessions.revoke_account(target.account_id)
        return updated, temp_password

    # ------------------------------------------------------------------
    # notifications
    # ------------------------------------------------------------------

    def drain_notifications(self, transport: Transport | None = None) -> DrainReport:
        active = transport or self.transport
        if active is None:
            raise PreconditionError("no notification transport configured")
        return self.outbox.drain(active, now=self.clock())

    # ------------------------------------------------------------------
    # schema publication (single source of truth for clients)
    # ------------------------------------------------------------------

    def form_schemas(self) -> dict[str, Any]:
        return {
            "forms": {
                name.value: {
                    "fields": [
                        {
                            "name": f.name,
                            "type": f.type,
                            "required": f.required,
                            "values": list(f.values),
                            "identifying": f.identifying,
                        }
                        for f in schema.fields
                    ]
                }
                for name, schema in self.schemas.items()
            }
        }
