"""HTTP/JSON portal: anonymous self-check, patient enrollment, study
management, and DCC administration on one versioned surface.

Route conventions:

- Bodies and responses use the canonical JSON encoding.
- Sessions ride ``Authorization: Bearer <token>``; accounts flagged
  must_change_password may only call /auth/password and /auth/logout.
- Mutating requests may carry an ``Idempotency-Key`` header; replays
  return the originally produced response without re-executing.
- Cross-site subjects answer 404, never 403, so existence cannot be
  probed; every 404 body is identical.
- Errors: {"error": {"code", "message", "details"}}.
"""

from __future__ import annotations

import threading
from typing import Any, Callable

from fastapi import Depends, FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse

from .errors import (
    AccountLockedError,
    AuthenticationError,
    AuthorizationDenied,
    ConfigError,
    DccError,
    DuplicateError,
    NotFoundError,
    OutboxContractError,
    PasswordChangeRequiredError,
    PreconditionError,
    StoreIOError,
    TransitionError,
    ValidationFailure,
    VersionConflictError,
)
from .model import (
    CriterionInputs,
    PatientRecord,
    UserAccount,
    to_canonical,
)
from .service import StudyService

API_PREFIX = "/api/v1"

# Routes an unrotated (must_change_password) session may still reach.
_MUST_CHANGE_ALLOWED = {f"{API_PREFIX}/auth/password", f"{API_PREFIX}/auth/logout"}

_STATUS_FOR = {
    ValidationFailure: 422,
    PreconditionError: 422,
    ConfigError: 422,
    AuthenticationError: 401,
    AccountLockedError: 423,
    PasswordChangeRequiredError: 403,
    NotFoundError: 404,
    VersionConflictError: 409,
    TransitionError: 409,
    DuplicateError: 409,
    OutboxContractError: 500,
    StoreIOError: 503,
}

_NOT_FOUND_BODY = {"error": {"code": "not_found", "message": "resource not found"}}


def _error_response(exc: DccError) -> JSONResponse:
    if isinstance(exc, AuthorizationDenied):
        if exc.conceal:
            return JSONResponse(_NOT_FOUND_BODY, status_code=404)
        return JSONResponse(
            {"error": {"code": "forbidden", "message": str(exc), "reason": exc.reason}},
            status_code=403,
        )
    status = _STATUS_FOR.get(type(exc), 500)
    if status == 404:
        return JSONResponse(_NOT_FOUND_BODY, status_code=404)
    body: dict[str, Any] = {"error": {"code": exc.code, "message": str(exc)}}
    if exc.details:
        body["error"]["details"] = exc.details
    if isinstance(exc, TransitionError) and exc.allowed_from:
        body["error"]["allowed_from"] = list(exc.allowed_from)
    return JSONResponse(body, status_code=status)


def account_public(account: UserAccount) -> dict[str, Any]:
    """Wire view of an account: no password hash, no counters."""
    return {
        "account_id": account.account_id,
        "username": account.username,
        "role": account.role.value,
        "site_id": account.site_id,
        "patient_id": account.patient_id,
        "must_change_password": account.must_change_password,
        "disabled": account.disabled,
    }


def patient_body(record: PatientRecord) -> dict[str, Any]:
    return to_canonical(record)


def _require(body: dict[str, Any], *names: str) -> list[str]:
    return [n for n in names if n not in body]


def parse_inputs(data: Any) -> CriterionInputs:
    """Strict field-by-field parse with per-field messages (422 payload)."""
    if not isinstance(data, dict):
        raise ValidationFailure("inputs must be an object")
    errors: list[str] = []
    spec: dict[str, tuple[type, ...]] = {
        "dre_palpable": (bool,),
        "histology_aggressive": (bool,),
        "gleason_score": (int,),
        "psa_ng_ml": (int, float),
        "positive_cores": (int,),
        "total_cores": (int,),
    }
    values: dict[str, Any] = {}
    for name, types in spec.items():
        if name not in data:
            errors.append(f"{name}: required")
            continue
        value = data[name]
        if isinstance(value, bool) and bool not in types:
            errors.append(f"{name}: expected {types[0].__name__}")
            continue
        if not isinstance(value, types):
            errors.append(f"{name}: expected {types[0].__name__}")
            continue
        values[name] = value
    unknown = set(data) - set(spec)
    errors.extend(f"{n}: unknown field" for n in sorted(unknown))
    if errors:
        raise ValidationFailure("invalid criterion inputs", details=errors)
    inputs = CriterionInputs(**values)
    from .model import validate

    violations = validate(inputs)
    if violations:
        raise ValidationFailure("invalid criterion inputs", details=violations)
    return inputs


class _IdempotencyCache:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str, str, str], tuple[int, Any]] = {}

    def run(
        self,
        request: Request,
        principal: str,
        key: str | None,
        fn: Callable[[], tuple[int, Any]],
    ) -> JSONResponse:
        if not key:
            status, body = fn()
            return JSONResponse(body, status_code=status)
        cache_key = (principal, request.method, request.url.path, key)
        with self._lock:
            hit = self._entries.get(cache_key)
        if hit is not None:
            return JSONResponse(hit[1], status_code=hit[0])
        status, body = fn()
        if status < 500:
            with self._lock:
                self._entries.setdefault(cache_key, (status, body))
        return JSONResponse(body, status_code=status)


async def _json_body(request: Request) -> dict[str, Any]:
    try:
        data = await request.json()
    except Exception:
        raise ValidationFailure("request body must be a JSON object")
    if not isinstance(data, dict):
        raise ValidationFailure("request body must be a JSON object")
    return data


def create_app(service: StudyService) -> FastAPI:
    app = FastAPI(
        title="coordinating-center portal",
        docs_url=None,
        redoc_url=None,
        openapi_url=None,
    )
    idempotency = _IdempotencyCache()

    @app.exception_handler(DccError)
    async def _dcc_error(request: Request, exc: DccError):
        return _error_response(exc)

    # -- auth plumbing -------------------------------------------------------

    def bearer_token(authorization: str | None = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise AuthenticationError("missing bearer token")
        return authorization.removeprefix("Bearer ")

    def current_account(
        request: Request, token: str = Depends(bearer_token)
    ) -> UserAccount:
        account = service.authenticate(token)
        if (
            account.must_change_password
            and request.url.path not in _MUST_CHANGE_ALLOWED
        ):
            raise PasswordChangeRequiredError(
                "temporary password must be changed before using the portal"
            )
        return account

    # -- anonymous routes ------------------------------------------------------

    @app.get("/healthz")
    def healthz():
        driver = service.store.driver_name
        head_seq, _ = service.store.audit_head()
        return {"status": "ok", "driver": driver, "audit_seq": head_seq}

    @app.get(f"{API_PREFIX}/spec")
    def route_manifest():
        routes = sorted(
            {
                (method, route.path)
                for route in app.routes
                if getattr(route, "methods", None)
                for method in route.methods
                if method not in ("HEAD", "OPTIONS")
            }
        )
        return {"routes": [{"method": m, "path": p} for m, p in routes]}

    @app.get(f"{API_PREFIX}/schemas")
    def form_schemas():
        return service.form_schemas()

    @app.post(f"{API_PREFIX}/eligibility/self-check")
    async def self_check(request: Request):
        body = await _json_body(request)
        inputs = parse_inputs(body.get("inputs", body))
        return service.self_check(inputs)

    # -- session routes ---------------------------------------------------------

    @app.post(f"{API_PREFIX}/auth/login")
    async def login(request: Request):
        body = await _json_body(request)
        missing = _require(body, "username", "password")
        if missing:
            raise ValidationFailure("missing credentials", details=missing)
        session, account = service.login(str(body["username"]), str(body["password"]))
        return {
            "token": session.token,
            "expires_at": to_canonical(session)["expires_at"],
            "account": account_public(account),
        }

    @app.post(f"{API_PREFIX}/auth/password")
    async def change_password(
        request: Request, token: str = Depends(bearer_token)
    ):
        account = service.authenticate(token)
        body = await _json_body(request)
        missing = _require(body, "old_password", "new_password")
        if missing:
            raise ValidationFailure("missing fields", details=missing)
        updated = service.change_password(
            account, str(body["old_password"]), str(body["new_password"])
        )
        return {"account": account_public(updated)}

    @app.post(f"{API_PREFIX}/auth/logout")
    def logout(token: str = Depends(bearer_token)):
        service.logout(token)
        return {"ok": True}

    # -- admin: sites and users ---------------------------------------------------

    @app.post(f"{API_PREFIX}/sites")
    async def create_site(
        request: Request,
        account: UserAccount = Depends(current_account),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        body = await _json_body(request)
        missing = _require(body, "name", "contact_email")
        if missing:
            raise ValidationFailure("missing fields", details=missing)

        def run():
            site = service.create_site(str(body["name"]), str(body["contact_email"]), account)
            return 201, to_canonical(site)

        return idempotency.run(request, account.account_id, idempotency_key, run)

    @app.get(f"{API_PREFIX}/sites")
    def list_sites(account: UserAccount = Depends(current_account)):
        return {"sites": [to_canonical(s) for s in service.list_sites(account)]}

    @app.post(f"{API_PREFIX}/sites/{{site_id}}/deactivate")
    def deactivate_site(site_id: str, account: UserAccount = Depends(current_account)):
        return to_canonical(service.deactivate_site(site_id, account))

    @app.post(f"{API_PREFIX}/users")
    async def create_user(
        request: Request,
        account: UserAccount = Depends(current_account),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        body = await _json_body(request)
        missing = _require(body, "username", "role")
        if missing:
            raise ValidationFailure("missing fields", details=missing)

        def run():
            created, temp = service.create_account(
                str(body["username"]), body["role"], body.get("site_id"), account
            )
            return 201, {"account": account_public(created), "temporary_password": temp}

        return idempotency.run(request, account.account_id, idempotency_key, run)

    @app.post(f"{API_PREFIX}/users/{{username}}/disable")
    def disable_user(username: str, account: UserAccount = Depends(current_account)):
        return {"account": account_public(service.disable_account(username, account))}

    @app.post(f"{API_PREFIX}/users/{{username}}/reset-password")
    def reset_user_password(
        username: str, account: UserAccount = Depends(current_account)
    ):
        updated, temp = service.reset_password(username, account)
        return {"account": account_public(updated), "temporary_password": temp}

    # -- patient registry ---------------------------------------------------------

    @app.post(f"{API_PREFIX}/patients")
    async def register_prospect(
        request: Request,
        account: UserAccount = Depends(current_account),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        body = await _json_body(request)
        missing = _require(body, "site_id", "inputs")
        if missing:
            raise ValidationFailure("missing fields", details=missing)
        inputs = parse_inputs(body["inputs"])

        def run():
            record = service.register_prospect(str(body["site_id"]), inputs, account)
            return 201, patient_body(record)

        return idempotency.run(request, account.account_id, idempotency_key, run)

    @app.get(f"{API_PREFIX}/patients")
    def list_patients(
        site: str | None = None,
        state: str | None = None,
        account: UserAccount = Depends(current_account),
    ):
        records = service.list_patients(account, site_id=site, state=state)
        return {"patients": [patient_body(r) for r in records]}

    @app.get(f"{API_PREFIX}/patients/{{patient_id}}")
    def get_patient(patient_id: str, account: UserAccount = Depends(current_account)):
        return patient_body(service.get_patient(patient_id, account))

    def _expected_version(body: dict[str, Any]) -> int:
        if "expected_version" not in body:
            raise ValidationFailure("expected_version required", details=["expected_version"])
        value = body["expected_version"]
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationFailure("expected_version must be an integer")
        return value

    @app.post(f"{API_PREFIX}/patients/{{patient_id}}/consultation")
    async def record_consultation(
        patient_id: str,
        request: Request,
        account: UserAccount = Depends(current_account),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        body = await _json_body(request)
        version = _expected_version(body)

        def run():
            return 200, patient_body(
                service.record_consultation(patient_id, version, account)
            )

        return idempotency.run(request, account.account_id, idempotency_key, run)

    @app.post(f"{API_PREFIX}/patients/{{patient_id}}/validation")
    async def physician_validation(
        patient_id: str,
        request: Request,
        account: UserAccount = Depends(current_account),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        body = await _json_body(request)
        version = _expected_version(body)
        if "inputs" not in body:
            raise ValidationFailure("missing fields", details=["inputs"])
        inputs = parse_inputs(body["inputs"])
        kwargs: dict[str, Any] = {}
        if "kind" in body:
            from .model import AssessmentKind

            try:
                kwargs["kind"] = AssessmentKind(body["kind"])
            except ValueError:
                raise ValidationFailure(f"unknown assessment kind {body['kind']!r}")

        def run():
            return 200, patient_body(
                service.physician_validate(patient_id, inputs, version, account, **kwargs)
            )

        return idempotency.run(request, account.account_id, idempotency_key, run)

    @app.post(f"{API_PREFIX}/patients/{{patient_id}}/credentials")
    async def issue_credentials(
        patient_id: str,
        request: Request,
        account: UserAccount = Depends(current_account),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        body = await _json_body(request)
        version = _expected_version(body)
        if "username" not in body:
            raise ValidationFailure("missing fields", details=["username"])

        def run():
            record, temp = service.issue_credentials(
                patient_id, str(body["username"]), version, account
            )
            return 200, {
                "patient": patient_body(record),
                "username": str(body["username"]),
                "temporary_password": temp,
            }

        return idempotency.run(request, account.account_id, idempotency_key, run)

    @app.put(f"{API_PREFIX}/patients/{{patient_id}}/forms/{{form_name}}")
    async def write_form(
        patient_id: str,
        form_name: str,
        request: Request,
        account: UserAccount = Depends(current_account),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        body = await _json_body(request)
        version = _expected_version(body)
        values = body.get("values")
        if not isinstance(values, dict):
            raise ValidationFailure("values must be an object of field -> value")

        def run():
            record = service.write_form(patient_id, form_name, values, version, account)
            return 200, patient_body(record)

        return idempotency.run(request, account.account_id, idempotency_key, run)

    @app.post(f"{API_PREFIX}/patients/{{patient_id}}/enrollment")
    async def submit_enrollment(
        patient_id: str,
        request: Request,
        account: UserAccount = Depends(current_account),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        body = await _json_body(request)
        version = _expected_version(body)

        def run():
            return 200, patient_body(
                service.submit_enrollment(patient_id, version, account)
            )

        return idempotency.run(request, account.account_id, idempotency_key, run)

    @app.post(f"{API_PREFIX}/patients/{{patient_id}}/withdrawal")
    async def withdraw(
        patient_id: str,
        request: Request,
        account: UserAccount = Depends(current_account),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        body = await _json_body(request)
        version = _expected_version(body)
        reason = str(body.get("reason", "")).strip()
        if not reason:
            raise ValidationFailure("withdrawal requires a reason")

        def run():
            return 200, patient_body(service.withdraw(patient_id, reason, version, account))

        return idempotency.run(request, account.account_id, idempotency_key, run)

    @app.post(f"{API_PREFIX}/patients/{{patient_id}}/specimens")
    async def register_specimen(
        patient_id: str,
        request: Request,
        account: UserAccount = Depends(current_account),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        body = await _json_body(request)
        version = _expected_version(body)
        if "kind" not in body:
            raise ValidationFailure("missing fields", details=["kind"])

        def run():
            record, specimen = service.register_specimen(
                patient_id,
                body["kind"],
                version,
                account,
                notes=body.get("notes"),
            )
            return 201, {"patient": patient_body(record), "specimen": to_canonical(specimen)}

        return idempotency.run(request, account.account_id, idempotency_key, run)

    # -- audit and export ---------------------------------------------------------

    @app.get(f"{API_PREFIX}/audit")
    def read_audit(
        account: UserAccount = Depends(current_account),
        from_seq: int = Query(1, alias="from"),
        limit: int | None = None,
    ):
        events = service.read_audit(account, from_seq=from_seq, limit=limit)
        return {"events": [to_canonical(e) for e in events]}

    @app.get(f"{API_PREFIX}/export")
    def export_deidentified(account: UserAccount = Depends(current_account)):
        return service.export_deidentified(account)

    return app
