"""Administrative command line for DCC staff.

Two modes:

- network mode (``--api URL``): talks to a running portal as a DCC admin.
  Credentials come from ``DCC_ADMIN_TOKEN`` (an existing session token) or
  ``DCC_ADMIN_CREDENTIALS`` (path to a JSON file {"username", "password"}).
- offline mode (``--data-dir PATH``): opens the embedded store directly.
  The store's exclusive lock guarantees the service is stopped, so
  split-brain writes are impossible. The acting admin is named by
  ``--actor`` / ``DCC_ADMIN_USER``; creating the very first DCC admin
  account is self-attributed (there is nobody else to attribute it to).

Exit codes: 0 ok, 1 user/input error, 2 integrity violation. Failures
print machine-readable JSON on stderr.
"""

from __future__ import annotations

import json
import os
import sys
import threading
from pathlib import Path

import click

from . import forms as forms_mod
from .access import load_matrix
from .eligibility import load_ruleset
from .errors import DccError, IntegrityError
from .ids import new_id, new_temp_password
from .model import (
    AuditAction,
    AuditEvent,
    Role,
    UserAccount,
    to_canonical,
    utc_now,
)
from .passwords import hash_password
from .service import ServiceConfig, StudyService
from .store import EmbeddedDriver, verify_embedded_store
from .store.verify import migrate_embedded_to_relational


def _fail(message: str, *, code: str = "error", exit_code: int = 1, **extra):
    payload = {"error": code, "message": message, **extra}
    click.echo(json.dumps(payload), err=True)
    sys.exit(exit_code)


def _emit(ctx: click.Context, human: str, data: dict):
    if ctx.obj.get("json"):
        click.echo(json.dumps(data, sort_keys=True))
    else:
        click.echo(human)


class _NetworkClient:
    def __init__(self, base_url: str):
        import httpx

        self._client = httpx.Client(base_url=base_url, timeout=30.0)
        token = os.environ.get("DCC_ADMIN_TOKEN")
        if not token:
            cred_path = os.environ.get("DCC_ADMIN_CREDENTIALS")
            if not cred_path:
                _fail(
                    "network mode needs DCC_ADMIN_TOKEN or DCC_ADMIN_CREDENTIALS",
                    code="missing_credentials",
                )
            creds = json.loads(Path(cred_path).read_text())
            resp = self._client.post(
                "/api/v1/auth/login",
                json={"username": creds["username"], "password": creds["password"]},
            )
            if resp.status_code != 200:
                _fail(f"login failed: {resp.text}", code="login_failed")
            token = resp.json()["token"]
        self._client.headers["Authorization"] = f"Bearer {token}"

    def call(self, method: str, path: str, **kwargs) -> dict:
        resp = self._client.request(method, path, **kwargs)
        if resp.status_code >= 400:
            try:
                body = resp.json()
            except ValueError:
                body = {"error": {"message": resp.text}}
            _fail(
                body.get("error", {}).get("message", "request failed"),
                code=body.get("error", {}).get("code", "http_error"),
                status=resp.status_code,
            )
        return resp.json()


class _OfflineSession:
    """Direct-store admin session (service stopped; lock held by driver)."""

    def __init__(self, data_dir: str, actor_username: str | None):
        self.store = EmbeddedDriver(data_dir)
        self.service = StudyService(self.store)
        self.actor_username = actor_username or os.environ.get("DCC_ADMIN_USER")
        self._actor: UserAccount | None = None

    def actor(self) -> UserAccount:
        if self._actor is None:
            if not self.actor_username:
                _fail(
                    "offline mode needs --actor or DCC_ADMIN_USER naming a DCC admin",
                    code="missing_actor",
                )
            account = self.store.get_account_by_username(self.actor_username)
            if account is None or account.role is not Role.DCC_ADMIN:
                _fail(
                    f"{self.actor_username!r} is not a DCC admin account",
                    code="bad_actor",
                )
            self._actor = account
        return self._actor

    def close(self):
        self.store.close()


def _mode(ctx: click.Context):
    obj = ctx.obj
    if obj.get("api"):
        return "network", _NetworkClient(obj["api"])
    if obj.get("data_dir"):
        return "offline", _OfflineSession(obj["data_dir"], obj.get("actor"))
    _fail("choose a mode: --api URL or --data-dir PATH", code="no_mode")


class _ErrorMappingGroup(click.Group):
    """Maps domain errors to the exit-code contract (1 user, 2 integrity)."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except IntegrityError as exc:
            _fail(str(exc), code=exc.code, exit_code=2, first_bad_seq=exc.first_bad_seq)
        except DccError as exc:
            _fail(str(exc), code=exc.code, details=exc.details)


@click.group(cls=_ErrorMappingGroup)
@click.option("--api", envvar="DCC_API_URL", help="Portal base URL (network mode).")
@click.option(
    "--data-dir", envvar="DCC_DATA_DIR", help="Embedded store directory (offline mode)."
)
@click.option("--actor", envvar="DCC_ADMIN_USER", help="Admin username for offline mode.")
@click.option("--json", "json_out", is_flag=True, help="Structured output for scripting.")
@click.pass_context
def main(ctx, api, data_dir, actor, json_out):
    """Administrative tool for the coordinating-center service."""
    ctx.ensure_object(dict)
    ctx.obj.update(api=api, data_dir=data_dir, actor=actor, json=json_out)


# ---------------------------------------------------------------------------
# site
# ---------------------------------------------------------------------------

@main.group()
def site():
    """Manage participating clinical sites."""


@site.command("add")
@click.option("--name", required=True)
@click.option("--contact", "contact_email", required=True, help="Coordinator contact email.")
@click.pass_context
def site_add(ctx, name, contact_email):
    mode, handle = _mode(ctx)
    try:
        if mode == "network":
            data = handle.call(
                "POST", "/api/v1/sites", json={"name": name, "contact_email": contact_email}
            )
        else:
            data = to_canonical(handle.service.create_site(name, contact_email, handle.actor()))
        _emit(ctx, data["site_id"], data)
    finally:
        if mode == "offline":
            handle.close()


@site.command("list")
@click.pass_context
def site_list(ctx):
    mode, handle = _mode(ctx)
    try:
        if mode == "network":
            sites = handle.call("GET", "/api/v1/sites")["sites"]
        else:
            sites = [to_canonical(s) for s in handle.service.list_sites(handle.actor())]
        human = "\n".join(
            f"{s['site_id']}  {s['name']}  {s['contact_email']}  "
            f"{'active' if s['active'] else 'deactivated'}"
            for s in sites
        )
        _emit(ctx, human or "(no sites)", {"sites": sites})
    finally:
        if mode == "offline":
            handle.close()


@site.command("deactivate")
@click.argument("site_id")
@click.pass_context
def site_deactivate(ctx, site_id):
    mode, handle = _mode(ctx)
    try:
        if mode == "network":
            data = handle.call("POST", f"/api/v1/sites/{site_id}/deactivate")
        else:
            data = to_canonical(handle.service.deactivate_site(site_id, handle.actor()))
        _emit(ctx, f"{site_id} deactivated", data)
    finally:
        if mode == "offline":
            handle.close()


# ---------------------------------------------------------------------------
# user
# ---------------------------------------------------------------------------

@main.group()
def user():
    """Manage portal accounts (staff and admins)."""


def _bootstrap_admin(store: EmbeddedDriver, username: str) -> tuple[UserAccount, str]:
    temp = new_temp_password()
    account = UserAccount(
        account_id=new_id(),
        username=username,
        password_hash=hash_password(temp),
        role=Role.DCC_ADMIN,
        must_change_password=True,
    )
    event = AuditEvent(
        seq=0,
        at=utc_now(),
        actor=account.account_id,  # first admin is self-attributed
        action=AuditAction.ADMIN_CHANGE,
        subject=account.account_id,
        detail={"op": "bootstrap_admin", "username": username},
    )
    store.put_account(account, events=[event])
    return account, temp


@user.command("add")
@click.option("--username", required=True)
@click.option("--role", "role_name", required=True,
              type=click.Choice([r.value for r in Role if r is not Role.PATIENT]))
@click.option("--site", "site_id", default=None)
@click.pass_context
def user_add(ctx, username, role_name, site_id):
    mode, handle = _mode(ctx)
    try:
        if mode == "network":
            data = handle.call(
                "POST",
                "/api/v1/users",
                json={"username": username, "role": role_name, "site_id": site_id},
            )
        else:
            no_admin_yet = not any(
                a.role is Role.DCC_ADMIN for a in handle.store.list_accounts()
            )
            if role_name == Role.DCC_ADMIN.value and no_admin_yet:
                account, temp = _bootstrap_admin(handle.store, username)
            else:
                account, temp = handle.service.create_account(
                    username, role_name, site_id, handle.actor()
                )
            data = {
                "account": {
                    "account_id": account.account_id,
                    "username": account.username,
                    "role": account.role.value,
                    "site_id": account.site_id,
                },
                "temporary_password": temp,
            }
        human = (
            f"{data['account']['account_id']}  temporary password: "
            f"{data['temporary_password']}"
        )
        _emit(ctx, human, data)
    finally:
        if mode == "offline":
            handle.close()


@user.command("disable")
@click.argument("username")
@click.pass_context
def user_disable(ctx, username):
    mode, handle = _mode(ctx)
    try:
        if mode == "network":
            data = handle.call("POST", f"/api/v1/users/{username}/disable")
        else:
            account = handle.service.disable_account(username, handle.actor())
            data = {"account": {"username": account.username, "disabled": account.disabled}}
        _emit(ctx, f"{username} disabled", data)
    finally:
        if mode == "offline":
            handle.close()


@user.command("reset-password")
@click.argument("username")
@click.pass_context
def user_reset_password(ctx, username):
    mode, handle = _mode(ctx)
    try:
        if mode == "network":
            data = handle.call("POST", f"/api/v1/users/{username}/reset-password")
        else:
            account, temp = handle.service.reset_password(username, handle.actor())
            data = {
                "account": {"username": account.username},
                "temporary_password": temp,
            }
        _emit(ctx, f"temporary password: {data['temporary_password']}", data)
    finally:
        if mode == "offline":
            handle.close()


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

@main.command("config")
@click.argument("action", type=click.Choice(["check"]))
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--kind",
    type=click.Choice(["rules", "capabilities", "schemas"]),
    default=None,
    help="Force the document kind instead of sniffing it.",
)
@click.pass_context
def config_cmd(ctx, action, path, kind):
    """Validate a rules / capability-matrix / form-schema document."""
    text = Path(path).read_text()
    loaders = {
        "rules": load_ruleset,
        "capabilities": load_matrix,
        "schemas": forms_mod.load_schemas,
    }
    if kind is None:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            _fail(f"not valid JSON: {exc}", code="config_invalid")
        if "rules" in doc:
            kind = "rules"
        elif "capabilities" in doc:
            kind = "capabilities"
        elif "forms" in doc:
            kind = "schemas"
        else:
            _fail("cannot determine document kind", code="config_invalid")
    loaders[kind](text)
    _emit(ctx, f"ok: valid {kind} document", {"ok": True, "kind": kind})


# ---------------------------------------------------------------------------
# audit / export
# ---------------------------------------------------------------------------

@main.command("audit")
@click.argument("action", type=click.Choice(["tail"]))
@click.option("--from", "from_seq", type=int, default=1)
@click.option("--limit", type=int, default=50)
@click.pass_context
def audit_cmd(ctx, action, from_seq, limit):
    """Inspect the append-only audit log."""
    mode, handle = _mode(ctx)
    try:
        if mode == "network":
            events = handle.call(
                "GET", "/api/v1/audit", params={"from": from_seq, "limit": limit}
            )["events"]
        else:
            handle.actor()
            events = [to_canonical(e) for e in handle.store.read_audit(from_seq, limit)]
        human = "\n".join(
            f"{e['seq']:>6}  {e['at']}  {e['action']:<18} {e['actor']}  {e['subject']}"
            for e in events
        )
        _emit(ctx, human or "(no events)", {"events": events})
    finally:
        if mode == "offline":
            handle.close()


@main.command("export")
@click.option("--deidentified", is_flag=True, required=True,
              help="Only the de-identified research export exists.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_context
def export_cmd(ctx, deidentified, out):
    """Write the de-identified research export to a file."""
    mode, handle = _mode(ctx)
    try:
        if mode == "network":
            payload = handle.call("GET", "/api/v1/export")
        else:
            payload = handle.service.export_deidentified(handle.actor())
        Path(out).write_text(json.dumps(payload, indent=2, sort_keys=True))
        _emit(
            ctx,
            f"wrote {len(payload['patients'])} patients to {out}",
            {"patients": len(payload["patients"]), "out": out},
        )
    finally:
        if mode == "offline":
            handle.close()


# ---------------------------------------------------------------------------
# store
# ---------------------------------------------------------------------------

@main.group()
def store():
    """Offline store maintenance (service must be stopped)."""


@store.command("verify")
@click.pass_context
def store_verify(ctx):
    """Replay the log, compare snapshots, verify the audit hash chain."""
    data_dir = ctx.obj.get("data_dir")
    if not data_dir:
        _fail("store verify runs offline: pass --data-dir", code="no_mode")
    with EmbeddedDriver(data_dir) as driver:
        report = verify_embedded_store(data_dir, live=driver)
    data = {
        "ok": report.ok,
        "frames": report.frames,
        "events": report.events,
        "errors": report.errors,
        "first_divergent_seq": report.first_divergent_seq,
    }
    if not report.ok:
        click.echo(json.dumps(data), err=True)
        sys.exit(2)
    _emit(ctx, f"ok: {report.frames} frames, {report.events} audit events", data)


@store.command("migrate")
@click.option("--to-url", required=True, help="Target relational database URL.")
@click.pass_context
def store_migrate(ctx, to_url):
    """Copy the embedded store into an empty relational server."""
    data_dir = ctx.obj.get("data_dir")
    if not data_dir:
        _fail("store migrate runs offline: pass --data-dir", code="no_mode")
    with EmbeddedDriver(data_dir) as driver:
        try:
            counts = migrate_embedded_to_relational(driver, to_url)
        except ValueError as exc:
            _fail(str(exc), code="migration_refused")
    human = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
    _emit(ctx, f"migrated: {human}", counts)


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

@main.command("serve")
@click.option("--listen", default="127.0.0.1:8000", show_default=True)
@click.option("--store", "store_driver", type=click.Choice(["embedded", "relational"]),
              default="embedded", show_default=True)
@click.option("--data-dir", "serve_data_dir", envvar="DCC_DATA_DIR",
              help="Embedded store directory.")
@click.option("--db-url", envvar="DCC_DB_URL", help="Relational server URL.")
@click.option("--rules", "rules_path", envvar="DCC_RULES_PATH",
              type=click.Path(exists=True, dir_okay=False))
@click.option("--capabilities", "capabilities_path", envvar="DCC_CAPABILITIES_PATH",
              type=click.Path(exists=True, dir_okay=False))
@click.option("--schemas", "schemas_path", envvar="DCC_SCHEMAS_PATH",
              type=click.Path(exists=True, dir_okay=False))
@click.option("--session-ttl", envvar="DCC_SESSION_TTL", type=int, default=1800,
              show_default=True)
@click.option("--smtp-host", envvar="DCC_SMTP_HOST")
@click.option("--smtp-port", envvar="DCC_SMTP_PORT", type=int, default=25)
@click.option("--smtp-user", envvar="DCC_SMTP_USER")
@click.option("--smtp-password", envvar="DCC_SMTP_PASSWORD")
@click.option("--smtp-tls", envvar="DCC_SMTP_TLS", is_flag=True)
@click.option("--notify-log", envvar="DCC_NOTIFY_LOG",
              help="Log-sink transport path (default transport).")
@click.option("--drain-interval", type=float, default=5.0, show_default=True)
@click.option(
    "--allow-insecure-local",
    is_flag=True,
    help="Acknowledge that TLS is terminated elsewhere (reverse proxy); "
    "the service refuses to listen on plaintext without this flag.",
)
def serve(
    listen,
    store_driver,
    serve_data_dir,
    db_url,
    rules_path,
    capabilities_path,
    schemas_path,
    session_ttl,
    smtp_host,
    smtp_port,
    smtp_user,
    smtp_password,
    smtp_tls,
    notify_log,
    drain_interval,
    allow_insecure_local,
):
    """Run the portal service."""
    import uvicorn

    from .api import create_app
    from .notifier import LogSinkTransport, SmtpTransport, run_drain_loop
    from .store import open_store

    if not allow_insecure_local:
        _fail(
            "refusing plaintext listener; terminate TLS in front of the service "
            "and pass --allow-insecure-local to acknowledge",
            code="tls_unacknowledged",
        )
    if store_driver == "embedded":
        if not serve_data_dir:
            _fail("embedded driver needs --data-dir", code="bad_config")
        driver = open_store("embedded", serve_data_dir)
    else:
        if not db_url:
            _fail("relational driver needs --db-url", code="bad_config")
        driver = open_store("relational", db_url)

    self_rules = load_ruleset(Path(rules_path).read_text()) if rules_path else None
    matrix = load_matrix(Path(capabilities_path).read_text()) if capabilities_path else None
    schemas = (
        forms_mod.load_schemas(Path(schemas_path).read_text()) if schemas_path else None
    )
    if smtp_host:
        transport = SmtpTransport(
            smtp_host,
            smtp_port,
            username=smtp_user,
            password=smtp_password,
            use_tls=smtp_tls,
        )
    else:
        sink = notify_log or (
            str(Path(serve_data_dir) / "notifications.jsonl")
            if serve_data_dir
            else "notifications.jsonl"
        )
        transport = LogSinkTransport(sink)

    service = StudyService(
        driver,
        self_screen_rules=self_rules,
        schemas=schemas,
        matrix=matrix,
        transport=transport,
        config=ServiceConfig(session_ttl_seconds=session_ttl),
    )
    app = create_app(service)

    stop = threading.Event()
    drainer = threading.Thread(
        target=run_drain_loop,
        args=(service.outbox, transport, stop),
        kwargs={"interval": drain_interval},
        daemon=True,
    )
    drainer.start()
    host, _, port = listen.rpartition(":")
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    finally:
        stop.set()
        driver.close()


def _entrypoint():
    main()


if __name__ == "__main__":
    _entrypoint()
