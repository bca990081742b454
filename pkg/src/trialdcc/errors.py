"""Shared exception hierarchy for the coordinating-center service."""

from __future__ import annotations


class DccError(Exception):
    """Base class; every error carries a machine-readable code."""

    code = "error"

    def __init__(self, message: str, *, details: list[str] | None = None):
        super().__init__(message)
        self.details = list(details or [])


class ValidationFailure(DccError):
    code = "validation_failed"


class ConfigError(DccError):
    """Rule set / capability matrix / form schema document rejected."""

    code = "config_invalid"


class PreconditionError(DccError):
    code = "precondition_failed"


class AuthenticationError(DccError):
    code = "invalid_credentials"


class AccountLockedError(DccError):
    code = "account_locked"


class PasswordChangeRequiredError(DccError):
    code = "password_change_required"


class AuthorizationDenied(DccError):
    """Policy denial; `reason` mirrors the access-control decision.

    `conceal` asks the API layer to present the subject as absent (404)
    instead of admitting it exists.
    """

    code = "forbidden"

    def __init__(self, message: str, *, reason: str, conceal: bool = False):
        super().__init__(message)
        self.reason = reason
        self.conceal = conceal


class NotFoundError(DccError):
    code = "not_found"


class VersionConflictError(DccError):
    code = "version_conflict"


class TransitionError(DccError):
    """Operation attempted from a workflow state outside the whitelist."""

    code = "transition_not_allowed"

    def __init__(self, message: str, *, allowed_from: tuple[str, ...] = ()):
        super().__init__(message)
        self.allowed_from = tuple(allowed_from)


class DuplicateError(DccError):
    code = "conflict"


class StoreIOError(DccError):
    """Retriable storage failure; no partial write is observable."""

    code = "store_unavailable"


class IntegrityError(DccError):
    """Store verification found divergence or a broken hash chain."""

    code = "integrity_violation"

    def __init__(self, message: str, *, first_bad_seq: int | None = None):
        super().__init__(message)
        self.first_bad_seq = first_bad_seq


class OutboxContractError(DccError):
    """Notification enqueue attempted outside an enrollment commit."""

    code = "outbox_misuse"
