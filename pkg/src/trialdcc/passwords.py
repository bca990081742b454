"""Password hashing: scrypt with per-hash salt, parameters self-described.

Stored format: ``scrypt$<n>$<r>$<p>$<salt_hex>$<digest_hex>``. Cleartext
passwords never touch the store or the audit log.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets

DEFAULT_N = 2**14
_R, _P = 8, 1


def hash_password(password: str, *, n: int = DEFAULT_N) -> str:
    salt = secrets.token_bytes(16)
    digest = hashlib.scrypt(
        password.encode("utf-8"), salt=salt, n=n, r=_R, p=_P, dklen=32
    )
    return f"scrypt${n}${_R}${_P}${salt.hex()}${digest.hex()}"


def check_password(password: str, stored: str) -> bool:
    try:
        scheme, n, r, p, salt_hex, digest_hex = stored.split("$")
        if scheme != "scrypt":
            return False
        digest = hashlib.scrypt(
            password.encode("utf-8"),
            salt=bytes.fromhex(salt_hex),
            n=int(n),
            r=int(r),
            p=int(p),
            dklen=32,
        )
        return hmac.compare_digest(digest.hex(), digest_hex)
    except (ValueError, TypeError):
        return False
