"""Opaque identifiers and secrets.

Entity ids are ULID-style: 48-bit millisecond timestamp + 80 random bits,
Crockford base32, 26 chars. Lexicographic order follows creation time,
which keeps audit review and list ordering sane without exposing anything.
"""

from __future__ import annotations

import secrets
import time

_B32 = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"

# Unambiguous alphabet for one-time passwords handed over verbally/on paper.
_PW_ALPHABET = "abcdefghjkmnpqrstuvwxyzABCDEFGHJKMNPQRSTUVWXYZ23456789"


def _b32(value: int, length: int) -> str:
    out = []
    for _ in range(length):
        out.append(_B32[value & 0x1F])
        value >>= 5
    return "".join(reversed(out))


def new_id(now_ms: int | None = None) -> str:
    ts = int(time.time() * 1000) if now_ms is None else now_ms
    rand = secrets.randbits(80)
    return _b32(ts & ((1 << 48) - 1), 10) + _b32(rand, 16)


def new_session_token() -> str:
    # 256 bits, urlsafe; spec floor is 128.
    return secrets.token_urlsafe(32)


def new_temp_password(length: int = 12) -> str:
    return "".join(secrets.choice(_PW_ALPHABET) for _ in range(length))
