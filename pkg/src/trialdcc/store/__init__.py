"""Durable persistence behind one interface with interchangeable drivers."""

from .base import (
    GENESIS_HASH,
    StoreDriver,
    chain_events,
    event_hash,
    verify_chain,
)
from .embedded import EmbeddedDriver
from .verify import VerifyReport, verify_embedded_store

__all__ = [
    "GENESIS_HASH",
    "StoreDriver",
    "chain_events",
    "event_hash",
    "verify_chain",
    "EmbeddedDriver",
    "VerifyReport",
    "verify_embedded_store",
    "open_store",
]


def open_store(driver: str, location: str, **kwargs):
    """Open a store by driver name: 'embedded' (data dir) or 'relational' (URL)."""
    if driver == "embedded":
        return EmbeddedDriver(location, **kwargs)
    if driver == "relational":
        from .relational import RelationalDriver

        return RelationalDriver(location, **kwargs)
    raise ValueError(f"unknown store driver {driver!r}")
