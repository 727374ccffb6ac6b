"""Small shared helpers."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, name: str) -> int:
    """Named substream seed derived from a master seed."""
    digest = hashlib.sha256(("%d:%s" % (master, name)).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1
