"""Small shared helpers: stable hashing and canonical JSON."""

from __future__ import annotations

import hashlib
import json


def stable_hash(*parts) -> int:
    """64-bit deterministic hash of the string forms of the parts.
    Unlike built-in hash(), identical across processes and platforms."""
    joined = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(joined.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def canonical_json(payload) -> str:
    """Deterministic JSON: sorted keys, UTF-8 text, full float precision."""
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
