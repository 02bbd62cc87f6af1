"""Small shared helpers."""

from __future__ import annotations

import hashlib
import json
import os

__all__ = ["canonical_hash", "worker_count"]


def canonical_hash(obj) -> str:
    """SHA-256 of the canonical JSON encoding (sorted keys, compact)."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def worker_count() -> int:
    """Worker-thread cap: ADVDISTILL_THREADS if set, else the CPU count."""
    env = os.environ.get("ADVDISTILL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValueError(f"ADVDISTILL_THREADS must be an integer, got {env!r}") from exc
        if n < 1:
            raise ValueError(f"ADVDISTILL_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1
