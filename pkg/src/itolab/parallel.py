"""Path-batch scheduling.

Paths are always split into the same fixed batches of ``BATCH`` streams, so a
result never depends on how many workers ran them. ``ITOLAB_THREADS`` caps the
worker count (0 or unset means one per CPU).
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BATCH = 8192


def thread_count() -> int:
    raw = os.environ.get("ITOLAB_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("ITOLAB_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def map_batches(fn, streams: np.ndarray, batch: int = BATCH):
    """Apply ``fn`` to consecutive stream batches; return results in stream order."""
    chunks = [streams[i:i + batch] for i in range(0, len(streams), batch)] or [streams]
    workers = min(thread_count(), len(chunks))
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, chunks))


def concat(results):
    """Concatenate per-batch outputs (arrays or tuples of arrays) along axis 0."""
    first = results[0]
    if isinstance(first, tuple):
        return tuple(np.concatenate([r[i] for r in results]) for i in range(len(first)))
    return np.concatenate(results)
