"""Worker-pool helper: order-preserving parallel map over picklable items."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_jobs() -> int:
    return os.cpu_count() or 1


def parallel_map(fn, items, jobs: int) -> list:
    """Apply ``fn`` to every item, in order.  ``jobs <= 1`` stays in-process;
    results are identical either way (all randomness comes in via the items)."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
