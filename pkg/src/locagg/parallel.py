"""Width-capped parallel map used for per-location work."""

import os
from concurrent.futures import ThreadPoolExecutor


def max_threads():
    """Parallel map width, capped by ``LOCAGG_THREADS`` (default 1)."""
    raw = os.environ.get("LOCAGG_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)


def parallel_map(fn, items, threads=None):
    """Ordered map; results come back in input order regardless of width."""
    items = list(items)
    width = max_threads() if threads is None else max(1, int(threads))
    if width == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(width, len(items))) as pool:
        return list(pool.map(fn, items))
