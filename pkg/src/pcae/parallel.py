"""Thread-count policy shared by the per-source and per-pair loops."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    """Parallelism cap from PCAE_THREADS; unset or empty means serial.

    Raises ValueError on a non-integer or non-positive setting so a typo
    surfaces instead of silently running serial.
    """
    raw = os.environ.get("PCAE_THREADS", "").strip()
    if not raw:
        return 1
    try:
        t = int(raw)
    except ValueError:
        raise ValueError(f"PCAE_THREADS must be a positive integer, got {raw!r}") from None
    if t < 1:
        raise ValueError(f"PCAE_THREADS must be a positive integer, got {raw!r}")
    return t


def parallel_map(fn, items) -> list:
    """Order-preserving map over items with at most thread_count() workers.

    Work items must be independent; results are identical to the serial path,
    threads only change wall-clock.
    """
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))
