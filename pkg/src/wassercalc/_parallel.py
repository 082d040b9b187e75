"""Ordered thread-pool map honouring WASSERCALC_THREADS (0 or unset = auto)."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence


def thread_count() -> int:
    raw = os.environ.get("WASSERCALC_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def pmap(fn: Callable, items: Sequence) -> list:
    """``[fn(x) for x in items]``, possibly in parallel; result order is input order."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
