"""Small shared helpers: worker-count policy and exact float formatting."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence


def effective_threads(requested: int | None = None) -> int:
    """Worker count: min(requested or cpu_count, MAGPRINT_THREADS cap), >= 1."""
    cap_env = os.environ.get("MAGPRINT_THREADS", "").strip()
    cap = int(cap_env) if cap_env else (os.cpu_count() or 1)
    if cap < 1:
        cap = 1
    n = requested if requested is not None else cap
    return max(1, min(n, cap))


def parallel_map(fn: Callable, items: Sequence, n_jobs: int | None = None) -> list:
    """Order-preserving map; forks worker processes only when it can help.

    Results are independent of the worker count: tasks carry their own seeds and
    the output order always matches the input order.
    """
    jobs = effective_threads(n_jobs)
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def fmt_float(x: float) -> str:
    """17 significant digits: enough to round-trip any IEEE-754 double exactly."""
    return format(float(x), ".17g")


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow(list(row))
