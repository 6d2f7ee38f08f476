"""Block-level execution control and stage instrumentation.

Independent block tasks (WY compaction, per-block gradient subproblems) are
split into contiguous chunks of blocks. Each chunk is processed by a
vectorised kernel and writes into its own slice of a preallocated output, so
no reductions happen across workers and results do not depend on timing.
"""
from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

_lock = threading.Lock()
_num_threads = 1
_executors: dict[int, ThreadPoolExecutor] = {}


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-linux
        return os.cpu_count() or 1


def get_num_threads() -> int:
    return _num_threads


def set_num_threads(n: int) -> int:
    """Set the worker count for block-parallel steps; 0 means all cores.

    Returns the previous value. ``1`` forces single-threaded execution.
    """
    global _num_threads
    if n < 0:
        raise ValueError(f"thread count must be >= 0, got {n}")
    previous = _num_threads
    _num_threads = available_cores() if n == 0 else int(n)
    return previous


@contextmanager
def num_threads(n: int):
    previous = set_num_threads(n)
    try:
        yield
    finally:
        set_num_threads(previous)


def _executor(workers: int) -> ThreadPoolExecutor:
    with _lock:
        ex = _executors.get(workers)
        if ex is None:
            ex = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="hhsvd")
            _executors[workers] = ex
        return ex


def chunk_bounds(n_items: int, n_chunks: int) -> list[tuple[int, int]]:
    n_chunks = max(1, min(n_chunks, n_items))
    base, extra = divmod(n_items, n_chunks)
    bounds, lo = [], 0
    for c in range(n_chunks):
        hi = lo + base + (1 if c < extra else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def parallel_chunks(fn, n_items: int) -> list:
    """Run ``fn(lo, hi)`` over contiguous chunks covering ``range(n_items)``.

    Chunks run concurrently when more than one worker is configured. Results
    are returned in chunk order.
    """
    if n_items == 0:
        return []
    bounds = chunk_bounds(n_items, _num_threads)
    if len(bounds) == 1:
        return [fn(0, n_items)]
    ex = _executor(len(bounds))
    futures = [ex.submit(fn, lo, hi) for lo, hi in bounds]
    return [f.result() for f in futures]


@dataclass
class StageCounter:
    """Counts sequential stages: work that cannot overlap its predecessor.

    Concurrent tasks are merged with :meth:`merge_parallel`, which adds the
    longest task only.
    """

    stages: int = 0

    def tick(self, k: int = 1) -> None:
        self.stages += k

    def merge_parallel(self, task_stages) -> None:
        task_stages = list(task_stages)
        if task_stages:
            self.stages += max(task_stages)
