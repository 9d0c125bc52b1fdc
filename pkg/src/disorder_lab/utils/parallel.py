"""Thread-pool execution keyed by task index.

numpy and scipy release the GIL inside the heavy kernels (BLAS products,
FFTs), so a thread pool is enough to keep cores busy. Results are stored by
task index, never by completion order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Sequence, TypeVar

import numpy as np
from tqdm import tqdm

T = TypeVar("T")
R = TypeVar("R")


def run_tasks(
    fn: Callable[[T], R],
    tasks: Sequence[T],
    threads: int = 1,
    desc: str | None = None,
    progress: bool = True,
) -> list[R]:
    """Apply ``fn`` to every task; the i-th result belongs to the i-th task."""
    results: list[R | None] = [None] * len(tasks)
    if threads <= 1 or len(tasks) <= 1:
        for i, task in enumerate(tqdm(tasks, desc=desc, disable=not progress)):
            results[i] = fn(task)
        return results  # type: ignore[return-value]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(fn, task): i for i, task in enumerate(tasks)}
        for future in tqdm(as_completed(futures), total=len(futures), desc=desc, disable=not progress):
            results[futures[future]] = future.result()
    return results  # type: ignore[return-value]


def split_streams(streams: range, chunk: int) -> list[range]:
    """Cut a stream range into contiguous pieces of ``chunk`` streams."""
    return [streams[lo:lo + chunk] for lo in range(0, len(streams), chunk)]


def map_streams(
    fn: Callable[[range], np.ndarray],
    streams: range,
    threads: int = 1,
    chunk: int = 256,
    desc: str | None = None,
    progress: bool = False,
) -> np.ndarray:
    """Evaluate a vectorized per-stream function on pieces of ``streams`` and concatenate.

    Pieces have a fixed size, so each batch sees the same streams and the
    concatenation is bit-identical for any thread count.
    """
    pieces = split_streams(streams, chunk)
    parts = run_tasks(fn, pieces, threads, desc=desc, progress=progress)
    return np.concatenate(parts) if parts else np.empty(0)
