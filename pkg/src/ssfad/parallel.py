"""Row-level parallelism for per-pixel detectors.

Each detector computes a whole output row with one function call whose
inputs (a read-only padded cube and the row index) fully determine the
result.  Threads only decide *who* computes a row, never *how*, so the
assembled map is bit-identical for any thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return int(threads)


def map_rows(row_fn: Callable[[int], np.ndarray], n_rows: int, threads: Optional[int] = None) -> np.ndarray:
    """Evaluate ``row_fn`` for every row index and stack the results in order."""
    threads = resolve_threads(threads)
    if threads == 1 or n_rows == 1:
        rows = [row_fn(i) for i in range(n_rows)]
    else:
        with ThreadPoolExecutor(max_workers=min(threads, n_rows)) as pool:
            rows = list(pool.map(row_fn, range(n_rows)))
    return np.stack(rows, axis=0)
