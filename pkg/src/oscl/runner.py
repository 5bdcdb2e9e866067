"""Chunked trial execution with optional process parallelism.

Trials are split into fixed chunks that do not depend on the worker count.
Each chunk returns a dict of integer tallies; tallies are added in chunk
order, so results are identical for any number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

import numpy as np

DEFAULT_CHUNK = 4096


def resolve_workers(workers: int | None = None) -> int:
    """Explicit value, else ``OSCL_WORKERS``, else 1."""
    if workers is None:
        env = os.environ.get("OSCL_WORKERS", "").strip()
        workers = int(env) if env else 1
    return max(1, int(workers))


def chunk_bounds(trials: int, chunk: int) -> list[tuple[int, int]]:
    return [(s, min(s + chunk, trials)) for s in range(0, trials, chunk)]


def _add(acc: dict, part: dict) -> dict:
    for key, val in part.items():
        if key in acc:
            acc[key] = acc[key] + val
        else:
            acc[key] = np.array(val, copy=True) if isinstance(val, np.ndarray) else val
    return acc


def run_chunks(fn: Callable[[int, int, int], dict], trials: int, seed: int,
               chunk: int = DEFAULT_CHUNK, workers: int | None = None) -> dict:
    """Run ``fn(seed, start, stop)`` over all chunks and sum the tallies.

    ``fn`` must be picklable when more than one worker is used.
    """
    bounds = chunk_bounds(int(trials), max(1, int(chunk)))
    workers = resolve_workers(workers)
    acc: dict = {}
    if workers == 1 or len(bounds) == 1:
        for start, stop in bounds:
            _add(acc, fn(seed, start, stop))
        return acc
    with ProcessPoolExecutor(max_workers=min(workers, len(bounds))) as pool:
        futures = [pool.submit(fn, seed, start, stop) for start, stop in bounds]
        for fut in futures:
            _add(acc, fut.result())
    return acc
