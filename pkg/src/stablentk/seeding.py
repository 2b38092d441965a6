"""Splittable seeding and replicate-parallel execution.

Every Monte Carlo replicate draws from its own generator, keyed by
``(master_seed, stream, index)``.  The key never depends on how replicates are
partitioned across workers, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits


def stream_id(name: str) -> int:
    """Stable 32-bit integer for a textual stream name."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")


def replicate_rng(master_seed: int, stream: str | int, index: int) -> np.random.Generator:
    """Generator for replicate ``index`` of ``stream`` under ``master_seed``."""
    sid = stream_id(stream) if isinstance(stream, str) else int(stream)
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(sid, int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def _run_chunk(fn: Callable[[int], Any], indices: Sequence[int]) -> list:
    with threadpool_limits(1):
        return [fn(i) for i in indices]


def _chunks(n: int, size: int) -> list[range]:
    return [range(lo, min(lo + size, n)) for lo in range(0, n, size)]


def map_replicates(
    fn: Callable[[int], Any],
    n: int,
    workers: int = 1,
    chunk_size: int | None = None,
) -> list:
    """Evaluate ``fn(i)`` for ``i in range(n)`` and return results in index order.

    ``fn`` must be picklable when ``workers > 1`` (module-level function or a
    ``functools.partial`` of one).  BLAS is pinned to one thread in every
    path so reductions are ordered identically regardless of ``workers``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if n == 0:
        return []
    if workers == 1:
        return _run_chunk(fn, range(n))
    size = chunk_size or max(1, -(-n // (4 * workers)))
    out: list = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, fn, c) for c in _chunks(n, size)]
        for fut in futures:
            out.extend(fut.result())
    return out
