"""Seeded replication: one independent generator stream per replicate.

The stream of replicate ``i`` depends only on ``(master_seed, i)``, so results
are identical whatever the number of worker processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, TypeVar

import numpy as np

T = TypeVar("T")


def replicate_rng(master_seed: int, index: int) -> np.random.Generator:
    """Generator for replicate ``index`` (SeedSequence hash of the pair)."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(index),)))


def _run_chunk(fn, master_seed, lo, hi):
    return [fn(replicate_rng(master_seed, i)) for i in range(lo, hi)]


def run_replications(
    fn: Callable[[np.random.Generator], T],
    R: int,
    master_seed: int,
    workers: int = 1,
    chunk: int = 256,
) -> List[T]:
    """Evaluate ``fn(rng)`` for replicates 0..R-1, ordered by replicate index.

    With ``workers > 1`` the replicates run in a process pool; ``fn`` must then
    be picklable (a module-level function or a sampler object).
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if workers <= 1:
        return _run_chunk(fn, master_seed, 0, R)
    bounds = [(lo, min(lo + chunk, R)) for lo in range(0, R, chunk)]
    out: List[T] = []
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(_run_chunk, fn, master_seed, lo, hi) for lo, hi in bounds]
        for f in futures:
            out.extend(f.result())
    return out
