"""Replicate RNG streams and the order-stable parallel map used by every bootstrap."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

R = TypeVar("R")

# stream tags keep bootstrap, simulation, and method draws disjoint
STREAM_PWB = 1
STREAM_MBB = 2
STREAM_ETBB = 3
STREAM_WEB = 4
STREAM_SIM = 10


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator keyed by (master seed, *key); order of use is irrelevant."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("PANELQBOOT_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def ordered_map(fn: Callable[[int], R], items: Sequence[int], threads: int | None = None) -> list[R]:
    """``[fn(i) for i in items]``, possibly on worker threads; output order is input order."""
    threads = resolve_threads(threads)
    if threads == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
