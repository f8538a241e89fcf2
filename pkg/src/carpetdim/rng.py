"""Seed handling.

Every Monte Carlo replica ``r`` draws from its own Philox stream keyed by
``mix(seed, r)``.  ``mix`` is built from the SplitMix64 finalizer, a
bijection on 64-bit integers, so for a fixed seed distinct replica indices
always get distinct keys.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix(seed: int, stream: int) -> int:
    """64-bit key for sub-stream ``stream`` of ``seed``."""
    return splitmix64((seed & MASK64) ^ splitmix64(stream & MASK64))


def parse_seed(text) -> int:
    """Accept decimal or 0x-prefixed hex; must fit in 64 unsigned bits."""
    if isinstance(text, int):
        value = text
    else:
        value = int(str(text).strip(), 0)
    if not 0 <= value <= MASK64:
        raise ValueError(f"seed {text!r} is not a 64-bit unsigned value")
    return value


def generator(key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=key & MASK64))


def replica_generator(seed: int, replica: int) -> np.random.Generator:
    return generator(mix(seed, replica))


def default_workers() -> int:
    env = os.environ.get("CARPETDIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def ordered_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """``list(map(fn, items))``, optionally fanned out over processes.

    Results come back in item order, so reductions over them do not depend
    on the worker count.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))
