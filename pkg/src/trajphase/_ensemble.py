"""Deterministic trajectory streams and optional process parallelism.

Trajectory i always draws from the stream spawned at index i from the run
seed, and chunk results are reduced in index order, so ensemble output is
byte-identical for every TRAJPHASE_THREADS setting.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

_T = TypeVar("_T")
_R = TypeVar("_R")

THREADS_ENV = "TRAJPHASE_THREADS"


def trajectory_seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(count)


def sampling_grid(total_time: float, delta_t: float) -> tuple[int, float]:
    """Number of steps and effective step so the grid ends exactly at
    total_time; warns when delta_t had to move to make that true."""
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    if total_time < delta_t:
        raise ValueError("total_time must be at least delta_t")
    steps = round(total_time / delta_t)
    dt = total_time / steps
    if abs(dt - delta_t) > 1e-9 * max(1.0, delta_t):
        warnings.warn(
            f"delta_t adjusted from {delta_t:g} to {dt:g} so the grid ends at total_time",
            RuntimeWarning,
            stacklevel=3,
        )
    return steps, dt


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        warnings.warn(
            f"ignoring non-integer {THREADS_ENV}={raw!r}", RuntimeWarning, stacklevel=2
        )
        return 1
    return max(1, value)


def map_ordered(fn: Callable[[_T], _R], jobs: Sequence[_T]) -> list[_R]:
    """fn over jobs, preserving job order in the result list."""
    workers = min(thread_count(), len(jobs))
    if workers <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))
