"""Path containers and the batch orchestrator shared by the engines."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..model import TimeGrid

# paths are simulated in fixed chunks; chunk boundaries depend only on the
# path count, never on the number of threads
CHUNK = 1024


class Scheme(str, Enum):
    SVE_EULER = "sve_euler"
    CMJ_PRELIMIT = "cmj_prelimit"
    CP_LOCALTIME = "cp_localtime"


@dataclass(frozen=True)
class JumpRecord:
    time: float
    mark: float


@dataclass
class PathSample:
    grid: TimeGrid
    values: np.ndarray
    jumps: list = field(default_factory=list)
    seed: int = 0
    stream_id: int = 0
    scheme: Scheme = Scheme.SVE_EULER
    clamp_events: int = 0

    @property
    def times(self):
        return self.grid.nodes


def default_threads() -> int:
    return max(1, os.cpu_count() or 1)


def run_chunks(fn, n_paths: int, threads: int | None = None):
    """Call ``fn(start, stop)`` over fixed chunks of path indices; results come back in index order."""
    bounds = [(i, min(i + CHUNK, n_paths)) for i in range(0, n_paths, CHUNK)]
    threads = default_threads() if threads is None else int(threads)
    if threads <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda ab: fn(*ab), bounds))
