"""Local times in level of a compound Poisson process with drift -1.

The path starts at a height drawn from the size-biased law, decreases with
slope -1, jumps up by Pareto amounts at rate ``gamma`` and is stopped when
it first reaches 0.  For a slope -1 path the occupation density at level
``l`` equals the number of downward passages through ``l``.  Each linear
piece ``[lo, hi)`` contributes one passage to every level in it, which is
accumulated with a difference array on the level grid.

Only levels up to ``level_max`` are recorded.  A path above ``level_max``
creeps back down through it (there are no downward jumps) and then starts
afresh from there, so the excursion above is skipped: one passage is
counted at ``level_max`` and the height is reset to it.  This keeps the
counts on ``[0, level_max]`` exact while avoiding the very long excursions
of the critical case.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from ..errors import DomainError, PathBudgetExceeded
from ..model import TimeGrid
from ..rng import STATE_SIZE, TAG_CP, RngContract, next_uniform, stream_init
from .paths import PathSample, Scheme, run_chunks

DEFAULT_EVENT_CAP = 50_000_000


@nb.njit(cache=True, nogil=True, inline="always")
def _segment(diff, lo, hi, dl, m):
    """Add one passage to the levels ``i * dl`` in ``[lo, hi)``."""
    i0 = int(math.ceil(lo / dl - 1e-12))
    if i0 > m:
        return
    i1 = int(math.ceil(hi / dl - 1e-12))
    if i1 > m + 1:
        i1 = m + 1
    if i1 > i0:
        diff[i0] += 1
        diff[i1] -= 1


@nb.njit(cache=True, nogil=True)
def _cp_kernel(start, stop, seed, gamma, alpha, dl, m, cap, out, status, start_height):
    state = np.zeros(STATE_SIZE, dtype=np.uint64)
    pos = np.zeros(1, dtype=np.int64)
    diff = np.zeros(m + 2, dtype=np.int64)
    inv_life = -1.0 / (alpha + 1.0)
    inv_res = -1.0 / alpha
    for p in range(start, stop):
        stream_init(state, pos, seed, p, TAG_CP)
        diff[:] = 0
        if start_height > 0.0:
            x = start_height
        else:
            x = next_uniform(state, pos) ** inv_res - 1.0
        top = m * dl
        if x > top:
            diff[m] += 1
            diff[m + 1] -= 1
            x = top
        events = 0
        failed = 0
        while True:
            # time to the next jump; the path hits 0 first if that takes longer than x
            w = -math.log(next_uniform(state, pos)) / gamma
            if w >= x:
                _segment(diff, 0.0, x, dl, m)
                break
            _segment(diff, x - w, x, dl, m)
            x = x - w + next_uniform(state, pos) ** inv_life - 1.0
            if x > top:
                diff[m] += 1
                diff[m + 1] -= 1
                x = top
            events += 1
            if events > cap:
                failed = 1
                break
        row = out[p - start]
        acc = 0
        for i in range(m + 1):
            acc += diff[i]
            row[i] = acc
        status[p - start] = failed


def _check(gamma, alpha):
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not (0.0 < gamma <= alpha * (1.0 + 1e-12)):
        raise DomainError(f"need 0 < gamma <= alpha for the path to reach 0, got gamma={gamma}")


def cp_localtime_counts(gamma: float, alpha: float, levels: TimeGrid, n_paths: int, seed: int,
                        cap: int = DEFAULT_EVENT_CAP, threads: int | None = None,
                        start_height: float | None = None) -> np.ndarray:
    """Passage counts at the level nodes, one row per path."""
    _check(gamma, alpha)
    s0 = -1.0 if start_height is None else float(start_height)
    if start_height is not None and not s0 > 0:
        raise DomainError("start_height must be > 0")

    def work(a, b):
        out = np.zeros((b - a, levels.n_steps + 1), dtype=np.int64)
        status = np.zeros(b - a, dtype=np.int64)
        _cp_kernel(a, b, np.uint64(seed), float(gamma), float(alpha), levels.h, levels.n_steps, int(cap),
                   out, status, s0)
        if status.any():
            raise PathBudgetExceeded(f"more than {cap} jumps before reaching 0 on path {a + int(np.argmax(status))}")
        return out

    return np.vstack(run_chunks(work, n_paths, threads))


def simulate_cp_localtime(gamma: float, level_max: float, rng: RngContract | None = None, alpha: float = 0.5,
                          n_levels: int = 100, cap: int = DEFAULT_EVENT_CAP,
                          start_height: float | None = None) -> PathSample:
    """Local time in level on ``n_levels`` cells of [0, level_max] for one path."""
    rng = rng or RngContract(0, 0)
    _check(gamma, alpha)
    levels = TimeGrid(level_max, n_levels)
    s0 = -1.0 if start_height is None else float(start_height)
    out = np.zeros((1, n_levels + 1), dtype=np.int64)
    status = np.zeros(1, dtype=np.int64)
    _cp_kernel(int(rng.stream_id), int(rng.stream_id) + 1, np.uint64(rng.seed), float(gamma), float(alpha),
               levels.h, n_levels, int(cap), out, status, s0)
    if status[0]:
        raise PathBudgetExceeded(f"more than {cap} jumps before reaching 0")
    return PathSample(levels, out[0].astype(float), [], rng.seed, rng.stream_id, Scheme.CP_LOCALTIME)
