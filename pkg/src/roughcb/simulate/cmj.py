"""Event-driven simulation of the binary Crump-Mode-Jagers prelimit.

Individuals live for a Pareto time (tail ``(1+x)**(-alpha-1)``) and give
birth at rate ``gamma`` while alive; ancestors start with residual lives
from the size-biased law (tail ``(1+x)**(-alpha)``).  The population is
advanced from event to event, so there is no time discretization.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from ..errors import DomainError, MemoryBudgetExceeded, SubcriticalRateError
from ..model import TimeGrid
from ..rng import STATE_SIZE, TAG_CMJ, RngContract, next_uniform, stream_init
from .paths import PathSample, Scheme, run_chunks

DEFAULT_POPULATION_CAP = 5_000_000


def cmj_rate(n: int, alpha: float, beta: float) -> float:
    """``gamma_n = alpha (1 - beta n**(-alpha))``."""
    return alpha * (1.0 - beta * float(n) ** (-alpha))


def initial_count(n: int, alpha: float, zeta: float) -> int:
    return int(math.floor(zeta * float(n) ** alpha + 1e-12))


@nb.njit(cache=True, nogil=True, inline="always")
def _push(heap, size, x):
    i = size
    heap[i] = x
    while i > 0:
        par = (i - 1) >> 1
        if heap[par] <= heap[i]:
            break
        heap[par], heap[i] = heap[i], heap[par]
        i = par


@nb.njit(cache=True, nogil=True, inline="always")
def _pop(heap, size):
    last = size - 1
    heap[0] = heap[last]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= last:
            break
        c = l
        if l + 1 < last and heap[l + 1] < heap[l]:
            c = l + 1
        if heap[i] <= heap[c]:
            break
        heap[i], heap[c] = heap[c], heap[i]
        i = c


@nb.njit(cache=True, nogil=True)
def _cmj_kernel(start, stop, seed, k0, gamma, alpha, times, cap, out, status):
    """Population counts at ``times`` (unscaled clock) for paths ``start..stop-1``.

    ``status[p] = 1`` flags a path whose live population exceeded ``cap``.
    """
    state = np.zeros(STATE_SIZE, dtype=np.uint64)
    pos = np.zeros(1, dtype=np.int64)
    heap = np.empty(max(16, 2 * k0))
    horizon = times[-1]
    inv_life = -1.0 / (alpha + 1.0)
    inv_res = -1.0 / alpha
    nt = times.size
    for p in range(start, stop):
        stream_init(state, pos, seed, p, TAG_CMJ)
        row = out[p - start]
        size = 0
        for _ in range(k0):
            _push(heap, size, next_uniform(state, pos) ** inv_res - 1.0)
            size += 1
        t = 0.0
        it = 0
        failed = 0
        while it < nt:
            tb = np.inf
            if size > 0:
                tb = t - math.log(next_uniform(state, pos)) / (gamma * size)
            td = heap[0] if size > 0 else np.inf
            tn = tb if tb < td else td
            while it < nt and times[it] < tn:
                row[it] = size
                it += 1
            if it >= nt or tn > horizon:
                break
            t = tn
            if tb < td:
                if size >= cap:
                    failed = 1
                    break
                if size >= heap.size:
                    bigger = np.empty(2 * heap.size)
                    bigger[:size] = heap[:size]
                    heap = bigger
                _push(heap, size, t + next_uniform(state, pos) ** inv_life - 1.0)
                size += 1
            else:
                _pop(heap, size)
                size -= 1
        while it < nt:
            row[it] = size
            it += 1
        status[p - start] = failed


def _check(alpha, gamma):
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not gamma > 0.0:
        raise SubcriticalRateError(f"birth rate gamma_n = {gamma} must be positive; increase n")
    if gamma > alpha * (1.0 + 1e-12):
        raise DomainError(f"birth rate {gamma} exceeds alpha = {alpha} (supercritical)")


def cmj_counts(k0: int, gamma: float, alpha: float, times, n_paths: int, seed: int,
               cap: int = DEFAULT_POPULATION_CAP, threads: int | None = None) -> np.ndarray:
    """Unscaled population counts ``Z(times)`` with ``k0`` ancestors; one row per path."""
    _check(alpha, gamma)
    times = np.ascontiguousarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise DomainError("times must be a nonempty nondecreasing array of nonnegative values")
    if k0 < 0:
        raise DomainError("the number of ancestors must be >= 0")

    def work(a, b):
        out = np.zeros((b - a, times.size), dtype=np.int64)
        status = np.zeros(b - a, dtype=np.int64)
        _cmj_kernel(a, b, np.uint64(seed), int(k0), float(gamma), float(alpha), times, int(cap), out, status)
        if status.any():
            raise MemoryBudgetExceeded(f"live population exceeded {cap} on path {a + int(np.argmax(status))}")
        return out

    return np.vstack(run_chunks(work, n_paths, threads))


def simulate_cmj(n: int, zeta: float, beta: float, t_max: float, rng: RngContract | None = None,
                 alpha: float = 0.5, n_steps: int = 100, cap: int = DEFAULT_POPULATION_CAP) -> PathSample:
    """``X^(n)(t_k) = n**(-alpha) Z(n t_k)`` on ``n_steps`` cells of [0, t_max]."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n}")
    rng = rng or RngContract(0, 0)
    grid = TimeGrid(t_max, n_steps)
    gamma = cmj_rate(n, alpha, beta)
    _check(alpha, gamma)
    k0 = initial_count(n, alpha, zeta)
    out = np.zeros((1, n_steps + 1), dtype=np.int64)
    status = np.zeros(1, dtype=np.int64)
    _cmj_kernel(int(rng.stream_id), int(rng.stream_id) + 1, np.uint64(rng.seed), k0, gamma, float(alpha),
                np.ascontiguousarray(n * grid.nodes), int(cap), out, status)
    if status[0]:
        raise MemoryBudgetExceeded(f"live population exceeded {cap}")
    return PathSample(grid, out[0] * float(n) ** (-alpha), [], rng.seed, rng.stream_id, Scheme.CMJ_PRELIMIT)


def simulate_cmj_batch(n: int, zeta: float, beta: float, grid: TimeGrid, n_paths: int, seed: int,
                       alpha: float = 0.5, cap: int = DEFAULT_POPULATION_CAP, threads: int | None = None):
    """Rescaled paths ``X^(n)`` at the grid nodes, one row per stream id."""
    gamma = cmj_rate(n, alpha, beta)
    _check(alpha, gamma)
    k0 = initial_count(n, alpha, zeta)
    z = cmj_counts(k0, gamma, alpha, n * grid.nodes, n_paths, seed, cap, threads)
    return z * float(n) ** (-alpha)
