"""Jump-truncated Euler scheme for the stochastic Volterra equation.

    X(t) = zeta (1 - b W(t)) + int_0^t int_0^inf int_0^X(s-) (W(t-s) - W(t-s-y)) N~(ds, dy, dz)

On cell k the intensity is frozen at ``X[k]``.  Marks above ``eps`` are
drawn exactly; each jump at time ``s`` with mark ``y`` is split into a
``+W(. - s)`` kick and a ``-W(. - s - y)`` kick.  Kicks landing within
``near_cells`` cells of an output node use a fine table of W, older kicks
are interpolated linearly between W at grid nodes.  The compensator is the
exact expectation of this kick scheme, so the mean identity holds up to
clamping.  Marks below ``eps`` are either dropped or replaced by a Gaussian
increment with the same variance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba as nb
import numpy as np

from ..errors import DomainError, TruncationTooCoarse
from ..measures import LevyMeasure
from ..model import InitialState, ModelParams, TimeGrid
from ..quadrature import gauss_legendre, graded_rule
from ..rng import STATE_SIZE, TAG_SVE, RngContract, next_normal, next_poisson, next_uniform, stream_init
from ..special import scale_W, scale_Wp
from .paths import JumpRecord, PathSample, Scheme, run_chunks


@dataclass(frozen=True)
class SveConfig:
    near_cells: int = 8
    theta_bins: int = 64
    small_jumps: str = "gaussian"  # or "drop"
    truncation_fraction: float = 0.1

    def __post_init__(self):
        if self.small_jumps not in ("gaussian", "drop"):
            raise DomainError("small_jumps must be 'gaussian' or 'drop'")
        if self.near_cells < 1 or self.theta_bins < 1:
            raise DomainError("near_cells and theta_bins must be positive")


DEFAULT_SVE = SveConfig()


@dataclass
class SveTables:
    W: np.ndarray  # W(t_k)
    fine: np.ndarray  # W(j h / M), j = 0..L*M
    comp: np.ndarray  # compensator kernel C[d], C[0] = 0
    nu_bar: float
    m2: float
    eps: float


def _piece_moments(A, B, s, lo, p):
    """``int_A^B (a-s)**p da`` and ``int_A^B (a-s)**p (a-lo) da`` (zero where B <= A)."""
    A = np.asarray(A, float)
    B = np.maximum(np.asarray(B, float), A)
    X1 = A - s
    Z = (B - A) / X1
    J0 = np.zeros_like(A)
    J1 = np.zeros_like(A)
    small = Z <= 0.5
    if np.any(small):
        x, w = gauss_legendre(10)
        z = Z[small, None] * x
        f = (1.0 + z) ** p
        J0[small] = (f @ w) * Z[small]
        J1[small] = ((f * z) @ w) * Z[small]
    big = ~small
    if np.any(big):
        zb = 1.0 + Z[big]
        e1 = (zb ** (p + 1.0) - 1.0) / (p + 1.0)
        e2 = (zb ** (p + 2.0) - 1.0) / (p + 2.0)
        J0[big] = e1
        J1[big] = e2 - e1
    J0 *= X1 ** (p + 1.0)
    J1 *= X1 ** (p + 2.0)
    return J0, J1 + (A - lo) * J0


def _minus_moments(n, h, eps, M, params):
    """Moments of the density of ``-`` kicks per unit ``h X``, by (cell j, theta bin i).

    ``R0[j, i] = int q`` and ``R1[j, i] = int q * local`` over the bin, where
    ``local`` in [0, 1] is the position inside the bin.
    """
    a = params.alpha
    p = -a - 1.0
    T = LevyMeasure(params).tail(1.0)
    w = h / M
    lo = (np.arange(n)[:, None] * M + np.arange(M)[None, :]) * w
    hi = lo + w
    R0 = np.zeros((n, M))
    R1 = np.zeros((n, M))
    # eps <= a < eps + h: (T/h)(eps**p - a**p)
    A = np.maximum(lo, eps)
    B = np.minimum(hi, eps + h)
    L = np.maximum(B - A, 0.0)
    R0 += T / h * eps ** p * L
    R1 += T / h * eps ** p * (L * (A - lo) + 0.5 * L * L)
    J0, J1 = _piece_moments(np.where(L > 0, A, eps), np.where(L > 0, B, eps), 0.0, lo, p)
    R0 -= T / h * J0
    R1 -= T / h * J1
    # a >= eps + h: (T/h)((a-h)**p - a**p)
    A = np.maximum(lo, eps + h)
    B = np.maximum(hi, A)
    J0, J1 = _piece_moments(A, B, h, lo, p)
    R0 += T / h * J0
    R1 += T / h * J1
    J0, J1 = _piece_moments(A, B, 0.0, lo, p)
    R0 -= T / h * J0
    R1 -= T / h * J1
    return R0, R1 / w


def build_tables(params: ModelParams, grid: TimeGrid, eps: float, config: SveConfig = DEFAULT_SVE) -> SveTables:
    n, h = grid.n_steps, grid.h
    L, M = min(config.near_cells, n), config.theta_bins
    lev = LevyMeasure(params)
    nu_bar = float(lev.tail(eps))
    W = np.zeros(n + 1)
    W[1:] = scale_W(np.arange(1, n + 1) * h, params)
    fine = np.zeros(L * M + 1)
    fine[1:] = scale_W(np.arange(1, L * M + 1) * (h / M), params)

    # kick value for lag e and bin i: kap[e, i] = W((e - i/M) h)
    d = np.arange(n + 1)
    kplus = np.zeros(n + 1)
    kplus[1:] = 0.5 * (W[1:] + W[:-1])
    kap = np.zeros((L + 1, M + 1))
    for e in range(1, L + 1):
        kap[e] = fine[e * M - np.arange(M + 1)]
        kplus[e] = 0.5 * np.sum(kap[e, :-1] + kap[e, 1:]) / M

    R0, R1 = _minus_moments(n, h, eps, M, params)
    S0 = R0.sum(axis=1)
    S1 = (R0 * np.arange(M) + R1).sum(axis=1) / M
    kminus = np.zeros(n + 1)
    # far lags e > L: linear in theta between W(e h) and W((e-1) h)
    far0 = np.zeros(n + 1)
    far1 = np.zeros(n + 1)
    far0[L + 1:] = W[L + 1:]
    far1[L + 1:] = W[L:-1] - W[L + 1:]
    kminus += np.convolve(S0, far0)[:n + 1] + np.convolve(S1, far1)[:n + 1]
    for e in range(1, L + 1):
        near = R0 @ kap[e, :-1] + R1 @ np.diff(kap[e])
        kminus[e:] += near[:n + 1 - e]
    comp = nu_bar * kplus - kminus
    comp[0] = 0.0
    m2 = float(lev.small_jump_second_moment(eps)) if config.small_jumps == "gaussian" else 0.0
    return SveTables(W, fine, comp, nu_bar, m2, eps)


@nb.njit(cache=True, nogil=True, inline="always", error_model="numpy", boundscheck=False)
def _add_kick(k, theta, w, n, L, M, near, NF, P, Q):
    """Kick of weight ``w`` at time ``(k + theta) h``; ``near[i, e] = W((e M - i) h / M)``."""
    pos = theta * M
    i = int(pos)
    if i >= M:
        i = M - 1
    f = pos - i
    top = n - k
    if top > L:
        top = L
    r0 = near[i]
    r1 = near[i + 1]
    for e in range(1, top + 1):
        NF[k + e] += w * ((1.0 - f) * r0[e] + f * r1[e])
    P[k] += w * (1.0 - theta)
    Q[k] += w * theta


@nb.njit(cache=True, nogil=True, fastmath=True)
def _history(m, L, off, P, Q, Hx, Wrev, Crev):
    acc = 0.0
    for kp in range(0, m - L):
        acc += P[kp] * Wrev[off + kp] + Q[kp] * Wrev[off + kp + 1]
    for j in range(m):
        acc -= Hx[j] * Crev[off + j]
    return acc


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _sve_kernel(start, stop, seed, n, h, eps, alpha, nu_bar, m2, L, M, Wrev, near, Crev, base,
                zeta, exp_mean, out, clamps, emit, jt, jy, jn):
    state = np.zeros(STATE_SIZE, dtype=np.uint64)
    pos = np.zeros(1, dtype=np.int64)
    NF = np.zeros(n + 1)
    P = np.zeros(n)
    Q = np.zeros(n)
    Hx = np.zeros(n)
    inv = -1.0 / (alpha + 1.0)
    for p in range(start, stop):
        stream_init(state, pos, seed, p, TAG_SVE)
        row = out[p - start]
        NF[:] = 0.0
        P[:] = 0.0
        Q[:] = 0.0
        Hx[:] = 0.0
        z0 = zeta
        if exp_mean > 0.0:
            z0 = -exp_mean * math.log(next_uniform(state, pos))
        row[0] = z0
        nclamp = 0
        njump = 0
        for k in range(n):
            xk = row[k]
            Hx[k] = h * xk
            if xk > 0.0:
                cnt = next_poisson(state, pos, h * xk * nu_bar)
                for _ in range(cnt):
                    th = next_uniform(state, pos)
                    y = eps * next_uniform(state, pos) ** inv
                    if emit:
                        if njump < jt.size:
                            jt[njump] = (k + th) * h
                            jy[njump] = y
                        njump += 1
                    _add_kick(k, th, 1.0, n, L, M, near, NF, P, Q)
                    a = th + y / h
                    if a < n - k:
                        ia = int(a)
                        _add_kick(k + ia, a - ia, -1.0, n, L, M, near, NF, P, Q)
                if m2 > 0.0:
                    z = math.sqrt(h * xk * m2) * next_normal(state, pos)
                    _add_kick(k, 0.0, z / h, n, L, M, near, NF, P, Q)
                    if k + 1 < n:
                        _add_kick(k + 1, 0.0, -z / h, n, L, M, near, NF, P, Q)
            m = k + 1
            acc = z0 * base[m] + NF[m]
            acc += _history(m, L, n - m, P, Q, Hx, Wrev, Crev)
            if acc < 0.0:
                acc = 0.0
                nclamp += 1
            row[m] = acc
        clamps[p - start] = nclamp
        if emit:
            jn[0] = njump


def _initial(zeta):
    if isinstance(zeta, InitialState):
        return (zeta.fixed_zeta, 0.0) if zeta.is_fixed else (0.0, zeta.exponential_mean)
    z = float(zeta)
    if not (z >= 0.0 and math.isfinite(z)):
        raise DomainError(f"initial mass must be >= 0, got {zeta}")
    return z, 0.0


def _prepare(params, grid, eps, config, zeta_mean):
    eps = grid.h if eps is None else float(eps)
    if not eps > 0:
        raise DomainError(f"eps must be > 0, got {eps}")
    tables = build_tables(params, grid, eps, config)
    if config.small_jumps == "drop" and zeta_mean > 0:
        pred = isometry_variance(params, zeta_mean, grid.t_max)
        lost = float(LevyMeasure(params).small_jump_second_moment(eps)) * grid.t_max
        if lost > config.truncation_fraction * pred:
            warnings.warn(f"dropped small-jump second moment {lost:.3g} exceeds "
                          f"{config.truncation_fraction} of the predicted variance {pred:.3g}",
                          TruncationTooCoarse, stacklevel=3)
    return tables


def _run(params, grid, tables, config, zeta, exp_mean, seed, start, stop, emit=False, cap=0):
    n = grid.n_steps
    L, M = min(config.near_cells, n), config.theta_bins
    base = 1.0 - params.b * tables.W
    Crev = np.ascontiguousarray(tables.comp[::-1])
    Wrev = np.ascontiguousarray(tables.W[::-1])
    out = np.empty((stop - start, n + 1))
    clamps = np.zeros(stop - start, dtype=np.int64)
    jt = np.empty(cap)
    jy = np.empty(cap)
    jn = np.zeros(1, dtype=np.int64)
    # row i holds the fine-table values seen by a kick in theta-bin i, lag by lag
    near = np.zeros((M + 1, L + 1))
    near[:, 1:] = tables.fine[np.arange(1, L + 1)[None, :] * M - np.arange(M + 1)[:, None]]
    _sve_kernel(start, stop, np.uint64(seed), n, grid.h, tables.eps, params.alpha, tables.nu_bar,
                tables.m2, L, M, Wrev, near, Crev, base, zeta, exp_mean, out, clamps,
                emit, jt, jy, jn)
    return out, clamps, jt, jy, int(jn[0])


def simulate_sve(params: ModelParams, zeta, grid: TimeGrid, eps: float | None = None,
                 rng: RngContract | None = None, config: SveConfig = DEFAULT_SVE,
                 emit_jumps: bool = False) -> PathSample:
    """One path of the truncated scheme; ``eps`` defaults to the step size."""
    rng = rng or RngContract(0, 0)
    z, em = _initial(zeta)
    tables = _prepare(params, grid, eps, config, z or em)
    p = int(rng.stream_id)
    cap = 4096 if emit_jumps else 0
    while True:
        out, clamps, jt, jy, nj = _run(params, grid, tables, config, z, em, rng.seed, p, p + 1,
                                       emit_jumps, cap)
        if nj <= cap:
            break
        cap = nj
    jumps = [JumpRecord(float(s), float(y)) for s, y in zip(jt[:nj], jy[:nj])] if emit_jumps else []
    return PathSample(grid, out[0], jumps, rng.seed, rng.stream_id, Scheme.SVE_EULER, int(clamps[0]))


@dataclass
class SveBatch:
    grid: TimeGrid
    n_paths: int
    seed: int
    mean: np.ndarray
    var: np.ndarray
    final: np.ndarray
    clamp_events: np.ndarray
    gconv: np.ndarray | None = None
    paths: np.ndarray | None = None


def _merge(stats, chunk):
    """Pairwise-free sequential merge of (count, mean, M2) in chunk order."""
    n1, m1, s1 = stats
    n2 = chunk.shape[0]
    m2 = chunk.mean(axis=0)
    s2 = ((chunk - m2) ** 2).sum(axis=0)
    if n1 == 0:
        return n2, m2, s2
    n = n1 + n2
    d = m2 - m1
    return n, m1 + d * (n2 / n), s1 + s2 + d * d * (n1 * n2 / n)


def trapezoid_weights(g, grid: TimeGrid):
    """Weights ``w`` with ``w @ X = int_0^T g(T-s) X(s) ds`` by the trapezoid rule."""
    t = grid.nodes
    gv = np.asarray(g(grid.t_max - t) if callable(g) else np.broadcast_to(g, t.shape), dtype=complex)
    w = gv * grid.h
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def simulate_sve_batch(params: ModelParams, zeta, grid: TimeGrid, n_paths: int, seed: int,
                       eps: float | None = None, config: SveConfig = DEFAULT_SVE,
                       threads: int | None = None, keep_paths: bool = False, g=None) -> SveBatch:
    """Paths with stream ids ``0..n_paths-1``; statistics are reduced in stream order."""
    z, em = _initial(zeta)
    tables = _prepare(params, grid, eps, config, z or em)
    gw = None if g is None else trapezoid_weights(g, grid)

    def work(a, b):
        out, clamps, *_ = _run(params, grid, tables, config, z, em, seed, a, b)
        return out, clamps

    chunks = run_chunks(work, n_paths, threads)
    stats = (0, None, None)
    finals, clamps, gconv, keep = [], [], [], []
    for out, cl in chunks:
        stats = _merge(stats, out)
        finals.append(out[:, -1].copy())
        clamps.append(cl)
        if gw is not None:
            gconv.append(out @ gw)
        if keep_paths:
            keep.append(out)
    n, mean, m2 = stats
    var = m2 / max(n - 1, 1)
    return SveBatch(grid, n_paths, seed, mean, var, np.concatenate(finals), np.concatenate(clamps),
                    np.concatenate(gconv) if gw is not None else None,
                    np.vstack(keep) if keep_paths else None)


def isometry_variance(params: ModelParams, zeta: float, T: float, n: int = 40) -> float:
    """``Var X(T) = int_0^T zeta (1 - bW(T-u)) J(u) du`` with ``J(u) = int_0^inf (W(u) - W(u-y))**2 nu(dy)``.

    With ``y = u r`` the mark integral over ``y < u`` has an ``r**(-alpha)``
    singularity at 0 and a ``(1-r)**alpha`` kink at 1; ``y > u`` contributes
    ``W(u)**2 nu_bar(u)``.  ``J(u)`` behaves like ``u**(alpha-1)``.  Every
    piece is integrated with a rule graded towards its singular end.
    """
    a = params.alpha
    lev = LevyMeasure(params)
    W = lambda x: np.where(x > 0, scale_W(np.maximum(x, 1e-300), params), 0.0)
    u1, wu1 = graded_rule(0.0, 0.5 * T, n, 1.0 / a, "left")
    # bounded kinks (1-r)**alpha and (T-u)**alpha: an integer power q with q alpha >= 2
    q = math.ceil(2.0 / a)
    u2, wu2 = graded_rule(0.5 * T, T, n, q, "right")
    u = np.concatenate([u1, u2])
    wu = np.concatenate([wu1, wu2])
    r1, wr1 = graded_rule(0.0, 0.5, n, 1.0 / (1.0 - a), "left")
    r2, wr2 = graded_rule(0.5, 1.0, n, q, "right")
    r = np.concatenate([r1, r2])
    wr = np.concatenate([wr1, wr2])
    Wu = W(u)
    uu = u[:, None]
    diff = Wu[:, None] - W(uu * (1.0 - r[None, :]))
    # short differences as u r times the mean of W' over [u(1-r), u], free of cancellation
    small = r < 0.05
    x, wx = gauss_legendre(8)
    rs = r[small][:, None]
    wp = scale_Wp(uu[..., None] * (1.0 - rs * x), params)
    diff[:, small] = uu * r[small] * (wp @ wx)
    J = lev.c_nu * u ** (-a - 1.0) * ((diff ** 2 * r ** (-a - 2.0)) @ wr) + Wu ** 2 * lev.tail(u)
    return float(zeta * np.sum(wu * (1.0 - params.b * W(T - u)) * J))
