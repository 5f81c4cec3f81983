"""Linear resolvents, the operator V_alpha and the nonlinear Volterra solver.

The solver marches

    v(t) = lam W'(t) + ((g + V v) * W')(t)

on a uniform grid.  Convolutions against W' use the exact increments of W
(product integration), with the forcing taken at cell midpoints.  On the
first cell the forcing is modelled as ``F(h/2) (s/(h/2))**(alpha-1)``,
matching the small-time profile of ``V v``.

Between nodes, v is represented as ``s**(alpha-1) (A + B s**alpha)`` on each
cell j >= 1 and as ``lam W'(s) + u1 (s/h)**(2 alpha - 1)`` on the first cell,
so that the cumulative integral has a closed form everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DomainError,
    GridMismatch,
    PicardDivergence,
    PoleError,
    QuadratureFailure,
    SingularStep,
)
from .measures import LevyMeasure
from .model import InitialState, ModelParams, TimeGrid
from .quadrature import (
    extrapolate_to_zero,
    gauss_legendre,
    graded_rule,
    power_basis_exponents,
)
from .special import scale_W, scale_Wp


@dataclass(frozen=True)
class QuadConfig:
    y_nodes: int = 48
    y_min_factor: float = 0.125
    picard_tol: float = 1e-12
    picard_max_iter: int = 50

    def __post_init__(self):
        if self.y_nodes < 16:
            raise ValueError("y_nodes must be >= 16")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be > 0")
        if not self.y_min_factor > 0:
            raise ValueError("y_min_factor must be > 0")
        if self.picard_max_iter < 1:
            raise ValueError("picard_max_iter must be >= 1")


DEFAULT_QUAD = QuadConfig()


# --------------------------------------------------------------------------
# convolution weights and linear resolvents


@dataclass(frozen=True)
class ConvWeights:
    """Product-integration weights ``w[k][j] = W(t_k - t_j) - W(t_k - t_{j+1})``."""

    grid: TimeGrid
    W: np.ndarray
    increments: np.ndarray  # increments[d] = W(d h) - W((d-1) h), increments[0] = 0

    def row(self, k: int) -> np.ndarray:
        """Weights ``w[k][j]`` for ``j = 0..k-1``."""
        return self.increments[k - np.arange(k)]


def conv_weights(grid: TimeGrid, params: ModelParams) -> ConvWeights:
    W = scale_W(grid.nodes, params)
    inc = np.concatenate(([0.0], np.diff(W)))
    return ConvWeights(grid, W, inc)


def pareto_tail(t, alpha):
    return (1.0 + np.asarray(t, dtype=float)) ** (-alpha - 1.0)


def resolvent_solve(gamma: float, grid: TimeGrid, alpha: float) -> np.ndarray:
    """Solve ``R = gamma L + gamma L * R`` with ``L(t) = (1+t)**(-alpha-1)`` by the trapezoid rule."""
    if not gamma > 0:
        raise DomainError("gamma must be > 0")
    h = grid.h
    n = grid.n_steps
    lb = pareto_tail(grid.nodes, alpha)
    denom = 1.0 - gamma * h / 2.0 * lb[0]
    if denom <= 0:
        raise SingularStep(f"trapezoid step too large: 1 - gamma*h/2 = {denom}")
    R = np.empty(n + 1)
    R[0] = gamma * lb[0]
    for k in range(1, n + 1):
        acc = np.dot(lb[k - 1:0:-1], R[1:k]) + 0.5 * lb[k] * R[0]
        R[k] = (gamma * lb[k] + gamma * h * acc) / denom
    return R


def solve_linear_volterra(phi: Callable, primitive: Callable, grid: TimeGrid, sign: float = 1.0):
    """Solve ``R = phi + sign * phi * R`` for a kernel that may be singular at 0.

    Product integration with the primitive of ``phi`` and ``R`` frozen at the
    right end of each cell.  Returns R at nodes ``t_1..t_N`` (index 0 is nan).
    """
    t = grid.nodes
    n = grid.n_steps
    P = primitive(t)
    dP = np.concatenate(([0.0], np.diff(P)))
    ph = np.full(n + 1, np.nan)
    ph[1:] = phi(t[1:])
    R = np.full(n + 1, np.nan)
    denom = 1.0 - sign * dP[1]
    if denom == 0:
        raise SingularStep("singular first step")
    for k in range(1, n + 1):
        acc = np.dot(dP[k:1:-1], R[1:k - 1]) if k > 2 else 0.0
        R[k] = (ph[k] + sign * acc) / denom
    return R


# --------------------------------------------------------------------------
# the operator V_alpha


def phi_exp(z):
    """``exp(z) - 1 - z`` without cancellation for small ``|z|``."""
    z = np.array(z, dtype=complex, ndmin=1)
    out = np.expm1(z) - z
    small = np.abs(z) < 0.1
    if np.any(small):
        zs = z[small]
        p = 1.0 / 362880.0
        for k in (40320.0, 5040.0, 720.0, 120.0, 24.0, 6.0, 2.0):
            p = 1.0 / k + zs * p
        out[small] = zs * zs * p
    return out


def _mark_rule(t, y_min, n_nodes, alpha):
    """Nodes and weights in the mark variable y over (y_min, t)."""
    n_log = (2 * n_nodes) // 3
    n_end = n_nodes - n_log
    ys = max(y_min, 0.5 * t)
    parts_y, parts_w = [], []
    if ys > y_min:
        x, w = gauss_legendre(n_log)
        lo, hi = math.log(y_min), math.log(ys)
        y = np.exp(lo + (hi - lo) * x)
        parts_y.append(y)
        parts_w.append((hi - lo) * w * y)
    # near y = t the integrand depends on the cumulative near 0, which behaves like r**alpha
    r, wr = graded_rule(0.0, t - ys, n_end, 1.0 / alpha, "left")
    parts_y.append(t - r)
    parts_w.append(wr)
    return np.concatenate(parts_y), np.concatenate(parts_w)


def v_alpha_apply(V_cum, t: float, params: ModelParams, quad: QuadConfig = DEFAULT_QUAD,
                  f_t=None, y_min: float | None = None, h: float | None = None):
    """``int_0^inf (exp(I) - 1 - I) nu(dy)`` with ``I = V_cum(t) - V_cum((t-y)+)``.

    ``V_cum`` is a vectorized callable returning the cumulative integral of f,
    or a pair ``(nodes, values)`` interpolated linearly.  ``f_t`` is f(t) used
    by the small-mark cap; it defaults to a difference quotient of V_cum.
    ``y_min`` defaults to ``quad.y_min_factor * h``.
    """
    if not t > 0:
        raise DomainError("t must be > 0")
    if not callable(V_cum):
        nodes, vals = V_cum
        nodes = np.asarray(nodes, dtype=float)
        vals = np.asarray(vals, dtype=complex)
        if h is None:
            h = float(nodes[1] - nodes[0])

        def V_cum(s, _n=nodes, _v=vals):
            s = np.asarray(s, dtype=float)
            return np.interp(s, _n, _v.real) + 1j * np.interp(s, _n, _v.imag)

    if y_min is None:
        if h is None:
            raise DomainError("either y_min or h is required")
        y_min = quad.y_min_factor * h
    ymin = min(y_min, t)
    if f_t is None:
        d = 0.5 * ymin
        f_t = complex((V_cum(np.array([t]))[0] - V_cum(np.array([t - d]))[0]) / d)
    nu = LevyMeasure(params)
    ct = complex(V_cum(np.array([t]))[0])
    total = complex(phi_exp(ct)[0]) * nu.tail(t)
    total += 0.5 * f_t * f_t * nu.small_jump_second_moment(ymin)
    if t > ymin:
        y, w = _mark_rule(t, ymin, quad.y_nodes, params.alpha)
        inner = ct - V_cum(t - y)
        total += np.dot(w, phi_exp(inner) * nu.c_nu * y ** (-params.alpha - 2.0))
    if not np.isfinite(total):
        raise QuadratureFailure(f"non-finite value of V at t={t}")
    return complex(total)


# --------------------------------------------------------------------------
# the nonlinear solver


class _FirstCellW:
    """Fast evaluation of W on [0, h] through ``W(s) = s**a Psi(s**a)``."""

    def __init__(self, params: ModelParams, h: float, size: int = 513):
        self.a = params.alpha
        self.xmax = h ** self.a
        self.x = np.linspace(0.0, self.xmax, size)
        s = self.x ** (1.0 / self.a)
        psi = np.empty(size)
        psi[1:] = scale_W(s[1:], params) / self.x[1:]
        psi[0] = 1.0 / (params.c * math.gamma(1.0 + self.a))
        self.psi = psi

    def __call__(self, s):
        xs = np.asarray(s, dtype=float) ** self.a
        return xs * np.interp(xs, self.x, self.psi)


def _gvalues(g, grid: TimeGrid) -> np.ndarray:
    n = grid.n_steps
    if g is None:
        return np.zeros(n, dtype=complex)
    if callable(g):
        mid = (np.arange(n) + 0.5) * grid.h
        out = np.asarray(g(mid), dtype=complex) * np.ones(n)
    elif np.ndim(g) == 0:
        out = np.full(n, complex(g))
    else:
        out = np.asarray(g, dtype=complex)
        if out.shape != (n,):
            raise GridMismatch(f"g must have one value per cell ({n}), got {out.shape}")
    if np.any(out.real > 1e-15):
        raise DomainError("g must have non-positive real part")
    return out


@dataclass
class VolterraSolution:
    grid: TimeGrid
    params: ModelParams
    lam: complex
    g: np.ndarray  # value on each cell
    v: np.ndarray  # v[k] at t_k, v[0] = nan
    V_cum: np.ndarray  # int_0^{t_k} v
    Kv: np.ndarray  # (K * v)(t_k); Kv[0] is the extrapolated limit at 0+
    F: np.ndarray  # g + V v at cell midpoints
    quad: QuadConfig
    iterations: np.ndarray = field(repr=False, default=None)
    _A: np.ndarray = field(repr=False, default=None)
    _B: np.ndarray = field(repr=False, default=None)
    _u1: complex = 0.0
    _w0: _FirstCellW = field(repr=False, default=None)

    # representation of v between nodes
    def cumulative(self, s):
        s = np.asarray(s, dtype=float)
        return _cum_eval(s, self.grid.h, self.params.alpha, self.lam, self._u1, self._A, self._B,
                         self.V_cum, self._w0, self.grid.n_steps)

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return _v_eval(s, self.grid.h, self.params, self.lam, self._u1, self._A, self._B, self.grid.n_steps)

    def Kv_at(self, T: float) -> complex:
        return complex(self.Kv[self.grid.index_of(T)])


def _cum_eval(s, h, a, lam, u1, A, B, C, w0, n):
    j = np.minimum((s / h).astype(np.int64), n - 1)
    out = np.empty(s.shape, dtype=complex)
    first = j == 0
    if np.any(first):
        sf = s[first]
        out[first] = lam * w0(sf) + u1 * h ** (1.0 - 2.0 * a) * sf ** (2.0 * a) / (2.0 * a)
    rest = ~first
    if np.any(rest):
        jr = j[rest]
        sr = s[rest]
        tj = jr * h
        out[rest] = (C[jr] + A[jr] * (sr ** a - tj ** a) / a
                     + B[jr] * (sr ** (2.0 * a) - tj ** (2.0 * a)) / (2.0 * a))
    return out


def _v_eval(s, h, params, lam, u1, A, B, n):
    a = params.alpha
    j = np.minimum((s / h).astype(np.int64), n - 1)
    out = np.empty(s.shape, dtype=complex)
    first = j == 0
    if np.any(first):
        sf = s[first]
        out[first] = lam * scale_Wp(sf, params) + u1 * (sf / h) ** (2.0 * a - 1.0)
    rest = ~first
    if np.any(rest):
        sr = s[rest]
        out[rest] = sr ** (a - 1.0) * (A[j[rest]] + B[j[rest]] * sr ** a)
    return out


def _first_cell_weights(fun, params: ModelParams, grid: TimeGrid, n=24):
    """``int_0^h (s/m0)**(a-1) fun(t_k - s) ds`` for k = 1..N (index 0 unused)."""
    a = params.alpha
    h = grid.h
    m0 = 0.5 * h
    tk = grid.nodes[1:]
    s1, w1 = graded_rule(0.0, 0.5 * h, n, 1.0 / a, "left")
    s2, w2 = graded_rule(0.5 * h, h, n, 1.0 / a, "right")
    s = np.concatenate((s1, s2))
    w = np.concatenate((w1, w2)) * (s / m0) ** (a - 1.0)
    vals = fun(tk[:, None] - s[None, :])
    out = np.zeros(grid.n_steps + 1)
    out[1:] = vals @ w
    return out


def _profile_weights(params: ModelParams, grid: TimeGrid, n_nodes=24):
    """Weights for a forcing shaped like ``(s/m_j)**(alpha-1)`` on cell j.

    ``mu[j]`` is the cell average of the profile (used against smooth
    integrands) and ``adj[j] = int_cell (s/m_j)**(alpha-1) W'(t_{j+1} - s) ds``
    handles the singular adjacent cell.
    """
    a = params.alpha
    h = grid.h
    n = grid.n_steps
    j = np.arange(1, n, dtype=float)
    mj = (j + 0.5) * h
    mu = np.ones(n)
    mu[1:] = ((j + 1.0) ** a - j ** a) * h ** a / (a * h * mj ** (a - 1.0))
    adj = np.zeros(n)
    r, wr = graded_rule(0.0, h, n_nodes, 1.0 / a, "left")
    wpr = scale_Wp(r, params) * wr
    s = (j + 1.0)[:, None] * h - r[None, :]
    adj[1:] = ((s / mj[:, None]) ** (a - 1.0)) @ wpr
    return mu, adj


def _one_minus_bW_weights(params: ModelParams, grid: TimeGrid, W: np.ndarray):
    """``kw[d] = int_{(d-1)h}^{dh} (1 - b W(u)) du``, d = 1..N."""
    h = grid.h
    n = grid.n_steps
    kw = np.zeros(n + 1)
    if params.b == 0.0:
        kw[1:] = h
        return kw
    b = params.b
    u, w = graded_rule(0.0, h, 24, 1.0 / params.alpha, "left")
    kw[1] = h - b * np.dot(w, scale_W(u, params))
    if n >= 2:
        x, wx = gauss_legendre(8)
        lo = np.arange(1, n) * h
        nodes = lo[:, None] + h * x[None, :]
        kw[2:] = h - b * (scale_W(nodes, params) @ (h * wx))
    return kw


def solve_v(lam: complex, g, grid: TimeGrid, params: ModelParams,
            quad: QuadConfig = DEFAULT_QUAD) -> VolterraSolution:
    """March the nonlinear Volterra equation for v on ``grid``.

    ``g`` is None, a complex constant, an array with one value per cell, or a
    callable evaluated at cell midpoints.  Its real part and that of ``lam``
    must be non-positive.
    """
    lam = complex(lam)
    if lam.real > 0:
        raise DomainError("lambda must have non-positive real part")
    gc = _gvalues(g, grid)
    a = params.alpha
    b = params.b
    n = grid.n_steps
    h = grid.h
    t = grid.nodes
    mid = (np.arange(n) + 0.5) * h
    nu = LevyMeasure(params)

    W = scale_W(t, params)
    Wp = np.full(n + 1, np.nan)
    Wp[1:] = scale_Wp(t[1:], params)
    dW = np.concatenate(([0.0], np.diff(W)))
    om0 = _first_cell_weights(lambda u: scale_Wp(u, params), params, grid)
    if b == 0.0:
        kw0 = np.zeros(n + 1)
        kw0[1:] = (0.5 * h) ** (1.0 - a) * h ** a / a
    else:
        kw0 = _first_cell_weights(lambda u: 1.0 - b * scale_W(np.maximum(u, 0.0), params), params, grid)
    kw = _one_minus_bW_weights(params, grid, W)
    mu, adj = _profile_weights(params, grid)
    w0 = _FirstCellW(params, h)
    y_min = quad.y_min_factor * h
    wp_m0 = scale_Wp(0.5 * h, params)

    v = np.full(n + 1, np.nan + 0j)
    C = np.zeros(n + 1, dtype=complex)
    A = np.zeros(n, dtype=complex)
    B = np.zeros(n, dtype=complex)
    F = np.zeros(n, dtype=complex)
    hist = np.zeros(n + 1, dtype=complex)
    iters = np.zeros(n + 1, dtype=np.int64)
    state = {"u1": 0j}
    ta = t ** a

    def cum(s):
        return _cum_eval(np.asarray(s, dtype=float), h, a, lam, state["u1"], A, B, C, w0, n)

    def V_at(j, f_mid):
        return v_alpha_apply(cum, mid[j], params, quad, f_t=f_mid, y_min=y_min)

    def set_cell(j, vk):
        """Install v(t_{j+1}) = vk and refresh cell j's representation."""
        if j == 0:
            state["u1"] = vk - lam * Wp[1]
            C[1] = lam * W[1] + state["u1"] * h / (2.0 * a)
            return
        p0 = t[j] ** (1.0 - a) * v[j]
        p1 = t[j + 1] ** (1.0 - a) * vk
        Bj = (p1 - p0) / (ta[j + 1] - ta[j])
        Aj = p0 - Bj * ta[j]
        A[j] = Aj
        B[j] = Bj
        C[j + 1] = (C[j] + Aj * (ta[j + 1] - ta[j]) / a
                    + Bj * (t[j + 1] ** (2 * a) - t[j] ** (2 * a)) / (2.0 * a))

    def f_mid(j, vk):
        if j == 0:
            return lam * wp_m0 + (vk - lam * Wp[1]) * 0.5 ** (2.0 * a - 1.0)
        p0 = t[j] ** (1.0 - a) * v[j]
        p1 = t[j + 1] ** (1.0 - a) * vk
        Bj = (p1 - p0) / (ta[j + 1] - ta[j])
        Aj = p0 - Bj * ta[j]
        return mid[j] ** (a - 1.0) * (Aj + Bj * mid[j] ** a)

    if lam == 0 and not np.any(gc):
        v[1:] = 0.0
        Kv = np.zeros(n + 1, dtype=complex)
        return VolterraSolution(grid, params, lam, gc, v, C, Kv, F, quad, iters, A, B, 0j, w0)

    V0 = 0j
    for k in range(1, n + 1):
        j = k - 1
        if k == 1:
            base = lam * Wp[1]
            vk = base
        else:
            base = lam * Wp[k] + gc[0] * dW[k] + V0 * om0[k] + hist[k]
            vk = 2.0 * v[k - 1] - v[k - 2] if k >= 3 else v[k - 1]
        it = 0
        while True:
            it += 1
            set_cell(j, vk)
            Vj = V_at(j, f_mid(j, vk))
            if k == 1:
                new = base + gc[0] * dW[1] + Vj * om0[1]
            else:
                new = base + gc[j] * dW[1] + Vj * adj[j]
            change = abs(new - vk)
            vk = new
            if not np.isfinite(vk):
                raise PicardDivergence(f"non-finite iterate at step {k}", step=k, iterations=it,
                                       last_change=change)
            if change <= quad.picard_tol * max(1.0, abs(vk)):
                break
            if it >= quad.picard_max_iter:
                raise PicardDivergence(
                    f"Picard iteration did not converge at step {k} after {it} iterations "
                    f"(last change {change:.3e})", step=k, iterations=it, last_change=change)
        set_cell(j, vk)
        v[k] = vk
        iters[k] = it
        if k == 1:
            V0 = V_at(0, f_mid(0, vk))
            F[0] = gc[0] + V0
        else:
            F[j] = gc[j] + Vj
            if k < n:
                hist[k + 1:] += (gc[j] + Vj * mu[j]) * dW[2:n - k + 2]

    Kv = np.empty(n + 1, dtype=complex)
    Kv[1:] = lam * (1.0 - b * W[1:]) + gc[0] * kw[1:] + V0 * kw0[1:]
    if n >= 2:
        Fe = gc[1:n] + (F[1:n] - gc[1:n]) * mu[1:n]
        conv = np.convolve(Fe, kw[1:])
        Kv[2:] += conv[:n - 1]
    m = min(12, n)
    ex = power_basis_exponents(a, 3)
    Kv[0] = extrapolate_to_zero(t[1:m + 1], Kv[1:m + 1], ex)
    return VolterraSolution(grid, params, lam, gc, v, C, Kv, F, quad, iters, A, B, state["u1"], w0)


def characteristic_functional(sol: VolterraSolution, T: float, init: InitialState) -> complex:
    """``E exp(lam X(T) + g*X(T))`` for a fixed or exponentially distributed initial mass."""
    kappa = sol.Kv_at(T)
    if init.is_fixed:
        return complex(np.exp(init.fixed_zeta * kappa))
    denom = 1.0 - init.exponential_mean * kappa
    if denom == 0:
        raise PoleError("1 - m K*v(T) vanishes")
    return complex(1.0 / denom)
