"""Fractional integrals and derivatives modified by a constant, and the Riccati residual.

    I_a^rho f(t) = 1/(a Gamma(rho)) int_0^t (t-s)**(rho-1) f(s) ds
    D_a^rho f(t) = a/Gamma(1-rho) d/dt int_0^t (t-s)**(-rho) f(s) ds = a**2 d/dt I_a^(1-rho) f(t)

Grid functions are integrated by product integration: the kernel is
integrated exactly against a piecewise interpolant of f.  Away from 0 the
interpolant is linear.  When a leading exponent ``p`` is supplied, f is
written as ``s**p Phi(s**q)`` on the first cells with Phi linear in
``s**q``, and the weights become incomplete beta functions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc

from .errors import DomainError, LossOfAccuracy
from .model import ModelParams, TimeGrid
from .quadrature import extrapolate_to_zero, gauss_legendre, power_basis_exponents
from .volterra import DEFAULT_QUAD, QuadConfig, VolterraSolution, v_alpha_apply


@dataclass(frozen=True)
class FracOpConfig:
    rho: float
    a: float
    grid: TimeGrid

    def __post_init__(self):
        _check(self.rho, self.a)


def _check(rho, a):
    if not (0.0 < rho <= 1.0):
        raise DomainError(f"rho must lie in (0, 1], got {rho}")
    if not a > 0:
        raise DomainError(f"a must be > 0, got {a}")


def _linear_weights(n, rho, h):
    """Weights of f_j (left) and f_{j+1} (right) for lag d = k - j, d = 1..n."""
    d = np.arange(1, n + 1, dtype=float)
    # int_0^1 (d - tau)**(rho-1) dtau and int_0^1 tau (d - tau)**(rho-1) dtau
    i0 = np.empty(n)
    i0[0] = 1.0 / rho
    i0[1:] = -np.expm1(rho * np.log1p(-1.0 / d[1:])) * d[1:] ** rho / rho
    i1 = np.empty(n)
    small = d < 8
    ds = d[small]
    i1[small] = ds * i0[small] - (ds ** (rho + 1.0) - (ds - 1.0) ** (rho + 1.0)) / (rho + 1.0)
    if np.any(~small):
        x, w = gauss_legendre(12)
        dl = d[~small][:, None]
        i1[~small] = (x * (dl - x) ** (rho - 1.0)) @ w
    hr = h ** rho
    return hr * (i0 - i1), hr * i1


def _power_integral(t, lo, hi, e, rho):
    """``int_lo^hi (t - s)**(rho-1) s**e ds`` for ``0 <= lo < hi <= t``."""
    B = beta_fn(e + 1.0, rho)
    return t ** (rho + e) * B * (betainc(e + 1.0, rho, hi / t) - betainc(e + 1.0, rho, lo / t))


def frac_integral(f, grid: TimeGrid, rho: float, a: float = 1.0, lead_exponent: float | None = None,
                  sub_exponent: float | None = None, singular_cells: int = 64):
    """``I_a^rho f`` at the grid nodes.

    Without ``lead_exponent`` f is piecewise linear through all node values.
    With it, ``f[0]`` is ignored and f is modelled near 0 as
    ``s**p Phi(s**q)`` (``q = sub_exponent``, default 1) on the first
    ``singular_cells`` cells.  Entry 0 of the result is the limit at 0+.
    """
    _check(rho, a)
    f = np.asarray(f)
    n = grid.n_steps
    if f.shape != (n + 1,):
        raise DomainError(f"f must have {n + 1} node values")
    h = grid.h
    t = grid.nodes
    pref = 1.0 / (a * math.gamma(rho))
    wl, wr = _linear_weights(n, rho, h)
    m = 0 if lead_exponent is None else min(max(2, singular_cells), n)
    fl = f[:-1].copy()
    fr = f[1:].copy()
    fl[:m] = 0
    fr[:m] = 0
    out = np.zeros(n + 1, dtype=np.result_type(f, float))
    if m < n:
        out[1:] = (np.convolve(fl, wl) + np.convolve(fr, wr))[:n]
    if lead_exponent is None:
        out[0] = 0.0
        return pref * out

    p = float(lead_exponent)
    q = 1.0 if sub_exponent is None else float(sub_exponent)
    if p <= -1.0:
        raise DomainError("lead_exponent must exceed -1")
    x = t ** q
    phi = np.empty(n + 1, dtype=out.dtype)
    phi[1:] = f[1:] * t[1:] ** (-p)
    # cell 0: quadratic in x through nodes 1..3 (linear if the grid is too short)
    if n >= 3:
        q0 = np.polyfit(x[1:4], phi[1:4], 2)
    else:
        q0 = np.concatenate(([0.0], np.polyfit(x[1:3], phi[1:3], 1)))
    phi[0] = q0[2]
    tk = t[1:]
    for j in range(m):
        ks = np.arange(j + 1, n + 1)
        tt = tk[ks - 1]
        lo, hi = t[j], t[j + 1]
        if j == 0:
            coef = (q0[2], q0[1], q0[0])
        else:
            c1 = (phi[j + 1] - phi[j]) / (x[j + 1] - x[j])
            coef = (phi[j + 1] - c1 * x[j + 1], c1)
        for i, ci in enumerate(coef):
            out[ks] += ci * _power_integral(tt, lo, hi, p + i * q, rho)
    if rho + p > 1e-12:
        out[0] = 0.0
    elif abs(rho + p) <= 1e-12:
        out[0] = phi[0] * beta_fn(p + 1.0, rho)
    else:
        out[0] = np.inf
    return pref * out


def frac_derivative(f, grid: TimeGrid, rho: float, a: float = 1.0, lead_exponent: float | None = None,
                    sub_exponent: float | None = None):
    """``D_a^rho f`` at the cell midpoints, by forward differences of ``I_a^(1-rho) f``.

    For ``rho = 1`` this is ``a * f'`` from the difference quotient of the node values.
    """
    _check(rho, a)
    f = np.asarray(f)
    h = grid.h
    if rho == 1.0:
        return a * np.diff(f) / h
    if 1.0 - rho < 1e-6:
        warnings.warn(f"rho={rho} is close to 1; the difference of fractional integrals loses accuracy",
                      LossOfAccuracy, stacklevel=2)
    J = frac_integral(f, grid, 1.0 - rho, a, lead_exponent, sub_exponent)
    return a * a * np.diff(J) / h


def kernel_convolve(v, grid: TimeGrid, params: ModelParams):
    """``(K * v)(t_k)`` for v with the leading profile ``t**(alpha-1)``; entry 0 is the limit at 0+."""
    a = params.alpha
    return params.c * frac_integral(v, grid, 1.0 - a, 1.0, lead_exponent=a - 1.0, sub_exponent=a)


def riccati_report(sol: VolterraSolution, params: ModelParams | None = None,
                   quad: QuadConfig | None = None) -> dict:
    """Residual of ``D_c^a v = -b v + g + V v`` and the initial gap ``|K*v(0+) - lam|``."""
    params = params or sol.params
    quad = quad or sol.quad or DEFAULT_QUAD
    grid = sol.grid
    n = grid.n_steps
    h = grid.h
    a = params.alpha
    if sol.lam == 0 and not np.any(sol.g):
        return {"residual_norm": 0.0, "initial_gap": 0.0, "residual": np.zeros(n - 1)}
    v = sol.v.copy()
    v[0] = 0.0
    kv = kernel_convolve(v, grid, params)
    deriv = np.diff(kv)[1:] / h
    mid = (np.arange(1, n) + 0.5) * h
    vm = sol.value(mid)
    y_min = quad.y_min_factor * h
    Vm = np.array([v_alpha_apply(sol.cumulative, m, params, quad, f_t=fv, y_min=y_min)
                   for m, fv in zip(mid, vm)])
    r = deriv + params.b * vm - sol.g[1:] - Vm
    norm = float(np.sum(h * mid ** (1.0 - a) * np.abs(r)))
    m = min(12, n)
    k0 = extrapolate_to_zero(grid.nodes[1:m + 1], kv[1:m + 1], power_basis_exponents(a, 3))
    gap = float(abs(k0 - sol.lam))
    return {"residual_norm": norm, "initial_gap": gap, "residual": r, "Kv": kv}


def riccati_residual(sol: VolterraSolution, params: ModelParams | None = None,
                     quad: QuadConfig | None = None):
    """Returns ``(residual_norm, initial_gap)``; see :func:`riccati_report`."""
    rep = riccati_report(sol, params, quad)
    return rep["residual_norm"], rep["initial_gap"]
