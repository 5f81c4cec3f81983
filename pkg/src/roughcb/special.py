"""Mittag-Leffler function on the negative half-line, scale function and Sonine kernels.

Evaluation of ``E_{a,b}(-s)`` picks one of three regimes per point:

* power series (Kahan-compensated), accepted when the largest term is not
  much bigger than the result;
* asymptotic expansion ``-sum_k (-s)**-k / Gamma(b - a*k)`` for
  ``s > switch_radius``, optimally truncated and accepted when the first
  omitted terms are below tolerance;
* otherwise the Laplace-integral representation of ``E_a(-s)``, which is
  exact for ``0 < a < 1`` and has no cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma, gammaln, rgamma

from .errors import AlphaOutOfRange, ConvergenceFailure, DomainError
from .model import ModelParams

# accept the float series when max|term| <= _CANCEL_MAX * |sum|
_CANCEL_MAX = 1e3
# log of the relative size below which trailing series terms are dropped
_LOG_NEGLIGIBLE = -41.0


@dataclass(frozen=True)
class MlConfig:
    series_terms_max: int = 400
    switch_radius: float = 10.0
    asymptotic_terms: int = 60
    tol: float = 1e-13

    def __post_init__(self):
        if self.series_terms_max < 20:
            raise ValueError("series_terms_max must be >= 20")
        if self.asymptotic_terms < 2:
            raise ValueError("asymptotic_terms must be >= 2")
        if not self.switch_radius > 0:
            raise ValueError("switch_radius must be > 0")


DEFAULT_ML = MlConfig()


@lru_cache(maxsize=8)
def _gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _series(alpha, beta, s, cfg):
    """Series for ``E_{alpha,beta}(-s)``, ``s > 0``.  Returns (values, ok)."""
    n = s.size
    val = np.full(n, np.nan)
    ok = np.zeros(n, dtype=bool)
    kk = np.arange(cfg.series_terms_max + 1, dtype=float)
    lg = gammaln(alpha * kk + beta)
    sign = np.where(kk % 2 == 0, 1.0, -1.0)
    for lo in range(0, n, 2048):
        ss = s[lo:lo + 2048]
        logt = kk[:, None] * np.log(ss)[None, :] - lg[:, None]
        imax = np.argmax(logt, axis=0)
        lmax = logt[imax, np.arange(ss.size)]
        small = logt < (lmax + _LOG_NEGLIGIBLE)[None, :]
        past = kk[:, None] > imax[None, :]
        cut = small & past
        has = cut.any(axis=0)
        kneed = np.where(has, np.argmax(cut, axis=0), -1)
        cand = has & (lmax <= math.log(1e6))
        if not cand.any():
            continue
        kc = int(kneed[cand].max())
        terms = sign[:kc + 1, None] * np.exp(logt[:kc + 1][:, cand])
        total = np.zeros(terms.shape[1])
        comp = np.zeros_like(total)
        for row in terms:
            y = row - comp
            tt = total + y
            comp = (tt - total) - y
            total = tt
        good = (total > 0) & (np.exp(lmax[cand]) <= _CANCEL_MAX * total)
        idx = np.flatnonzero(cand)
        val[lo + idx] = total
        ok[lo + idx] = good
    return val, ok


def _asymptotic(alpha, beta, s, cfg):
    """Optimally truncated asymptotic expansion of ``E_{alpha,beta}(-s)``."""
    m = cfg.asymptotic_terms
    k = np.arange(1, m + 1, dtype=float)
    r = rgamma(beta - alpha * k)
    sign = np.where(k % 2 == 1, 1.0, -1.0)
    with np.errstate(under="ignore", over="ignore"):
        terms = (sign * r)[:, None] * np.exp(-k[:, None] * np.log(s)[None, :])
    mag = np.abs(terms)
    csum = np.cumsum(terms, axis=0)
    # error of truncating after K terms, K = 1..m-2, estimated by the next two terms
    err = np.maximum(mag[1:-1], mag[2:])
    kbest = np.argmin(err, axis=0)
    cols = np.arange(s.size)
    val = csum[kbest, cols]
    ok = (val > 0) & (err[kbest, cols] <= cfg.tol * np.abs(val))
    return val, ok


def _integral(alpha, beta, s):
    """Laplace-integral representation, for moderate and large ``s``.

    E_a(-s) = sin(pi a)/(pi a) * int_0^inf exp(-s**(1/a) r**(1/a)) / (r**2 + 2 r cos(pi a) + 1) dr
    """
    sa, ca = math.sin(math.pi * alpha), math.cos(math.pi * alpha)
    x, w = _gl(16)
    out = np.empty(s.size)
    for i, si in enumerate(s):
        sig = si ** (1.0 / alpha)
        rmax = (46.0 / sig) ** alpha
        width = min(0.25, sa / 4.0, rmax)
        p = min(4000, max(2, int(math.ceil(rmax / width))))
        # geometric refinement towards 0, where r**(1/a) is not smooth
        first = rmax / p
        edges = np.concatenate(([0.0], first * 0.15 ** np.arange(24, 0, -1), np.linspace(first, rmax, p)))
        r = (edges[:-1, None] + np.diff(edges)[:, None] * x[None, :]).ravel()
        wr = (np.diff(edges)[:, None] * w[None, :]).ravel()
        ra = r ** (1.0 / alpha)
        f = np.exp(-sig * ra) / (r * r + 2.0 * ca * r + 1.0)
        pref = sa / (math.pi * alpha)
        if abs(beta - alpha) < 1e-12:
            out[i] = si ** (1.0 / alpha - 1.0) * pref * np.dot(wr, ra * f)
        else:
            e1 = pref * np.dot(wr, f)
            if abs(beta - 1.0) < 1e-12:
                out[i] = e1
            else:
                out[i] = (1.0 - e1) / si
    return out


def _check_alpha(alpha):
    if not (0.0 < alpha < 1.0):
        raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {alpha}")


def ml_neg(alpha, beta, s, config: MlConfig | None = None):
    """``E_{alpha,beta}(-s)`` for an array ``s >= 0`` and beta in {alpha, alpha+1, 1}."""
    cfg = config or DEFAULT_ML
    s = np.asarray(s, dtype=float)
    flat = s.ravel()
    out = np.full(flat.size, np.nan)
    zero = flat == 0.0
    out[zero] = float(rgamma(beta))
    todo = np.flatnonzero(~zero)
    if todo.size:
        big = flat[todo] > cfg.switch_radius
        if big.any():
            ib = todo[big]
            v, ok = _asymptotic(alpha, beta, flat[ib], cfg)
            out[ib[ok]] = v[ok]
        rest = todo[np.isnan(out[todo]) & (flat[todo] <= cfg.switch_radius)]
        if rest.size:
            v, ok = _series(alpha, beta, flat[rest], cfg)
            out[rest[ok]] = v[ok]
        rest = todo[np.isnan(out[todo])]
        if rest.size:
            out[rest] = _integral(alpha, beta, flat[rest])
    if not np.all(np.isfinite(out)):
        raise ConvergenceFailure("Mittag-Leffler evaluation did not converge")
    return out.reshape(s.shape)


def _ret(x, arr):
    return float(arr) if np.ndim(x) == 0 else arr


def mittag_leffler(alpha, beta, x, config: MlConfig | None = None):
    """Two-parameter Mittag-Leffler function ``E_{alpha,beta}(x)`` for ``x <= 0``.

    ``beta`` must be ``alpha`` or ``alpha + 1``.
    """
    alpha = float(alpha)
    _check_alpha(alpha)
    if not (abs(beta - alpha) < 1e-12 or abs(beta - alpha - 1.0) < 1e-12):
        raise DomainError("beta must be alpha or alpha + 1")
    xa = np.asarray(x, dtype=float)
    if np.any(np.isnan(xa)) or np.any(xa > 0):
        raise DomainError("Mittag-Leffler is evaluated on x <= 0 only")
    return _ret(x, ml_neg(alpha, float(beta), -xa, config))


def scale_W(t, params: ModelParams, config: MlConfig | None = None):
    """Scale function ``W(t) = t**a E_{a,a+1}(-(b/c) t**a) / c``."""
    ta = np.asarray(t, dtype=float)
    if np.any(np.isnan(ta)) or np.any(ta < 0):
        raise DomainError("W is defined for t >= 0")
    a, b, c = params.alpha, params.b, params.c
    tp = ta ** a
    if b == 0.0:
        out = tp / (c * gamma(1.0 + a))
    else:
        out = tp * ml_neg(a, a + 1.0, (b / c) * tp, config) / c
    return _ret(t, out)


def scale_Wp(t, params: ModelParams, config: MlConfig | None = None):
    """Derivative ``W'(t) = t**(a-1) E_{a,a}(-(b/c) t**a) / c`` for ``t > 0``."""
    ta = np.asarray(t, dtype=float)
    if np.any(np.isnan(ta)) or np.any(ta <= 0):
        raise DomainError("W' is defined for t > 0")
    a, b, c = params.alpha, params.b, params.c
    if b == 0.0:
        out = ta ** (a - 1.0) / (c * gamma(a))
    else:
        out = ta ** (a - 1.0) * ml_neg(a, a, (b / c) * ta ** a, config) / c
    return _ret(t, out)


def kernel_K(t, params: ModelParams):
    ta = np.asarray(t, dtype=float)
    if np.any(np.isnan(ta)) or np.any(ta <= 0):
        raise DomainError("K is defined for t > 0")
    a = params.alpha
    return _ret(t, params.c * ta ** (-a) / gamma(1.0 - a))


def kernel_LK(t, params: ModelParams):
    ta = np.asarray(t, dtype=float)
    if np.any(np.isnan(ta)) or np.any(ta <= 0):
        raise DomainError("L_K is defined for t > 0")
    a = params.alpha
    return _ret(t, ta ** (a - 1.0) / (params.c * gamma(a)))
