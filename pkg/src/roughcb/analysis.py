"""Monte Carlo estimators, distributional distances and convergence studies.

Sample means use ``math.fsum`` (correctly rounded), so every estimator is
invariant under permutation of the samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import ks_2samp

from .errors import DegeneratePath, DomainError, EmptySample
from .model import InitialState, ModelParams, TimeGrid, standard_params
from .special import scale_W
from .volterra import resolvent_solve


def _fmean(x):
    x = np.asarray(x, dtype=float).ravel()
    return math.fsum(x) / x.size


def mean_se(x):
    """Sample mean, sample variance and standard error ``std / sqrt(n)``."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("empty sample")
    m = _fmean(x)
    var = math.fsum((x - m) ** 2) / max(x.size - 1, 1)
    return m, var, math.sqrt(var / x.size)


@dataclass
class CfEstimate:
    value: complex
    se_re: float
    se_im: float
    n_paths: int


def mc_char_fn(x_T, gx_T=None, lam: complex = 0j) -> CfEstimate:
    """Average of ``exp(lam X(T) + g*X(T))`` over paths, with componentwise standard errors.

    ``gx_T`` holds the per-path values of ``g*X(T)`` (or is None for g = 0);
    ``lam`` must be purely imaginary.
    """
    x = np.asarray(x_T, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("no paths")
    lam = complex(lam)
    if lam.real != 0.0:
        raise DomainError("lam must be purely imaginary")
    z = lam * x
    if gx_T is not None:
        z = z + np.asarray(gx_T, dtype=complex).ravel()
    if not np.any(z):
        return CfEstimate(1.0 + 0j, 0.0, 0.0, x.size)
    e = np.exp(z)
    mr, _, sr = mean_se(e.real)
    mi, _, si = mean_se(e.imag)
    return CfEstimate(complex(mr, mi), sr, si, x.size)


@dataclass
class McReport:
    """Estimates against oracles under the rule ``|est - oracle| <= 3 SE + allowance``."""

    n_paths: int
    rows: list = field(default_factory=list)

    def add(self, name, estimate, se, oracle, allowance=0.0, k=3.0):
        diff = abs(estimate - oracle)
        z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
        self.rows.append({"name": name, "estimate": float(estimate), "se": float(se), "oracle": float(oracle),
                          "allowance": float(allowance), "z": float(z) if math.isfinite(z) else None,
                          "pass": bool(diff <= k * se + allowance)})

    def add_complex(self, name, est: CfEstimate, oracle: complex, allowance=0.0, k=3.0):
        self.add(name + ".re", est.value.real, est.se_re, oracle.real, allowance, k)
        self.add(name + ".im", est.value.imag, est.se_im, oracle.imag, allowance, k)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)

    def to_dict(self):
        return {"n_paths": self.n_paths, "rows": self.rows, "verdict": "PASS" if self.passed else "FAIL"}


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    return float(ks_2samp(a, b).statistic)


def _dyadic_levels(n_points):
    m = n_points - 1
    if m < 4 or m & (m - 1):
        raise DomainError(f"path length must be 2**k + 1 with k >= 2, got {n_points}")
    return m.bit_length() - 1


def quadratic_variations(path, min_increments=8):
    """``log2`` of the lags and of the summed squared increments at dyadic lags."""
    x = np.asarray(path, dtype=float)
    J = _dyadic_levels(x.size)
    lags, qv = [], []
    for j in range(J + 1):
        lag = 2 ** j
        if (x.size - 1) // lag < min_increments:
            break
        d = np.diff(x[::lag])
        lags.append(j)
        qv.append(math.fsum(d * d))
    return np.array(lags, dtype=float), np.array(qv)


def roughness_exponent(paths, min_lag_level=0, min_increments=8) -> float:
    """Holder exponent estimate from quadratic-variation scaling, averaged over paths.

    For each path, ``S_j`` is the sum of squared increments over non-overlapping
    lags ``2**j`` grid steps.  The least-squares slope of ``log2 S_j`` against
    ``-j`` (refinement level) is mapped to ``H = (1 - slope) / 2``: a linear
    path has slope -1 and ``H = 1``, Brownian motion has slope 0 and ``H = 1/2``.
    """
    P = np.atleast_2d(np.asarray(paths, dtype=float))
    est = []
    for x in P:
        j, s = quadratic_variations(x, min_increments)
        keep = j >= min_lag_level
        j, s = j[keep], s[keep]
        if np.any(s <= 0):
            raise DegeneratePath("path has zero increments at some scale")
        if j.size < 2:
            raise DomainError("not enough dyadic scales")
        slope = np.polyfit(-j, np.log2(s), 1)[0]
        est.append((1.0 - slope) / 2.0)
    return _fmean(est)


def holder_quotients(paths, H, h=1.0):
    """Per-path ``max |X(t+d) - X(t)| / d**H`` over dyadic lags (diagnostic only)."""
    P = np.atleast_2d(np.asarray(paths, dtype=float))
    J = _dyadic_levels(P.shape[1])
    out = np.zeros(P.shape[0])
    for j in range(J):
        lag = 2 ** j
        d = np.abs(P[:, lag:] - P[:, :-lag]).max(axis=1) / (lag * h) ** H
        out = np.maximum(out, d)
    return out


def scaled_resolvent_integral(n: int, beta: float, alpha: float, t_max: float = 1.0, steps: int = 4000):
    """``t_k`` and ``int_0^t_k n**(1-alpha) R_H(n s) ds`` with ``gamma_n = alpha (1 - beta n**(-alpha))``."""
    gamma = alpha * (1.0 - beta * float(n) ** (-alpha))
    grid = TimeGrid(n * t_max, steps)
    R = resolvent_solve(gamma, grid, alpha)
    cum = cumulative_trapezoid(R, grid.nodes, initial=0.0)
    return grid.nodes / n, cum * float(n) ** (-alpha)


def resolvent_convergence_study(n_list, beta: float, alpha: float, t_max: float = 1.0, steps: int = 4000):
    """Rows ``(n, sup_t |int_0^t n**(1-alpha) R_H(ns) ds - W_0(t)|)`` for each ``n``."""
    p0 = standard_params(alpha, beta)
    rows = []
    for n in n_list:
        t, approx = scaled_resolvent_integral(int(n), beta, alpha, t_max, steps)
        W0 = np.zeros_like(t)
        W0[1:] = scale_W(t[1:], p0)
        rows.append({"n": int(n), "gamma_n": alpha * (1.0 - beta * float(n) ** (-alpha)),
                     "sup_error": float(np.max(np.abs(approx - W0)))})
    return rows


def strictly_decreasing(values) -> bool:
    v = list(values)
    return all(b < a for a, b in zip(v, v[1:]))


def verify_cf(params: ModelParams, zeta: float, T: float, lams, g=None, n_paths=100_000, n_steps=512,
              seed=0, eps=None, allowance=0.01, solver_steps=2048, threads=None, k=3.0) -> dict:
    """Monte Carlo characteristic functional of the SVE scheme against the Volterra formula."""
    from .simulate.sve import simulate_sve_batch
    from .volterra import characteristic_functional, solve_v

    grid = TimeGrid(T, n_steps)
    batch = simulate_sve_batch(params, zeta, grid, n_paths, seed, eps=eps, threads=threads, g=g)
    report = McReport(n_paths)
    oracles = {}
    for lam in lams:
        lam = complex(lam)
        sol = solve_v(lam, g, TimeGrid(T, solver_steps), params)
        cf = characteristic_functional(sol, T, InitialState.fixed(zeta))
        est = mc_char_fn(batch.final, batch.gconv, lam)
        report.add_complex(f"cf[lam={lam.imag:g}i]", est, cf, allowance, k)
        oracles[str(lam)] = [cf.real, cf.imag]
    out = report.to_dict()
    out["analytic"] = oracles
    out["clamp_events_mean"] = float(np.mean(batch.clamp_events))
    return out


def lemma31_check(alpha: float = 0.5, gamma: float | None = None, level: float = 1.0, n_paths: int = 10_000,
                  seed: int = 0, threshold: float = 0.03, threads=None) -> dict:
    """KS distance between compound-Poisson local time at ``level`` and the one-ancestor CMJ at ``level``."""
    from .simulate.cmj import cmj_counts
    from .simulate.cp import cp_localtime_counts

    gamma = alpha if gamma is None else float(gamma)
    lt = cp_localtime_counts(gamma, alpha, TimeGrid(level, 2), n_paths, seed, threads=threads)[:, -1]
    z = cmj_counts(1, gamma, alpha, np.array([level]), n_paths, seed + 1, threads=threads)[:, 0]
    d = ks_distance(lt, z)
    return {"ks": d, "threshold": threshold, "mean_localtime": _fmean(lt), "mean_cmj": _fmean(z),
            "verdict": "PASS" if d <= threshold else "FAIL"}


def variance_report(params: ModelParams, zeta: float, grid: TimeGrid, n_paths: int, seed: int,
                    threads=None) -> dict:
    """Mean identity at every node and the variance at ``T`` against the isometry oracle."""
    from .simulate.sve import isometry_variance, simulate_sve_batch

    b = simulate_sve_batch(params, zeta, grid, n_paths, seed, threads=threads)
    mean_oracle = zeta * (1.0 - params.b * np.concatenate([[0.0], scale_W(grid.nodes[1:], params)]))
    se = np.sqrt(b.var / n_paths)
    z = np.where(se > 0, np.abs(b.mean - mean_oracle) / np.where(se > 0, se, 1.0), 0.0)
    v_or = isometry_variance(params, zeta, grid.t_max)
    # standard error of the sample variance from the fourth central moment
    x = b.final
    m4 = _fmean((x - x.mean()) ** 4)
    se_var = math.sqrt(max(m4 - b.var[-1] ** 2, 0.0) / n_paths)
    return {"max_mean_z": float(z.max()), "var_T": float(b.var[-1]), "var_oracle": v_or, "var_se": se_var,
            "clamp_events_mean": float(np.mean(b.clamp_events))}


__all__ = ["CfEstimate", "McReport", "mc_char_fn", "mean_se", "ks_distance", "roughness_exponent",
           "quadratic_variations", "holder_quotients", "resolvent_convergence_study",
           "scaled_resolvent_integral", "strictly_decreasing", "verify_cf", "lemma31_check",
           "variance_report"]
