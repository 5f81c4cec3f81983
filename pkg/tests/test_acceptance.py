"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy.integrate import quad

from roughcb.analysis import (lemma31_check, mc_char_fn, resolvent_convergence_study, roughness_exponent,
                              strictly_decreasing, variance_report)
from roughcb.fractional import riccati_residual
from roughcb.model import InitialState, TimeGrid, standard_params, validate
from roughcb.quadrature import convolve_singular
from roughcb.simulate import isometry_variance, simulate_cmj_batch, simulate_sve_batch
from roughcb.special import kernel_K, kernel_LK, mittag_leffler, scale_W, scale_Wp
from roughcb.volterra import characteristic_functional, solve_v

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []

# criterion 1
C1_PARAMS = [(0.5, 0.0, 1.0), (0.5, 1.0, 1.0), (0.75, 0.0, 1.0)]
C1_POINTS, C1_TMAX, C1_TOL, C1_BUDGET = 512, 2.0, 1e-5, 1.0
# criterion 2
C2_ALPHA, C2_A, C2_LAM, C2_TOL, C2_BUDGET = 0.5, (0.5, 1.0, 2.0), (0.5, 1.0, 4.0), 1e-6, 1.0
# criterion 3
C3_PARAMS, C3_STEPS, C3_GAP_TOL, C3_LIN_LAM, C3_LIN_TOL, C3_BUDGET = (0.5, 0.0, 1.0), 2048, 1e-3, 1e-3j, 1e-4, 10.0
# criterion 4
C4_PATHS, C4_STEPS, C4_LAMS, C4_G, C4_SIGMAS, C4_ALLOW, C4_BUDGET = 100_000, 512, (0.5j, 1j), 0.5j, 3.0, 0.01, 300.0
C4_SOLVER_STEPS = 2048
# criterion 5
C5_PATHS, C5_STEPS, C5_MEAN_Z, C5_VAR_SIGMAS, C5_VAR_REL, C5_BUDGET = 10_000, 512, 4.0, 3.0, 0.10, 120.0
# criterion 6
C6_PATHS, C6_TOL, C6_BUDGET = 10_000, 0.03, 60.0
# criterion 7
C7_N, C7_PATHS, C7_TIMES, C7_SIGMAS, C7_BUDGET = 100, 10_000, (0.5, 1.0), 3.0, 120.0
# criterion 8
C8_N, C8_BETAS, C8_ALPHA, C8_STEPS, C8_BUDGET = (10, 50, 200), (0.0, 1.0), 0.5, 4000, 60.0
# criterion 9
C9_N, C9_PATHS, C9_LAM, C9_BUDGET = (25, 100, 400), 20_000, 1j, 300.0
# criterion 10
C10_STEPS, C10_GAP_TOL, C10_BUDGET = (512, 1024, 2048), 1e-3, 30.0
# criterion 11
C11_PATHS, C11_STEPS, C11_BAND, C11_BUDGET = 200, 512, (0.15, 0.35), 120.0

SEED = 20240611


def report(cid: str, ok: bool, detail: str):
    line = f"{cid:<8}{'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@contextmanager
def stopwatch():
    box = {}
    t0 = time.perf_counter()
    yield box
    box["s"] = time.perf_counter() - t0


def _timing(sec, budget):
    return f"runtime {sec:.2f} s (budget {budget:g} s)"


def test_c1_sonine_and_resolvent():
    with stopwatch() as sw:
        errs = []
        for a, b, c in C1_PARAMS:
            p = validate(a, b, c)
            t = np.linspace(0.0, C1_TMAX, C1_POINTS + 1)[1:]
            s = convolve_singular(lambda u: kernel_K(u, p), lambda u: kernel_LK(u, p), t, -a, a - 1)
            r = convolve_singular(lambda u: kernel_K(u, p), lambda u: scale_Wp(u, p), t, -a, a - 1)
            errs.append((np.max(np.abs(s - 1)), np.max(np.abs(r - (1 - b * scale_W(t, p))))))
    worst = max(max(e) for e in errs)
    ok = worst <= C1_TOL and sw["s"] < C1_BUDGET
    report("C1", ok, f"sup error {worst:.2e} (tol {C1_TOL:g})  " + _timing(sw["s"], C1_BUDGET))


def test_c2_mittag_leffler_laplace():
    a = C2_ALPHA
    with stopwatch() as sw:
        worst = 0.0
        for A in C2_A:
            for lam in C2_LAM:
                # x = s**(1/a) turns x**(a-1) dx into ds / a and removes the singularity
                f = lambda s: A / a * mittag_leffler(a, a, -A * s) * math.exp(-lam * s ** (1 / a))  # noqa: E731
                val = quad(f, 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
                worst = max(worst, abs(val - A / (A + lam ** a)))
    ok = worst <= C2_TOL and sw["s"] < C2_BUDGET
    report("C2", ok, f"max error {worst:.2e} over 9 pairs (tol {C2_TOL:g})  " + _timing(sw["s"], C2_BUDGET))


@pytest.fixture(scope="module")
def c3_params():
    return validate(*C3_PARAMS)


def test_c3i_zero_input(c3_params):
    sol = solve_v(0.0, None, TimeGrid(1.0, C3_STEPS), c3_params)
    ok = not np.any(sol.v[1:]) and not np.any(sol.Kv)
    report("C3(i)", ok, "lambda=0, g=0 gives v == 0 and Kv == 0 exactly" if ok else "nonzero output")


def test_c3ii_initial_value(c3_params):
    sol = solve_v(1j, None, TimeGrid(1.0, C3_STEPS), c3_params)
    gap = abs(sol.Kv[0] - 1j)
    report("C3(ii)", gap <= C3_GAP_TOL, f"|Kv(0+) - i| = {gap:.2e} (tol {C3_GAP_TOL:g})")


def test_c3iii_small_lambda_linearization(c3_params):
    p = c3_params
    sol = solve_v(C3_LIN_LAM, None, TimeGrid(1.0, C3_STEPS), p)
    lin = C3_LIN_LAM * (1 - p.b * scale_W(1.0, p))
    rel = abs(sol.Kv[-1] / lin - 1)
    report("C3(iii)", rel <= C3_LIN_TOL, f"|Kv(T)/(lam(1-bW(T))) - 1| = {rel:.2e} at |lam|=1e-3 "
                                         f"(tol {C3_LIN_TOL:g})")


def test_c3iv_self_convergence(c3_params):
    vals, times = [], []
    for n in (C3_STEPS // 4, C3_STEPS // 2, C3_STEPS):
        with stopwatch() as sw:
            vals.append(abs(solve_v(1j, None, TimeGrid(1.0, n), c3_params).Kv[-1]))
        times.append(sw["s"])
    d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
    order = math.log2(d1 / d2)
    ok = order > 0 and times[-1] < C3_BUDGET
    report("C3(iv)", ok, f"|Kv(T)| = {vals[0]:.8f}, {vals[1]:.8f}, {vals[2]:.8f}; measured order {order:.2f}  "
                         + _timing(times[-1], C3_BUDGET))


def test_c4_cf_cross_validation():
    grid = TimeGrid(1.0, C4_STEPS)
    sgrid = TimeGrid(1.0, C4_SOLVER_STEPS)
    init = InitialState.fixed(1.0)
    rows = []
    with stopwatch() as sw:
        for b, with_g in ((0.0, True), (1.0, False)):
            p = validate(0.5, b, 1.0)
            # g*X(T) is accumulated alongside the b=0 paths, so one batch serves g=0 and g=0.5i
            batch = simulate_sve_batch(p, 1.0, grid, C4_PATHS, SEED + int(b), g=C4_G if with_g else None)
            for g in ((None, C4_G) if with_g else (None,)):
                for lam in C4_LAMS:
                    cf = characteristic_functional(solve_v(lam, g, sgrid, p), 1.0, init)
                    est = mc_char_fn(batch.final, batch.gconv if g is not None else None, lam)
                    rows.append((b, g, lam, "re", abs(est.value.real - cf.real), est.se_re))
                    rows.append((b, g, lam, "im", abs(est.value.imag - cf.imag), est.se_im))
    excess = [d - (C4_SIGMAS * se + C4_ALLOW) for *_, d, se in rows]
    worst = max(excess)
    ok = worst <= 0 and sw["s"] < C4_BUDGET
    zs = max(d / se for *_, d, se in rows)
    report("C4", ok, f"{len(rows)} components, max |MC-exact| - (3 SE + 0.01) = {worst:+.4f}, "
                     f"max |MC-exact|/SE = {zs:.2f}  " + _timing(sw["s"], C4_BUDGET))


def test_c5_mean_and_variance():
    grid = TimeGrid(1.0, C5_STEPS)
    with stopwatch() as sw:
        reps = [variance_report(validate(0.5, b, 1.0), 1.0, grid, C5_PATHS, SEED + 10 + int(b)) for b in (0.0, 1.0)]
    ok_mean = all(r["max_mean_z"] <= C5_MEAN_Z for r in reps)
    ok_var = all(abs(r["var_T"] - r["var_oracle"]) <= C5_VAR_SIGMAS * r["var_se"] + C5_VAR_REL * r["var_oracle"]
                 for r in reps)
    ok = ok_mean and ok_var and sw["s"] < C5_BUDGET
    detail = "; ".join(f"b={b:g}: max mean z {r['max_mean_z']:.2f}, var {r['var_T']:.4f} vs oracle "
                       f"{r['var_oracle']:.4f} (SE {r['var_se']:.4f})" for b, r in zip((0, 1), reps))
    report("C5", ok, detail + f"  (tol z<=4; 3 SE + 10%)  " + _timing(sw["s"], C5_BUDGET))


def test_c6_lemma31_equivalence():
    with stopwatch() as sw:
        r = lemma31_check(0.5, 0.5, 1.0, C6_PATHS, SEED, C6_TOL)
    ok = r["ks"] <= C6_TOL and sw["s"] < C6_BUDGET
    report("C6", ok, f"KS {r['ks']:.4f} (tol {C6_TOL:g})  " + _timing(sw["s"], C6_BUDGET))


def test_c7_critical_cmj_mean():
    grid = TimeGrid(1.0, 2)
    with stopwatch() as sw:
        X = simulate_cmj_batch(C7_N, 1.0, 0.0, grid, C7_PATHS, SEED)
    x0 = X[0, 0]
    parts, ok = [], sw["s"] < C7_BUDGET
    for t in C7_TIMES:
        col = X[:, grid.index_of(t)]
        se = col.std(ddof=1) / math.sqrt(col.size)
        z = abs(col.mean() - x0) / se
        ok &= z <= C7_SIGMAS
        parts.append(f"t={t:g}: mean {col.mean():.4f} vs X(0)={x0:g} ({z:.2f} SE)")
    report("C7", ok, "; ".join(parts) + "  (tol 3 SE)  " + _timing(sw["s"], C7_BUDGET))


def test_c8_resolvent_ladder():
    with stopwatch() as sw:
        study = {b: resolvent_convergence_study(C8_N, b, C8_ALPHA, 1.0, C8_STEPS) for b in C8_BETAS}
    ok = all(strictly_decreasing(r["sup_error"] for r in rows) for rows in study.values()) and sw["s"] < C8_BUDGET
    detail = "; ".join(f"beta={b:g}: " + ", ".join(f"{r['sup_error']:.4f}" for r in rows)
                       for b, rows in study.items())
    report("C8", ok, detail + "  (strictly decreasing over n=10,50,200)  " + _timing(sw["s"], C8_BUDGET))


def test_c9_cmj_weak_convergence():
    p = standard_params(0.5, 0.0)
    cf = characteristic_functional(solve_v(C9_LAM, None, TimeGrid(1.0, 2048), p), 1.0, InitialState.fixed(1.0))
    grid = TimeGrid(1.0, 2)
    dist, ses = [], []
    with stopwatch() as sw:
        for n in C9_N:
            X = simulate_cmj_batch(n, 1.0, 0.0, grid, C9_PATHS, SEED + n)[:, -1]
            est = mc_char_fn(X, None, C9_LAM)
            dist.append(abs(est.value - cf))
            ses.append(math.hypot(est.se_re, est.se_im))
    ok = strictly_decreasing(dist) and sw["s"] < C9_BUDGET
    report("C9", ok, "|MC CF - exact| = " + ", ".join(f"{d:.4f}" for d in dist)
           + f" for n = 25, 100, 400 (SE ~{max(ses):.4f}; must decrease)  " + _timing(sw["s"], C9_BUDGET))


def test_c10_riccati_residual():
    p = validate(0.5, 0.0, 1.0)
    with stopwatch() as sw:
        res = [riccati_residual(solve_v(1j, None, TimeGrid(1.0, n), p)) for n in C10_STEPS]
    norms = [r[0] for r in res]
    gap = res[-1][1]
    ok = strictly_decreasing(norms) and gap <= C10_GAP_TOL and sw["s"] < C10_BUDGET
    report("C10", ok, "residual " + ", ".join(f"{x:.3e}" for x in norms)
           + f" at n = 512, 1024, 2048; initial gap {gap:.2e} (tol {C10_GAP_TOL:g})  " + _timing(sw["s"], C10_BUDGET))


def test_c11_roughness():
    with stopwatch() as sw:
        b = simulate_sve_batch(validate(0.5, 0.0, 1.0), 1.0, TimeGrid(1.0, C11_STEPS), C11_PATHS, SEED,
                               keep_paths=True)
        H = roughness_exponent(b.paths)
    lo, hi = C11_BAND
    ok = lo <= H <= hi and sw["s"] < C11_BUDGET
    report("C11", ok, f"roughness {H:.3f} in [{lo:g}, {hi:g}] (target 0.25)  " + _timing(sw["s"], C11_BUDGET))


C12_COMMANDS = [
    ["scale-fn", "--n-steps", "16"],
    ["solve-volterra", "--n-steps", "64", "--g-im", "0.5"],
    ["fractional-check", "--n-steps", "128"],
    ["simulate-sve", "--paths", "1500", "--n-steps", "32", "--seed", "5"],
    ["simulate-sve", "--paths", "1500", "--n-steps", "32", "--seed", "5", "--format", "json"],
    ["simulate-cmj", "--paths", "1500", "--n", "25", "--n-steps", "8", "--seed", "5"],
    ["simulate-cp", "--paths", "1500", "--n-levels", "8", "--seed", "5"],
    ["verify-cf", "--paths", "1500", "--n-steps", "32", "--solver-steps", "128", "--seed", "5"],
    ["resolvent-convergence", "--steps", "400"],
    ["lemma31-check", "--paths", "1500", "--seed", "5"],
]


def test_c12_reproducibility(tmp_path):
    from roughcb.cli import run
    bad = []
    for i, cmd in enumerate(C12_COMMANDS):
        a, b, c = (tmp_path / f"{i}{s}" for s in "abc")
        ca = run(cmd + ["--threads", "1", "--out", str(a)])
        cb = run(cmd + ["--threads", "3", "--out", str(b)])
        cc = run(["replay", str(a), "--threads", "2", "--out", str(c)])
        if not (ca == cb == cc and a.read_bytes() == b.read_bytes() == c.read_bytes()):
            bad.append(cmd[0])
    report("C12", not bad, f"{len(C12_COMMANDS)} outputs byte-identical across --threads 1/3 and replay"
           if not bad else f"mismatch in {bad}")


if __name__ == "__main__":
    import inspect
    import tempfile
    from pathlib import Path

    p3 = validate(*C3_PARAMS)
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            args = inspect.signature(fn).parameters
            kw = {}
            if "c3_params" in args:
                kw["c3_params"] = p3
            if "tmp_path" in args:
                kw["tmp_path"] = Path(tempfile.mkdtemp())
            try:
                fn(**kw)
            except AssertionError:
                pass
