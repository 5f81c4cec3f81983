import math

import numpy as np
import pytest
from scipy.integrate import quad

from roughcb.errors import MemoryBudgetExceeded, PathBudgetExceeded, SubcriticalRateError, TruncationTooCoarse
from roughcb.model import InitialState, TimeGrid, standard_params, validate
from roughcb.rng import RngContract
from roughcb.simulate import (SveConfig, cmj_counts, cmj_rate, cp_localtime_counts, isometry_variance,
                              simulate_cmj, simulate_cmj_batch, simulate_cp_localtime, simulate_sve,
                              simulate_sve_batch)
from roughcb.simulate.paths import CHUNK, Scheme
from roughcb.special import scale_W

P0 = validate(0.5, 0, 1)
P1 = validate(0.5, 1, 1)


def b0_variance(a, c, zeta, T):
    """Closed form at b = 0: W(u) = u**a / (c Gamma(1+a)) makes the mark integral self-similar."""
    c_nu = c * a * (a + 1) / math.gamma(1 - a)
    inner = quad(lambda r: (1 - (1 - r) ** a) ** 2 * r ** (-a - 2), 0, 1, epsabs=1e-14, limit=200)[0]
    kappa = c_nu / (c * math.gamma(1 + a)) ** 2 * (inner + 1 / (a + 1))
    return zeta * kappa * T ** a / a


@pytest.mark.parametrize("a,c", [(0.5, 1.0), (0.75, 1.0), (0.3, 2.0)])
def test_isometry_oracle_b0(a, c):
    p = validate(a, 0.0, c)
    assert isometry_variance(p, 1.3, 0.8) == pytest.approx(b0_variance(a, c, 1.3, 0.8), rel=1e-8)


def test_isometry_oracle_refines():
    v = [isometry_variance(P1, 1.0, 1.0, n) for n in (30, 40, 60)]
    assert abs(v[2] - v[1]) < 1e-8


def test_zero_initial_mass():
    s = simulate_sve(P0, 0.0, TimeGrid(1.0, 64), rng=RngContract(3, 0), emit_jumps=True)
    assert not s.values.any() and s.jumps == []
    s = simulate_sve(P1, 0.0, TimeGrid(1.0, 64), rng=RngContract(3, 0))
    assert not s.values.any()


def test_sve_path_basics():
    g = TimeGrid(1.0, 128)
    s = simulate_sve(P0, 1.0, g, rng=RngContract(5, 2), emit_jumps=True)
    assert s.scheme == Scheme.SVE_EULER and s.values[0] == 1.0
    assert np.all(s.values >= 0)
    assert all(0 <= j.time <= 1.0 and j.mark > g.h for j in s.jumps)
    t = simulate_sve(P0, 1.0, g, rng=RngContract(5, 2))
    assert np.array_equal(s.values, t.values)


def test_batch_matches_single_paths_and_threads():
    g = TimeGrid(1.0, 64)
    n = CHUNK + 37
    b1 = simulate_sve_batch(P1, 1.0, g, n, seed=11, threads=1, keep_paths=True)
    b4 = simulate_sve_batch(P1, 1.0, g, n, seed=11, threads=4, keep_paths=True)
    assert np.array_equal(b1.paths, b4.paths)
    assert np.array_equal(b1.mean, b4.mean) and np.array_equal(b1.var, b4.var)
    for sid in (0, CHUNK, n - 1):
        s = simulate_sve(P1, 1.0, g, rng=RngContract(11, sid))
        assert np.array_equal(s.values, b1.paths[sid])
    assert np.allclose(b1.mean, b1.paths.mean(axis=0), rtol=1e-12)
    assert np.allclose(b1.var, b1.paths.var(axis=0, ddof=1), rtol=1e-10)


@pytest.mark.parametrize("p", [P0, P1])
def test_sve_mean_identity(p):
    g = TimeGrid(1.0, 128)
    n = 4000
    b = simulate_sve_batch(p, 1.0, g, n, seed=21)
    oracle = 1 - p.b * np.concatenate([[0.0], scale_W(g.nodes[1:], p)])
    se = np.sqrt(b.var / n)
    z = np.abs(b.mean - oracle)[1:] / se[1:]
    assert z.max() <= 4


def test_sve_exponential_initial_state():
    g = TimeGrid(0.5, 64)
    b = simulate_sve_batch(P0, InitialState.exponential(2.0), g, 4000, seed=2, keep_paths=True)
    x0 = b.paths[:, 0]
    assert abs(x0.mean() - 2.0) <= 4 * x0.std() / math.sqrt(x0.size)
    assert abs(b.mean[-1] - 2.0) <= 4 * math.sqrt(b.var[-1] / 4000)


def test_drop_mode_warns():
    g = TimeGrid(1.0, 64)
    with pytest.warns(TruncationTooCoarse):
        simulate_sve(P0, 1.0, g, eps=0.5, rng=RngContract(0, 0), config=SveConfig(small_jumps="drop"))


def test_clamp_counter_grows_for_small_zeta():
    g = TimeGrid(1.0, 128)
    big = simulate_sve_batch(P0, 20.0, g, 500, seed=1).clamp_events.sum()
    small = simulate_sve_batch(P0, 0.05, g, 500, seed=1).clamp_events.sum()
    assert small > big


def test_cmj_examples():
    assert cmj_rate(100, 0.5, 1.0) == pytest.approx(0.45, rel=1e-15)
    s = simulate_cmj(100, 1.0, 0.0, 1.0, rng=RngContract(4, 9))
    assert s.values[0] == 1.0 and s.scheme == Scheme.CMJ_PRELIMIT
    assert np.all(s.values >= 0)
    with pytest.raises(SubcriticalRateError):
        simulate_cmj(1, 1.0, 2.0, 1.0)
    with pytest.raises(MemoryBudgetExceeded):
        cmj_counts(50, 0.5, 0.5, np.array([0.0, 1e6]), 4, seed=0, cap=60)


def test_cmj_batch_reproducible():
    g = TimeGrid(1.0, 8)
    a = simulate_cmj_batch(25, 1.0, 0.0, g, CHUNK + 5, seed=3, threads=1)
    b = simulate_cmj_batch(25, 1.0, 0.0, g, CHUNK + 5, seed=3, threads=3)
    assert np.array_equal(a, b)
    s = simulate_cmj(25, 1.0, 0.0, 1.0, rng=RngContract(3, CHUNK + 1), n_steps=8)
    assert np.array_equal(s.values, a[CHUNK + 1])


def test_cmj_critical_mean():
    g = TimeGrid(1.0, 2)
    X = simulate_cmj_batch(100, 1.0, 0.0, g, 4000, seed=8)
    for k in (1, 2):
        se = X[:, k].std(ddof=1) / math.sqrt(X.shape[0])
        assert abs(X[:, k].mean() - X[0, 0]) <= 3 * se


def test_cp_no_jump_path():
    lv = TimeGrid(2.0, 20)
    # a vanishing jump rate gives a single downward sweep from the start height
    L = cp_localtime_counts(1e-300, 0.5, lv, 3, seed=0, start_height=1.05)
    assert np.array_equal(L, np.tile((lv.nodes < 1.05).astype(np.int64), (3, 1)))


def test_cp_level_zero_and_reproducibility():
    lv = TimeGrid(1.0, 10)
    a = cp_localtime_counts(0.5, 0.5, lv, CHUNK + 3, seed=5, threads=1)
    assert np.all(a[:, 0] == 1)
    assert np.array_equal(a, cp_localtime_counts(0.5, 0.5, lv, CHUNK + 3, seed=5, threads=4))
    s = simulate_cp_localtime(0.5, 1.0, rng=RngContract(5, 7), n_levels=10)
    assert np.array_equal(s.values, a[7])
    with pytest.raises(PathBudgetExceeded):
        cp_localtime_counts(0.5, 0.5, lv, 50, seed=5, cap=0)
