"""Quadrature helpers for integrands with algebraic endpoint singularities."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def gauss_legendre(n: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def graded_rule(a, b, n, power, toward="left"):
    """Nodes and weights for an integral over [a, b] graded towards one end.

    Uses ``s = a + (b - a) * x**power`` (or the mirror image), which removes
    an endpoint singularity ``|s - a|**(1/power - 1)`` exactly.  ``a`` and
    ``b`` may be arrays of equal shape; the node axis is appended last.
    """
    x, w = gauss_legendre(n)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    jac = power * x ** (power - 1.0) * w
    if toward == "left":
        nodes = a + (b - a) * x ** power
    else:
        nodes = b - (b - a) * x ** power
    return nodes, (b - a) * jac


def convolve_singular(f, g, t, f_exponent, g_exponent, n=32):
    """``int_0^t f(t - s) g(s) ds`` for each ``t``.

    ``f(u)`` behaves like ``u**f_exponent`` near 0 and ``g(s)`` like
    ``s**g_exponent``; both exponents must exceed -1.  The interval is split
    at ``t/2`` and each half is graded towards its singular end.
    """
    t = np.asarray(t, dtype=float)
    half = 0.5 * t
    s1, w1 = graded_rule(np.zeros_like(t), half, n, 1.0 / (1.0 + g_exponent), "left")
    u2, w2 = graded_rule(np.zeros_like(t), half, n, 1.0 / (1.0 + f_exponent), "left")
    tt = t[..., None]
    left = np.sum(w1 * f(tt - s1) * g(s1), axis=-1)
    right = np.sum(w2 * f(u2) * g(tt - u2), axis=-1)
    return left + right


def power_basis_exponents(alpha, count, extra=(1.0,)):
    """The smallest distinct positive exponents of the form ``j*alpha`` or in ``extra``."""
    cand = {round(j * alpha, 12) for j in range(1, count + 2)}
    cand.update(round(e, 12) for e in extra)
    return sorted(cand)[:count]


def extrapolate_to_zero(t, y, exponents):
    """Least-squares fit ``y ~ a0 + sum_i a_i t**e_i``; returns ``a0``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y)
    cols = [np.ones_like(t)] + [t ** e for e in exponents]
    a = np.stack(cols, axis=1)
    scale = np.abs(a).max(axis=0)
    coef, *_ = np.linalg.lstsq(a / scale, y, rcond=None)
    return coef[0] / scale[0]
