"""The stable Levy measure and the Pareto offspring laws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlphaOutOfRange, DomainError
from .model import ModelParams


def _ret(x, arr):
    return float(arr) if np.ndim(x) == 0 else arr


def _positive(x, name):
    xa = np.asarray(x, dtype=float)
    if np.any(np.isnan(xa)) or np.any(xa <= 0):
        raise DomainError(f"{name} must be > 0")
    return xa


def _unit(u):
    ua = np.asarray(u, dtype=float)
    if np.any(np.isnan(ua)) or np.any(ua <= 0) or np.any(ua >= 1):
        raise DomainError("uniform input must lie in (0, 1)")
    return ua


@dataclass(frozen=True)
class LevyMeasure:
    """``nu(dy) = c_nu * y**(-alpha-2) dy`` on ``y > 0``."""

    params: ModelParams

    @property
    def c_nu(self) -> float:
        a = self.params.alpha
        return self.params.c * a * (a + 1.0) / math.gamma(1.0 - a)

    def density(self, y):
        ya = _positive(y, "y")
        return _ret(y, self.c_nu * ya ** (-self.params.alpha - 2.0))

    def tail(self, s):
        """``nu((s, inf))``."""
        sa = _positive(s, "s")
        a = self.params.alpha
        return _ret(s, self.params.c * a / math.gamma(1.0 - a) * sa ** (-a - 1.0))

    def small_jump_second_moment(self, eps):
        """``int_0^eps y**2 nu(dy)``."""
        ea = _positive(eps, "eps")
        a = self.params.alpha
        return _ret(eps, self.c_nu * ea ** (1.0 - a) / (1.0 - a))

    def first_moment_above(self, eps):
        """``int_eps^inf y nu(dy)``."""
        ea = _positive(eps, "eps")
        a = self.params.alpha
        return _ret(eps, self.c_nu * ea ** (-a) / a)

    def sample_jump_size(self, eps, u):
        """Inverse-CDF draw from ``nu`` restricted to ``(eps, inf)`` and normalized."""
        if not eps > 0:
            raise DomainError("eps must be > 0")
        ua = _unit(u)
        return _ret(u, eps * ua ** (-1.0 / (self.params.alpha + 1.0)))


def nu_tail(s, params: ModelParams):
    return LevyMeasure(params).tail(s)


def nu_small_jump_second_moment(eps, params: ModelParams):
    return LevyMeasure(params).small_jump_second_moment(eps)


def sample_jump_size(eps, u, params: ModelParams):
    return LevyMeasure(params).sample_jump_size(eps, u)


@dataclass(frozen=True)
class ParetoLaw:
    """Lifetime law with tail ``(1+x)**(-alpha-1)`` and its size-biased tail ``(1+x)**(-alpha)``."""

    alpha: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {self.alpha}")

    def tail(self, x):
        return (1.0 + np.asarray(x, dtype=float)) ** (-self.alpha - 1.0)

    def size_biased_tail(self, x):
        return (1.0 + np.asarray(x, dtype=float)) ** (-self.alpha)

    def sample_lifetime(self, u):
        ua = _unit(u)
        return _ret(u, ua ** (-1.0 / (self.alpha + 1.0)) - 1.0)

    def sample_residual_life(self, u):
        ua = _unit(u)
        return _ret(u, ua ** (-1.0 / self.alpha) - 1.0)


def sample_lifetime(u, alpha):
    return ParetoLaw(alpha).sample_lifetime(u)


def sample_residual_life(u, alpha):
    return ParetoLaw(alpha).sample_residual_life(u)
