"""Model parameters, standardization and path rescaling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlphaOutOfRange,
    GridMismatch,
    InvalidGrid,
    InvalidInitialState,
    NegativeDrift,
    NonPositiveScale,
)


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the Laplace exponent ``Phi(lam) = b*lam + c*lam**(1+alpha)``."""

    alpha: float
    b: float
    c: float

    def laplace_exponent(self, lam):
        lam = np.asarray(lam, dtype=float)
        return self.b * lam + self.c * lam ** (1.0 + self.alpha)


def validate(alpha, b, c) -> ModelParams:
    alpha, b, c = float(alpha), float(b), float(c)
    if not (0.0 < alpha < 1.0) or not math.isfinite(alpha):
        raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {alpha}")
    if not b >= 0.0 or not math.isfinite(b):
        raise NegativeDrift(f"b must be >= 0, got {b}")
    if not c > 0.0 or not math.isfinite(c):
        raise NonPositiveScale(f"c must be > 0, got {c}")
    return ModelParams(alpha, b, c)


@dataclass(frozen=True)
class Standardization:
    c0: float
    beta: float


def standardize(params: ModelParams) -> Standardization:
    a = params.alpha
    c0 = (params.c / math.gamma(1.0 - a)) ** (1.0 / (1.0 + a))
    return Standardization(c0=c0, beta=params.b / c0)


def destandardize(alpha: float, std: Standardization) -> ModelParams:
    """Inverse of :func:`standardize`."""
    return validate(alpha, std.beta * std.c0, std.c0 ** (1.0 + alpha) * math.gamma(1.0 - alpha))


def standard_params(alpha: float, beta: float) -> ModelParams:
    """Parameters of the canonical process, ``Phi_0(lam) = beta*lam + Gamma(1-alpha)*lam**(1+alpha)``."""
    return validate(alpha, beta, math.gamma(1.0 - alpha))


@dataclass(frozen=True)
class InitialState:
    """Either a fixed initial mass or an exponentially distributed one."""

    fixed_zeta: float | None = None
    exponential_mean: float | None = None

    def __post_init__(self):
        given = [v for v in (self.fixed_zeta, self.exponential_mean) if v is not None]
        if len(given) != 1:
            raise InvalidInitialState("exactly one of fixed_zeta and exponential_mean must be set")
        v = float(given[0])
        if not (v > 0.0 and math.isfinite(v)):
            raise InvalidInitialState(f"initial mass parameter must be > 0, got {v}")

    @classmethod
    def fixed(cls, zeta):
        return cls(fixed_zeta=float(zeta))

    @classmethod
    def exponential(cls, mean):
        return cls(exponential_mean=float(mean))

    @property
    def is_fixed(self):
        return self.fixed_zeta is not None

    @property
    def mean(self):
        return self.fixed_zeta if self.is_fixed else self.exponential_mean


@dataclass(frozen=True)
class TimeGrid:
    t_max: float
    n_steps: int

    def __post_init__(self):
        if not (float(self.t_max) > 0.0 and math.isfinite(float(self.t_max))):
            raise InvalidGrid(f"t_max must be > 0, got {self.t_max}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise InvalidGrid(f"n_steps must be an integer >= 2, got {self.n_steps}")

    @property
    def h(self) -> float:
        return self.t_max / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.h
        t[-1] = self.t_max
        return t

    def index_of(self, t, rtol=1e-9) -> int:
        """Index of the node equal to ``t``."""
        k = int(round(t / self.h))
        if k < 0 or k > self.n_steps or abs(k * self.h - t) > rtol * max(1.0, abs(t)):
            raise GridMismatch(f"time {t} is not a grid node")
        return k

    def scaled(self, factor: float) -> "TimeGrid":
        return TimeGrid(self.t_max * factor, self.n_steps)


def rescale_path(t, x, c0, at=None):
    """Map a standardized path to general coordinates.

    The output grid is ``c0 * t`` and the values are ``x / c0``.  If ``at`` is
    given, the general-coordinate path is evaluated there by linear
    interpolation between nodes.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if c0 <= 0:
        raise NonPositiveScale(f"c0 must be > 0, got {c0}")
    tg = t * c0
    xg = x / c0
    if at is None:
        return tg, xg
    at = np.asarray(at, dtype=float)
    s = at / c0
    tol = 1e-12 * max(1.0, float(t[-1]))
    if np.any(s < t[0] - tol) or np.any(s > t[-1] + tol):
        raise GridMismatch("requested time lies outside the simulated range")
    if x.ndim == 1:
        return at, np.interp(s, t, x) / c0
    return at, np.stack([np.interp(s, t, row) for row in x]) / c0
