"""Gaussian conditional probability paths.

A path is fixed by a noise schedule ``(alpha_t, beta_t)`` with
``alpha_0 = beta_1 = 0`` and ``alpha_1 = beta_0 = 1``. Conditioned on a data
point ``z`` the law at time ``t`` is ``N(alpha_t z, beta_t^2 I)``, and every
quantity in this module (flow, velocity, score, velocity/score conversion) is
an explicit formula in the schedule values.

Times may be scalars or arrays of shape ``(n,)``; points are arrays of shape
``(d,)`` or ``(n, d)``. Schedule coefficients broadcast against the trailing
coordinate axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, SingularityError

SCHEDULE_KINDS = ("condot", "trig")


class ScheduleValues(NamedTuple):
    alpha: np.ndarray | float
    beta: np.ndarray | float
    alpha_dot: np.ndarray | float
    beta_dot: np.ndarray | float


@dataclass(frozen=True)
class NoiseSchedule:
    """Monotone schedule pair; ``kind`` is ``"condot"`` or ``"trig"``."""

    kind: str = "condot"

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise DomainError(f"unknown schedule kind {self.kind!r}")

    def __call__(self, t) -> ScheduleValues:
        return schedule_eval(self, t)


def schedule_eval(schedule: NoiseSchedule, t) -> ScheduleValues:
    """Return ``(alpha, beta, alpha_dot, beta_dot)`` at time(s) ``t`` in [0, 1]."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError(f"schedule time outside [0, 1]: {t}")
    if schedule.kind == "condot":
        one = np.ones_like(t)
        vals = (t, 1.0 - t, one, -one)
    else:
        half_pi = 0.5 * np.pi
        alpha = np.sin(half_pi * t)
        beta = np.cos(half_pi * t)
        # cos(pi/2) is 6e-17 in floating point; pin the endpoints exactly.
        beta = np.where(t == 1.0, 0.0, beta)
        alpha = np.where(t == 1.0, 1.0, alpha)
        vals = (alpha, beta, half_pi * beta, -half_pi * alpha)
    if t.ndim == 0:
        return ScheduleValues(*(float(v) for v in vals))
    return ScheduleValues(*vals)


@dataclass(frozen=True)
class TimeClamp:
    """Keeps times inside ``[eps_low, 1 - eps_high]``."""

    eps_low: float = 1e-4
    eps_high: float = 1e-3

    def __post_init__(self):
        if self.eps_low < 0 or self.eps_high <= 0 or self.eps_low + self.eps_high >= 1:
            raise DomainError(f"invalid time clamp {self}")

    @property
    def low(self) -> float:
        return self.eps_low

    @property
    def high(self) -> float:
        return 1.0 - self.eps_high

    def __call__(self, t):
        return np.clip(t, self.low, self.high)

    def contains(self, t) -> bool:
        t = np.asarray(t)
        return bool(np.all((t >= self.low) & (t <= self.high)))


@dataclass(frozen=True)
class GaussianPath:
    schedule: NoiseSchedule = NoiseSchedule()
    dim: int = 1

    def __post_init__(self):
        if int(self.dim) < 1:
            raise DomainError(f"dimension must be positive, got {self.dim}")

    def coefficients(self, t) -> ScheduleValues:
        return schedule_eval(self.schedule, t)


def _col(coef, x: np.ndarray):
    """Broadcast a per-item coefficient against the coordinate axis of ``x``."""
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim == 0:
        return float(coef)
    return coef.reshape(coef.shape + (1,) * (x.ndim - coef.ndim))


def _require_positive(value, name: str, t):
    if np.any(np.asarray(value) <= 0.0):
        raise SingularityError(f"{name} vanishes at t={t}")


def cond_sample(path: GaussianPath, z, t, rng: np.random.Generator) -> np.ndarray:
    """Draw ``x = alpha_t z + beta_t eps`` with ``eps ~ N(0, I)``."""
    z = np.asarray(z, dtype=np.float64)
    alpha, beta, _, _ = path.coefficients(t)
    eps = rng.standard_normal(z.shape)
    return _col(alpha, z) * z + _col(beta, z) * eps


def cond_flow(path: GaussianPath, x0, z, t) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    alpha, beta, _, _ = path.coefficients(t)
    return _col(alpha, z) * z + _col(beta, x0) * x0


def cond_vector_field(path: GaussianPath, x, z, t) -> np.ndarray:
    """Velocity ``(a' - (b'/b) a) z + (b'/b) x`` that transports N(0, I) onto ``z``."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    alpha, beta, alpha_dot, beta_dot = path.coefficients(t)
    _require_positive(beta, "beta", t)
    ratio = np.asarray(beta_dot) / np.asarray(beta)
    return (_col(alpha_dot - ratio * alpha, z) * z) + _col(ratio, x) * x


def cond_score(path: GaussianPath, x, z, t) -> np.ndarray:
    """Gradient of ``log N(x; alpha_t z, beta_t^2 I)`` with respect to ``x``."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    alpha, beta, _, _ = path.coefficients(t)
    _require_positive(beta, "beta", t)
    return -(x - _col(alpha, z) * z) / _col(np.asarray(beta) ** 2, x)


def conversion_coefficients(path: GaussianPath, t):
    """Return ``(score_coef, x_coef)`` with ``u = score_coef * s + x_coef * x``."""
    alpha, beta, alpha_dot, beta_dot = path.coefficients(t)
    _require_positive(alpha, "alpha", t)
    alpha = np.asarray(alpha)
    beta = np.asarray(beta)
    score_coef = beta**2 * alpha_dot / alpha - beta_dot * beta
    return score_coef, np.asarray(alpha_dot) / alpha


def score_to_velocity(path: GaussianPath, x, t, s) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    score_coef, x_coef = conversion_coefficients(path, t)
    return _col(score_coef, s) * s + _col(x_coef, x) * x


def velocity_to_score(path: GaussianPath, x, t, u) -> np.ndarray:
    """Invert :func:`score_to_velocity`; defined for every ``t`` in [0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    alpha, beta, alpha_dot, beta_dot = path.coefficients(t)
    denom = np.asarray(beta) ** 2 * alpha_dot - np.asarray(alpha) * beta_dot * beta
    if np.any(denom == 0.0):
        raise SingularityError(f"velocity-to-score denominator vanishes at t={t}")
    return (_col(alpha, u) * u - _col(alpha_dot, x) * x) / _col(denom, x)


def gaussian_log_density(x, mean, std) -> np.ndarray:
    """Log density of an isotropic Gaussian, summed over the trailing axis."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    std = np.asarray(std, dtype=np.float64)
    sq = np.sum((x - mean) ** 2, axis=-1)
    return -0.5 * sq / std**2 - d * np.log(std) - 0.5 * d * np.log(2.0 * np.pi)
