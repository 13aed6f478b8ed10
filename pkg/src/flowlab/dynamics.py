"""ODE/SDE simulation: Brownian motion, Euler, Heun, Euler-Maruyama, Langevin.

All integrators work on a batch of paths at once: ``x0`` has shape ``(n, d)``
(or ``(d,)`` for a single path) and a field is any callable ``field(x, t)``
returning an array shaped like ``x``. Fields are always evaluated at the
left end of a step, except for Heun's corrector which also looks at ``t + h``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, SimulationError

FieldFunction = Callable[[np.ndarray, float], np.ndarray]

RECORD_MODES = ("all", "terminal")


@dataclass(frozen=True)
class TimeGrid:
    n_steps: int
    start: float = 0.0
    end: float = 1.0

    def __post_init__(self):
        if int(self.n_steps) < 1:
            raise DomainError(f"n_steps must be positive, got {self.n_steps}")
        if not self.end > self.start:
            raise DomainError(f"grid end {self.end} must exceed start {self.start}")

    @property
    def h(self) -> float:
        return (self.end - self.start) / self.n_steps

    def times(self) -> np.ndarray:
        return np.linspace(self.start, self.end, self.n_steps + 1)


@dataclass
class Trajectory:
    """Recorded times and states; ``states[k]`` is the batch at ``times[k]``."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states, dtype=np.float64)
        if len(self.times) != len(self.states):
            raise DomainError("times and states differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("trajectory times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise SimulationError("trajectory contains non-finite states")

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class DiffusionCoefficient:
    """Constant or zero diffusion coefficient ``sigma_t``."""

    value: float = 0.0

    def __post_init__(self):
        if not self.value >= 0.0:
            raise DomainError(f"diffusion coefficient must be >= 0, got {self.value}")

    @classmethod
    def constant(cls, value: float) -> "DiffusionCoefficient":
        return cls(float(value))

    @classmethod
    def zero(cls) -> "DiffusionCoefficient":
        return cls(0.0)

    @property
    def kind(self) -> str:
        return "zero" if self.value == 0.0 else "constant"

    def __call__(self, t) -> float:
        return self.value


class _Recorder:
    def __init__(self, grid: TimeGrid, x0: np.ndarray, record: str):
        if record not in RECORD_MODES:
            raise DomainError(f"record must be one of {RECORD_MODES}")
        self.grid = grid
        self.all = record == "all"
        self.states = [x0.copy()] if self.all else None

    def push(self, x):
        if self.all:
            self.states.append(x.copy())

    def finish(self, x) -> Trajectory:
        times = self.grid.times()
        if self.all:
            return Trajectory(times, np.stack(self.states))
        return Trajectory(times[-1:], x[None].copy())


def _as_state(x0) -> np.ndarray:
    return np.array(x0, dtype=np.float64, copy=True)


def _checked(value, x, t) -> np.ndarray:
    value = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        bad = np.argwhere(~np.isfinite(value))[0]
        raise SimulationError(f"non-finite field value at t={t}, index {tuple(bad)}", x=x, t=t)
    return value


def brownian_path(
    rng: np.random.Generator,
    grid: TimeGrid,
    dim: int,
    n_paths: int | None = None,
    record: str = "all",
) -> Trajectory:
    """``W_0 = 0``, ``W_{t+h} = W_t + sqrt(h) eps``."""
    shape = (dim,) if n_paths is None else (n_paths, dim)
    w = np.zeros(shape)
    rec = _Recorder(grid, w, record)
    sqrt_h = np.sqrt(grid.h)
    for _ in range(grid.n_steps):
        w = w + sqrt_h * rng.standard_normal(shape)
        rec.push(w)
    return rec.finish(w)


def simulate_euler(field: FieldFunction, x0, grid: TimeGrid, record: str = "all") -> Trajectory:
    x = _as_state(x0)
    rec = _Recorder(grid, x, record)
    h = grid.h
    for t in grid.times()[:-1]:
        x = x + h * _checked(field(x, t), x, t)
        rec.push(x)
    return rec.finish(x)


def simulate_heun(field: FieldFunction, x0, grid: TimeGrid, record: str = "all") -> Trajectory:
    x = _as_state(x0)
    rec = _Recorder(grid, x, record)
    h = grid.h
    times = grid.times()
    for t, t_next in zip(times[:-1], times[1:]):
        u = _checked(field(x, t), x, t)
        guess = x + h * u
        u_next = _checked(field(guess, t_next), guess, t_next)
        x = x + 0.5 * h * (u + u_next)
        rec.push(x)
    return rec.finish(x)


def simulate_em(
    field: FieldFunction,
    sigma: Callable[[float], float],
    x0,
    grid: TimeGrid,
    rng: np.random.Generator,
    record: str = "all",
) -> Trajectory:
    """Euler-Maruyama: ``X_{t+h} = X_t + h u_t(X_t) + sqrt(h) sigma_t eps``.

    Steps with ``sigma_t == 0`` draw no noise and reduce to the Euler update
    bit for bit.
    """
    x = _as_state(x0)
    rec = _Recorder(grid, x, record)
    h = grid.h
    sqrt_h = np.sqrt(h)
    for t in grid.times()[:-1]:
        x = x + h * _checked(field(x, t), x, t)
        sig = float(sigma(t))
        if sig != 0.0:
            x = x + (sqrt_h * sig) * rng.standard_normal(x.shape)
            if not np.all(np.isfinite(x)):
                raise SimulationError(f"non-finite state at t={t}", x=x, t=t)
        rec.push(x)
    return rec.finish(x)


def simulate_langevin(
    score: FieldFunction,
    sigma: float,
    x0,
    grid: TimeGrid,
    rng: np.random.Generator,
    record: str = "all",
) -> Trajectory:
    """Simulate ``dX = (sigma^2/2) score(X) dt + sigma dW``."""
    if not sigma > 0:
        raise DomainError(f"Langevin dynamics needs sigma > 0, got {sigma}")
    half_var = 0.5 * sigma**2

    def drift(x, t):
        return half_var * score(x, t)

    return simulate_em(drift, DiffusionCoefficient.constant(sigma), x0, grid, rng, record)


def fitted_order(step_sizes, errors) -> float:
    """Slope of ``log(error)`` against ``log(h)`` by least squares."""
    slope, _ = np.polyfit(np.log(step_sizes), np.log(errors), 1)
    return float(slope)
