"""Classifier-free guidance and guided ODE/SDE samplers.

A *model* is either a label-conditional :class:`MlpParams` or any callable
``model(x, t, y)`` where ``y`` is an integer label array or ``None`` for the
null label. Guidance mixes the null-label and class-label outputs:

    guided = (1 - w) * model(x, t, None) + w * model(x, t, y)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .dynamics import DiffusionCoefficient, TimeGrid, simulate_em, simulate_euler
from .errors import DomainError
from .net import NULL_LABEL, MlpParams, forward
from .paths import GaussianPath, velocity_to_score

LabelledField = Callable[[np.ndarray, float, "np.ndarray | None"], np.ndarray]
Model = Union[MlpParams, LabelledField]


@dataclass(frozen=True)
class GuidanceConfig:
    w: float = 3.0
    sigma: DiffusionCoefficient = field(default_factory=DiffusionCoefficient.zero)
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(100))
    n_samples: int = 1024

    def __post_init__(self):
        if not self.w >= 0.0:
            raise DomainError(f"guidance scale must be >= 0, got {self.w}")
        if self.n_samples < 1:
            raise DomainError(f"n_samples must be >= 1, got {self.n_samples}")


def as_labelled_field(model: Model) -> LabelledField:
    """Wrap a conditional network as ``f(x, t, y)``; callables pass through."""
    if isinstance(model, MlpParams):
        if not model.spec.conditional:
            raise DomainError("guidance needs a label-conditional network")

        def f(x, t, y):
            return forward(model, x, t, y)

        return f
    if not callable(model):
        raise DomainError(f"model must be MlpParams or callable, got {type(model).__name__}")
    return model


def _check_label(y):
    if y is None or np.any(np.asarray(y) == NULL_LABEL):
        raise DomainError("guidance needs a class label, not the null label")


def _combine(f: LabelledField, x, t, y, w: float) -> np.ndarray:
    _check_label(y)
    cond = np.asarray(f(x, t, y), dtype=np.float64)
    if w == 1.0:
        return cond
    uncond = np.asarray(f(x, t, None), dtype=np.float64)
    return (1.0 - w) * uncond + w * cond


def guided_velocity(model: Model, x, t, y, w: float) -> np.ndarray:
    """``(1 - w) u(x, t, null) + w u(x, t, y)``; exactly the conditional output at ``w = 1``."""
    return _combine(as_labelled_field(model), x, t, y, w)


def guided_score(model: Model, x, t, y, w: float) -> np.ndarray:
    """Same affine combination applied to a score model."""
    return _combine(as_labelled_field(model), x, t, y, w)


def score_from_velocity(path: GaussianPath, model: Model) -> LabelledField:
    """Score model obtained from a velocity model by the Gaussian-path conversion."""
    f = as_labelled_field(model)

    def score(x, t, y):
        return velocity_to_score(path, x, t, f(x, t, y))

    return score


def _labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 0:
        return np.full(n, int(y), dtype=np.int64)
    if y.shape != (n,):
        raise DomainError(f"expected {n} labels, got shape {y.shape}")
    return y.astype(np.int64)


def _dim(model: Model, dim: int | None) -> int:
    if isinstance(model, MlpParams):
        return model.spec.dim
    if dim is None:
        raise DomainError("dim is required when the model is a plain callable")
    return int(dim)


def sample_guided_ode(
    model: Model, y, config: GuidanceConfig, rng: np.random.Generator, dim: int | None = None
) -> np.ndarray:
    """Euler integration of the guided velocity from ``x0 ~ N(0, I)``; returns ``(n, d)``."""
    n = config.n_samples
    labels = _labels(y, n)
    f = as_labelled_field(model)
    x0 = rng.standard_normal((n, _dim(model, dim)))

    def u(x, t):
        return _combine(f, x, t, labels, config.w)

    return simulate_euler(u, x0, config.grid, record="terminal").terminal


def sample_guided_sde(
    velocity_model: Model,
    y,
    config: GuidanceConfig,
    rng: np.random.Generator,
    score_model: Model | None = None,
    path: GaussianPath | None = None,
    dim: int | None = None,
) -> np.ndarray:
    """Euler-Maruyama on ``u~ + (sigma^2/2) s~`` with the guided velocity and score.

    Without ``score_model`` the score is converted from the velocity model
    along ``path`` (default condot). The last grid step is a plain drift step
    with the guided velocity and no noise, since the conversion is singular at
    ``t = 1``. With ``sigma = 0`` the output equals :func:`sample_guided_ode`
    bit for bit under the same generator state.
    """
    n = config.n_samples
    d = _dim(velocity_model, dim)
    labels = _labels(y, n)
    u_model = as_labelled_field(velocity_model)
    if score_model is None:
        s_model = score_from_velocity(path or GaussianPath(dim=d), velocity_model)
    else:
        s_model = as_labelled_field(score_model)
    x0 = rng.standard_normal((n, d))

    def u(x, t):
        return _combine(u_model, x, t, labels, config.w)

    def s(x, t):
        return _combine(s_model, x, t, labels, config.w)

    return simulate_extended_sde(u, s, config.sigma, x0, config.grid, rng)


def simulate_extended_sde(velocity, score, sigma, x0, grid: TimeGrid, rng, record="terminal"):
    """Euler-Maruyama on ``velocity + (sigma^2/2) score`` with a noiseless final step.

    The score is only evaluated on steps where ``sigma_t != 0``, so a zero
    diffusion coefficient reproduces :func:`simulate_euler` exactly.
    """
    t_last = grid.times()[-2]

    def sig(t):
        return 0.0 if t >= t_last else float(sigma(t))

    def drift(x, t):
        u = velocity(x, t)
        s_t = sig(t)
        if s_t == 0.0:
            return u
        return u + 0.5 * s_t**2 * score(x, t)

    result = simulate_em(drift, sig, x0, grid, rng, record=record)
    return result.terminal if record == "terminal" else result
