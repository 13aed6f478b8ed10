"""Training loops: conditional flow matching, conditional score matching, noise prediction.

Every loss draws a batch ``(z, t, eps)`` with ``z`` sampled with replacement
from the dataset, forms ``x = alpha_t z + beta_t eps`` and regresses the
network onto a per-sample target:

* ``cfm``      -> ``alpha_dot_t z + beta_dot_t eps`` (conditional velocity)
* ``csm``      -> ``-eps / beta_t`` (conditional score)
* ``ddpm_eps`` -> ``eps``

A label-conditional network is trained with classifier-free label dropping:
each label is replaced by the null label with probability ``label_drop_eta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SingularityError, TrainingError
from .net import NULL_LABEL, GradSet, MlpParams, MlpSpec, mlp_init, mse_loss_and_grads
from .oracle import Dataset
from .paths import GaussianPath, NoiseSchedule, TimeClamp, _col
from .rng import make_rng

LOSS_KINDS = ("cfm", "csm", "ddpm_eps")
LOG_EVERY = 50


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "cfm"
    schedule: str = "condot"
    batch_size: int = 256
    n_steps: int = 5000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    label_drop_eta: float = 0.1
    t_clamp: TimeClamp = field(default_factory=TimeClamp)
    seed: int = 0

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise DomainError(f"loss_kind must be one of {LOSS_KINDS}")
        NoiseSchedule(self.schedule)
        if not 0.0 <= self.label_drop_eta <= 1.0:
            raise DomainError("label_drop_eta must lie in [0, 1]")
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if self.n_steps < 0:
            raise DomainError("n_steps must be >= 0")


@dataclass
class OptimizerState:
    first: MlpParams
    second: MlpParams
    step: int = 0

    @classmethod
    def init(cls, params: MlpParams) -> "OptimizerState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


@dataclass
class Batch:
    z: np.ndarray
    t: np.ndarray
    eps: np.ndarray
    y: np.ndarray | None = None


def sample_times(loss_kind: str, n: int, rng: np.random.Generator, clamp: TimeClamp) -> np.ndarray:
    """Uniform times: ``[0, 1)`` for cfm and ddpm_eps, the clamp interval for csm."""
    u = rng.random(n)
    if loss_kind == "csm":
        return clamp.low + (clamp.high - clamp.low) * u
    return u


def drop_labels(labels: np.ndarray, eta: float, rng: np.random.Generator) -> np.ndarray:
    drop = rng.random(labels.shape[0]) < eta
    return np.where(drop, NULL_LABEL, labels)


def draw_batch(
    path: GaussianPath,
    data: Dataset,
    rng: np.random.Generator,
    config: TrainConfig,
    n: int | None = None,
) -> Batch:
    n = config.batch_size if n is None else n
    idx = rng.choice(len(data), size=n, p=data.weights)
    t = sample_times(config.loss_kind, n, rng, config.t_clamp)
    eps = rng.standard_normal((n, path.dim))
    y = None if data.labels is None else data.labels[idx]
    return Batch(data.points[idx], t, eps, y)


def regression_pair(path: GaussianPath, loss_kind: str, z, t, eps) -> tuple[np.ndarray, np.ndarray]:
    """Noisy input ``x`` and regression target for one loss kind."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    eps = np.atleast_2d(np.asarray(eps, dtype=np.float64))
    alpha, beta, alpha_dot, beta_dot = path.coefficients(t)
    x = _col(alpha, z) * z + _col(beta, eps) * eps
    if loss_kind == "cfm":
        target = _col(alpha_dot, z) * z + _col(beta_dot, eps) * eps
    elif loss_kind == "csm":
        if np.any(np.asarray(beta) <= 0):
            raise SingularityError(f"score target undefined where beta_t = 0 (t={t})")
        target = -eps / _col(beta, eps)
    elif loss_kind == "ddpm_eps":
        target = eps.copy()
    else:
        raise DomainError(f"unknown loss kind {loss_kind!r}")
    return x, target


def eps_to_score(path: GaussianPath, t, eps_pred) -> np.ndarray:
    """Score implied by a noise prediction: ``s = -eps / beta_t``."""
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    beta = path.coefficients(t).beta
    if np.any(np.asarray(beta) <= 0):
        raise SingularityError(f"noise-to-score conversion undefined at beta_t = 0 (t={t})")
    return -eps_pred / _col(beta, eps_pred)


def _kind_loss(kind, params, path, data, rng, config):
    batch = draw_batch(path, data, rng, config)
    x, target = regression_pair(path, kind, batch.z, batch.t, batch.eps)
    return mse_loss_and_grads(params, x, batch.t, None, target)


def cfm_batch_loss(params, path, data, rng, config):
    return _kind_loss("cfm", params, path, data, rng, config)


def csm_batch_loss(params, path, data, rng, config):
    return _kind_loss("csm", params, path, data, rng, config)


def ddpm_eps_batch_loss(params, path, data, rng, config):
    return _kind_loss("ddpm_eps", params, path, data, rng, config)


def cfg_batch_loss(params: MlpParams, path, data: Dataset, rng, config: TrainConfig):
    """Label-conditional loss of kind ``config.loss_kind`` with label dropping."""
    if data.labels is None:
        raise DomainError("classifier-free guidance training needs a labelled dataset")
    if not params.spec.conditional:
        raise DomainError("classifier-free guidance training needs a conditional network")
    if data.n_classes > params.spec.n_classes:
        raise DomainError(
            f"dataset has {data.n_classes} classes, network only {params.spec.n_classes}"
        )
    batch = draw_batch(path, data, rng, config)
    y = drop_labels(batch.y, config.label_drop_eta, rng)
    x, target = regression_pair(path, config.loss_kind, batch.z, batch.t, batch.eps)
    return mse_loss_and_grads(params, x, batch.t, y, target)


def batch_loss(params: MlpParams, path, data, rng, config: TrainConfig):
    if params.spec.conditional:
        return cfg_batch_loss(params, path, data, rng, config)
    return _kind_loss(config.loss_kind, params, path, data, rng, config)


def adam_step(
    params: MlpParams, grads: GradSet, state: OptimizerState, config: TrainConfig
) -> tuple[MlpParams, OptimizerState]:
    """One bias-corrected Adam update, applied in place."""
    if not grads.is_finite():
        raise TrainingError(f"non-finite gradient at step {state.step}", step=state.step)
    b1, b2 = config.adam_beta1, config.adam_beta2
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads.arrays[name]
        m = state.first.arrays[name]
        v = state.second.arrays[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
    return params, state


def train(
    config: TrainConfig, data: Dataset, spec: MlpSpec
) -> tuple[MlpParams, list[tuple[int, float]]]:
    """Run ``config.n_steps`` Adam steps; log ``(step, loss)`` every 50 steps."""
    if data.dim != spec.dim:
        raise DomainError(f"data dimension {data.dim} != network dimension {spec.dim}")
    path = GaussianPath(NoiseSchedule(config.schedule), spec.dim)
    params = mlp_init(spec, config.seed)
    state = OptimizerState.init(params)
    rng = make_rng(config.seed, 1)
    history: list[tuple[int, float]] = []
    for step in range(config.n_steps):
        # divergence is reported through TrainingError, not floating-point warnings
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = batch_loss(params, path, data, rng, config)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}", step=step)
        if step % LOG_EVERY == 0:
            history.append((step, loss))
        adam_step(params, grads, state, config)
    return params, history
