"""Closed-form marginal quantities for a finite dataset, and PDE residual probes.

With an empirical data distribution the marginal path is a Gaussian mixture,
so its density, velocity and score are finite sums over the data points. The
posterior weights over data points are computed in log space so that they do
not underflow as ``beta_t -> 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp, log_ndtr

from .errors import DomainError
from .paths import (
    GaussianPath,
    TimeClamp,
    _col,
    _require_positive,
    cond_sample,
    cond_score,
    cond_vector_field,
)

FieldFunction = Callable[[np.ndarray, float], np.ndarray]
DensityFunction = Callable[[np.ndarray, float], np.ndarray]


@dataclass
class Dataset:
    """Weighted point cloud ``z_i`` in R^d with optional integer labels."""

    points: np.ndarray
    labels: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise DomainError("dataset needs a non-empty (N, d) array of points")
        self.points = pts
        n = pts.shape[0]
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (n,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise DomainError("weights must be a non-negative probability vector")
            self.weights = w
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise DomainError("labels must have one entry per point")
            if labels.size and (labels.min() < 0 or not np.issubdtype(labels.dtype, np.integer)):
                raise DomainError("labels must be non-negative integers")
            self.labels = labels.astype(np.int64)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1

    def __len__(self) -> int:
        return self.points.shape[0]

    def with_label(self, label: int) -> "Dataset":
        """The class-conditional sub-dataset, renormalized."""
        if self.labels is None:
            raise DomainError("dataset has no labels")
        mask = self.labels == label
        if not mask.any():
            raise DomainError(f"no points with label {label}")
        w = self.weights[mask]
        return Dataset(self.points[mask], self.labels[mask], w / w.sum())


def _posterior(path: GaussianPath, data: Dataset, x, t):
    """Log-weights ``log w_i N(x; a z_i, b^2 I)`` of shape (n, N) and coefficients."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    coefs = path.coefficients(t)
    alpha, beta = coefs.alpha, coefs.beta
    _require_positive(beta, "beta", t)
    a = np.asarray(alpha, dtype=np.float64).reshape(-1, 1, 1) if np.ndim(alpha) else alpha
    b = np.asarray(beta, dtype=np.float64).reshape(-1, 1) if np.ndim(beta) else beta
    means = a * data.points[None, :, :]  # (n or 1, N, d)
    sq = np.sum((x[:, None, :] - means) ** 2, axis=-1)  # (n, N)
    d = data.dim
    with np.errstate(divide="ignore"):
        logw = np.log(data.weights)[None, :]
    log_terms = logw - 0.5 * sq / b**2 - d * np.log(b) - 0.5 * d * np.log(2.0 * np.pi)
    return x, log_terms, coefs


def log_marginal_density(path: GaussianPath, data: Dataset, x, t) -> np.ndarray:
    squeeze = np.ndim(x) == 1
    _, log_terms, _ = _posterior(path, data, x, t)
    out = logsumexp(log_terms, axis=1)
    return out[0] if squeeze else out


def marginal_density(path: GaussianPath, data: Dataset, x, t) -> np.ndarray:
    """Mixture density ``sum_i w_i N(x; alpha_t z_i, beta_t^2 I)``."""
    return np.exp(log_marginal_density(path, data, x, t))


def posterior_mean(path: GaussianPath, data: Dataset, x, t) -> np.ndarray:
    """``E[z | x_t = x]`` under the finite data distribution."""
    squeeze = np.ndim(x) == 1
    _, log_terms, _ = _posterior(path, data, x, t)
    post = np.exp(log_terms - logsumexp(log_terms, axis=1, keepdims=True))
    mean = post @ data.points
    return mean[0] if squeeze else mean


def marginal_vector_field(path: GaussianPath, data: Dataset, x, t) -> np.ndarray:
    # The conditional field is affine in z, so averaging over the posterior
    # reduces to evaluating it at the posterior mean.
    return cond_vector_field(path, x, posterior_mean(path, data, x, t), t)


def marginal_score(path: GaussianPath, data: Dataset, x, t) -> np.ndarray:
    return cond_score(path, x, posterior_mean(path, data, x, t), t)


# --------------------------------------------------------------------------
# Finite-difference residuals of the continuity and Fokker-Planck equations


@dataclass
class ResidualReport:
    max_abs_residual: float
    residuals: np.ndarray
    probes_x: np.ndarray
    probes_t: np.ndarray
    fd_step_space: float
    fd_step_time: float

    @property
    def grid(self) -> list[tuple[np.ndarray, float]]:
        return list(zip(self.probes_x, self.probes_t))


def _space_steps(x: np.ndarray, scale: float) -> np.ndarray:
    return scale * (1.0 + np.abs(x))


def _check_stencil(t, k: float, clamp: TimeClamp):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t - k < clamp.low) or np.any(t + k > clamp.high):
        raise DomainError(
            f"time stencil [t-{k}, t+{k}] leaves [{clamp.low}, {clamp.high}]"
        )


def _flux_divergence(density, field, x, t, h):
    """Central-difference divergence of ``p * u`` at each row of ``x``."""
    div = np.zeros(x.shape[0])
    for j in range(x.shape[1]):
        e = np.zeros_like(x)
        e[:, j] = h[:, j]
        xp, xm = x + e, x - e
        fp = density(xp, t) * field(xp, t)[:, j]
        fm = density(xm, t) * field(xm, t)[:, j]
        div += (fp - fm) / (2.0 * h[:, j])
    return div


def continuity_residual(
    density: DensityFunction,
    field: FieldFunction,
    x,
    t,
    steps: tuple[float, float] = (1e-4, 1e-4),
    clamp: TimeClamp = TimeClamp(),
) -> np.ndarray:
    """``d/dt p + div(p u)`` by central differences at each probe ``(x, t)``.

    ``steps = (space_scale, time_step)``; the spatial step for coordinate ``j``
    is ``space_scale * (1 + |x_j|)``. ``t`` may be a scalar or one time per row.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    space_scale, k = steps
    _check_stencil(t, k, clamp)
    t = np.asarray(t, dtype=np.float64)
    h = _space_steps(x, space_scale)
    dp_dt = (density(x, t + k) - density(x, t - k)) / (2.0 * k)
    return dp_dt + _flux_divergence(density, field, x, t, h)


def laplacian(density: DensityFunction, x, t, space_scale: float = 1e-4) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    h = _space_steps(x, space_scale)
    p0 = density(x, t)
    lap = np.zeros(x.shape[0])
    for j in range(x.shape[1]):
        e = np.zeros_like(x)
        e[:, j] = h[:, j]
        lap += (density(x + e, t) - 2.0 * p0 + density(x - e, t)) / h[:, j] ** 2
    return lap


def fokker_planck_residual(
    density: DensityFunction,
    field: FieldFunction,
    sigma: Callable[[float], float],
    x,
    t,
    steps: tuple[float, float] = (1e-4, 1e-4),
    clamp: TimeClamp = TimeClamp(),
) -> np.ndarray:
    """``d/dt p + div(p u) - (sigma_t^2 / 2) lap p`` at each probe."""
    res = continuity_residual(density, field, x, t, steps, clamp)
    sig = np.asarray(sigma(t), dtype=np.float64)
    if np.all(sig == 0.0):
        return res
    return res - 0.5 * sig**2 * laplacian(density, x, t, steps[0])


def sde_extension_field(path: GaussianPath, data: Dataset, sigma) -> FieldFunction:
    """Drift ``u_t + (sigma_t^2/2) grad log p_t`` that keeps the marginal path."""

    def drift(x, t):
        sig = np.asarray(sigma(t), dtype=np.float64)
        u = marginal_vector_field(path, data, x, t)
        return u + _col(0.5 * sig**2, u) * marginal_score(path, data, x, t)

    return drift


def mass_weighted_probes(
    path: GaussianPath,
    data: Dataset,
    n: int,
    rng: np.random.Generator,
    t_range: tuple[float, float] = (0.05, 0.9),
) -> tuple[np.ndarray, np.ndarray]:
    """Probe points ``(x, t)`` with ``t`` uniform and ``x ~ p_t``."""
    t = rng.uniform(t_range[0], t_range[1], size=n)
    idx = rng.choice(len(data), size=n, p=data.weights)
    x = cond_sample(path, data.points[idx], t, rng)
    return x, t


def residual_report(residuals, probes_x, probes_t, steps) -> ResidualReport:
    residuals = np.asarray(residuals, dtype=np.float64)
    if not np.all(np.isfinite(residuals)):
        raise DomainError("non-finite residual")
    return ResidualReport(
        max_abs_residual=float(np.max(np.abs(residuals))),
        residuals=residuals,
        probes_x=np.asarray(probes_x),
        probes_t=np.asarray(probes_t),
        fd_step_space=steps[0],
        fd_step_time=steps[1],
    )


# --------------------------------------------------------------------------
# Quadrature probe of L_FM - L_CFM


@dataclass(frozen=True)
class LossGap:
    gap_a: float
    gap_b: float
    fm_a: float
    cfm_a: float
    fm_b: float
    cfm_b: float


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.zeros_like(nodes)
    dx = np.diff(nodes)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def _losses_1d(path, data, fields, xs, wx, ts, wt):
    """Quadrature of L_FM and L_CFM for each field, as expectations over t."""
    fm = np.zeros(len(fields))
    cfm = np.zeros(len(fields))
    xcol = xs[:, None]
    for t, w_t in zip(ts, wt):
        _, log_terms, _ = _posterior(path, data, xcol, float(t))  # (nx, N)
        comp = np.exp(log_terms)  # w_i N_i(x)
        p = comp.sum(axis=1)
        u_marg = marginal_vector_field(path, data, xcol, float(t))[:, 0]
        # (nx, N): conditional field for each data point
        u_cond = np.stack(
            [cond_vector_field(path, xcol, z, float(t))[:, 0] for z in data.points], axis=1
        )
        for k, f in enumerate(fields):
            v = np.asarray(f(xcol, float(t)), dtype=np.float64).reshape(-1)
            fm[k] += w_t * np.sum(wx * p * (v - u_marg) ** 2)
            cfm[k] += w_t * np.sum(wx[:, None] * comp * (v[:, None] - u_cond) ** 2)
    return fm, cfm


def loss_gap_probe(
    path: GaussianPath,
    data: Dataset,
    field_a: FieldFunction,
    field_b: FieldFunction,
    x_range: tuple[float, float] = (-10.0, 10.0),
    n_x: int = 2001,
    n_t: int = 21,
    clamp: TimeClamp = TimeClamp(0.01, 0.01),
) -> LossGap:
    """Deterministic tensor-product quadrature of ``L_FM - L_CFM`` for two fields.

    Only defined for ``d = 1``. ``t`` runs over ``n_t`` trapezoid nodes on the
    clamp interval and the result is normalized to an expectation over a
    uniform ``t``.
    """
    if data.dim != 1 or path.dim != 1:
        raise DomainError("loss_gap_probe is only defined in one dimension")
    lo, hi = x_range
    ts = np.linspace(clamp.low, clamp.high, n_t)
    # every mixture component must sit well inside the x range
    for t in ts:
        a, b, _, _ = path.coefficients(float(t))
        means = a * data.points[:, 0]
        tail = np.exp(log_ndtr((lo - means) / b)) + np.exp(log_ndtr((means - hi) / b))
        if np.any(tail > 1e-8):
            raise DomainError(f"quadrature range {x_range} misses mass {tail.max():.2e} at t={t}")
    xs = np.linspace(lo, hi, n_x)
    wx = _trapezoid_weights(xs)
    wt = _trapezoid_weights(ts) / (clamp.high - clamp.low)
    fm, cfm = _losses_1d(path, data, [field_a, field_b], xs, wx, ts, wt)
    return LossGap(
        gap_a=float(fm[0] - cfm[0]),
        gap_b=float(fm[1] - cfm[1]),
        fm_a=float(fm[0]),
        cfm_a=float(cfm[0]),
        fm_b=float(fm[1]),
        cfm_b=float(cfm[1]),
    )
