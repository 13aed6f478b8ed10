"""Feed-forward field network ``u(x, t, y)`` with an explicit reverse pass.

The input to the first layer is the concatenation
``[x, sin(2^j pi t), cos(2^j pi t) (j = 0..F/2-1), embed(y)]``.
Class labels index rows ``0..K-1`` of a learned embedding table; row ``K`` is
the null label, written ``NULL_LABEL`` (-1) in label arrays. Unconditional
networks (``n_classes == 0``) carry no embedding table.

Weights are stored as ``(fan_in, fan_out)`` matrices and a layer computes
``h @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import expit

from .errors import DomainError
from .rng import make_rng

NULL_LABEL = -1
ACTIVATIONS = ("silu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    dim: int
    hidden: tuple[int, ...] = (64, 64, 64)
    n_time_features: int = 8
    n_classes: int = 0
    embed_dim: int = 8
    activation: str = "silu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.dim < 1 or not self.hidden or min(self.hidden) < 1:
            raise DomainError("all layer widths must be positive")
        if self.n_time_features < 0 or self.n_time_features % 2:
            raise DomainError("n_time_features must be a non-negative even integer")
        if self.n_classes < 0:
            raise DomainError("n_classes must be >= 0")
        if self.n_classes and self.embed_dim < 1:
            raise DomainError("embed_dim must be positive for a conditional net")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"activation must be one of {ACTIVATIONS}")

    @property
    def conditional(self) -> bool:
        return self.n_classes > 0

    @property
    def input_dim(self) -> int:
        extra = self.embed_dim if self.conditional else 0
        return self.dim + self.n_time_features + extra

    def layer_shapes(self) -> list[tuple[int, int]]:
        widths = [self.input_dim, *self.hidden, self.dim]
        return list(zip(widths[:-1], widths[1:]))

    def array_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for i, (fan_in, fan_out) in enumerate(self.layer_shapes()):
            shapes[f"dense{i}.weight"] = (fan_in, fan_out)
            shapes[f"dense{i}.bias"] = (fan_out,)
        if self.conditional:
            shapes["embedding"] = (self.n_classes + 1, self.embed_dim)
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.array_shapes().values())


@dataclass
class MlpParams:
    """Named parameter arrays; also used to hold gradients of the same shapes."""

    spec: MlpSpec
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.spec.array_shapes()
        if set(self.arrays) != set(shapes):
            raise DomainError(f"parameter names {sorted(self.arrays)} != {sorted(shapes)}")
        for name, shape in shapes.items():
            arr = np.asarray(self.arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise DomainError(f"{name} has shape {arr.shape}, expected {shape}")
            self.arrays[name] = arr

    @property
    def n_layers(self) -> int:
        return len(self.spec.layer_shapes())

    def layer(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.arrays[f"dense{i}.weight"], self.arrays[f"dense{i}.bias"]

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self.arrays.items())

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "MlpParams":
        return MlpParams(self.spec, {k: np.zeros_like(v) for k, v in self.arrays.items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


GradSet = MlpParams


def mlp_init(spec: MlpSpec, seed: int) -> MlpParams:
    """Gaussian weights with std ``1/sqrt(fan_in)``, zero biases, N(0, 1) embeddings."""
    rng = make_rng(seed, 0)
    arrays = {}
    for i, (fan_in, fan_out) in enumerate(spec.layer_shapes()):
        arrays[f"dense{i}.weight"] = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
        arrays[f"dense{i}.bias"] = np.zeros(fan_out)
    if spec.conditional:
        arrays["embedding"] = rng.standard_normal((spec.n_classes + 1, spec.embed_dim))
    return MlpParams(spec, arrays)


def time_features(t, n_features: int, n: int) -> np.ndarray:
    """``(sin(2^j pi t), cos(2^j pi t))`` pairs for ``j = 0..n_features/2 - 1``."""
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    freqs = np.pi * 2.0 ** np.arange(n_features // 2)
    angles = t[:, None] * freqs[None, :]
    out = np.empty((n, n_features))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def label_rows(spec: MlpSpec, y, n: int) -> np.ndarray | None:
    """Map labels (``None`` meaning null) to embedding rows; ``None`` if unconditional."""
    if not spec.conditional:
        if y is not None and np.any(np.asarray(y) != NULL_LABEL):
            raise DomainError("unconditional network cannot take class labels")
        return None
    if y is None:
        return np.full(n, spec.n_classes, dtype=np.int64)
    y = np.broadcast_to(np.asarray(y), (n,))
    if not np.issubdtype(y.dtype, np.integer):
        raise DomainError(f"labels must be integers, got {y.dtype}")
    bad = (y != NULL_LABEL) & ((y < 0) | (y >= spec.n_classes))
    if np.any(bad):
        raise DomainError(f"label {y[bad][0]} outside 0..{spec.n_classes - 1}")
    return np.where(y == NULL_LABEL, spec.n_classes, y).astype(np.int64)


def _activate(kind: str, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return the activation and its derivative at ``z``."""
    if kind == "silu":
        s = expit(z)
        return z * s, s * (1.0 + z * (1.0 - s))
    a = np.tanh(z)
    return a, 1.0 - a * a


@dataclass
class _Cache:
    inputs: list[np.ndarray]  # input to each dense layer
    slopes: list[np.ndarray]  # activation derivative after each hidden layer
    rows: np.ndarray | None
    squeeze: bool


def _forward(params: MlpParams, x, t, y) -> tuple[np.ndarray, _Cache]:
    spec = params.spec
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != spec.dim:
        raise DomainError(f"expected points of dimension {spec.dim}, got {x.shape[1]}")
    n = x.shape[0]
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise DomainError(f"time outside [0, 1]: {t}")
    rows = label_rows(spec, y, n)
    parts = [x, time_features(t_arr, spec.n_time_features, n)]
    if rows is not None:
        parts.append(params.arrays["embedding"][rows])
    h = np.concatenate(parts, axis=1)
    inputs, slopes = [], []
    last = params.n_layers - 1
    for i in range(params.n_layers):
        w, b = params.layer(i)
        inputs.append(h)
        z = h @ w + b
        if i < last:
            h, slope = _activate(spec.activation, z)
            slopes.append(slope)
        else:
            h = z
    return h, _Cache(inputs, slopes, rows, squeeze)


def forward(params: MlpParams, x, t, y=None) -> np.ndarray:
    """Network output for points ``x`` at time(s) ``t`` with label(s) ``y``."""
    out, cache = _forward(params, x, t, y)
    return out[0] if cache.squeeze else out


def backward(params: MlpParams, cache: _Cache, grad_out: np.ndarray) -> tuple[GradSet, np.ndarray]:
    """Reverse pass: gradients for every parameter and for the input points."""
    spec = params.spec
    grads = {}
    g = np.atleast_2d(grad_out)
    for i in reversed(range(params.n_layers)):
        w, _ = params.layer(i)
        grads[f"dense{i}.weight"] = cache.inputs[i].T @ g
        grads[f"dense{i}.bias"] = g.sum(axis=0)
        g = g @ w.T
        if i > 0:
            g = g * cache.slopes[i - 1]
    if spec.conditional:
        emb_grad = np.zeros_like(params.arrays["embedding"])
        start = spec.dim + spec.n_time_features
        np.add.at(emb_grad, cache.rows, g[:, start:])
        grads["embedding"] = emb_grad
    return MlpParams(spec, grads), g[:, : spec.dim]


def input_vjp(params: MlpParams, x, t, y, cotangent) -> np.ndarray:
    """Vector-Jacobian product ``cotangent^T d out / d x`` per batch row."""
    _, cache = _forward(params, x, t, y)
    _, gx = backward(params, cache, np.atleast_2d(cotangent))
    return gx[0] if cache.squeeze else gx


def _check_batch(x, target):
    target = np.asarray(target, dtype=np.float64)
    if np.atleast_2d(x).shape[0] == 0:
        raise DomainError("empty batch")
    if not np.all(np.isfinite(target)):
        raise DomainError("non-finite regression target")
    return target


def mse_loss(params: MlpParams, x, t, y, target) -> float:
    target = _check_batch(x, target)
    out, _ = _forward(params, x, t, y)
    diff = out - np.atleast_2d(target)
    return float(np.mean(np.sum(diff * diff, axis=1)))


def mse_loss_and_grads(params: MlpParams, x, t, y, target) -> tuple[float, GradSet]:
    """Mean over the batch of ``||u(x, t, y) - target||^2`` and its exact gradient."""
    target = _check_batch(x, target)
    out, cache = _forward(params, x, t, y)
    diff = out - np.atleast_2d(target)
    n = diff.shape[0]
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    grads, _ = backward(params, cache, (2.0 / n) * diff)
    return loss, grads


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple[int, ...]
    n_checked: int


# central-difference stencils: (offset multiple, weight) pairs for (f(x+mh) - f(x-mh))
_STENCILS = {
    2: ((1, 0.5),),
    4: ((1, 2.0 / 3.0), (2, -1.0 / 12.0)),
}


def grad_check(
    params: MlpParams,
    x,
    t,
    y,
    target,
    grads: GradSet | None = None,
    order: int = 4,
    step_scale: float | None = None,
) -> GradCheckReport:
    """Compare analytic gradients with central differences over every parameter.

    The error per entry is ``|analytic - fd| / (|fd| + 1e-8)``. The default
    fourth-order stencil with step ``1e-3 (1 + |p|)`` keeps round-off below
    the 1e-8 floor; ``order=2`` with ``step_scale=1e-6`` is the plain
    two-point difference. Pass ``grads`` to check a supplied gradient set.
    """
    if order not in _STENCILS:
        raise DomainError(f"stencil order must be one of {sorted(_STENCILS)}")
    if step_scale is None:
        step_scale = 1e-3 if order == 4 else 1e-6
    if grads is None:
        _, grads = mse_loss_and_grads(params, x, t, y, target)
    probe = params.copy()
    worst = (0.0, "", ())
    count = 0
    for name, arr in probe.items():
        g = grads.arrays[name]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            h = step_scale * (1.0 + abs(orig))
            fd = 0.0
            for m, c in _STENCILS[order]:
                arr[idx] = orig + m * h
                up = mse_loss(probe, x, t, y, target)
                arr[idx] = orig - m * h
                down = mse_loss(probe, x, t, y, target)
                fd += c * (up - down)
            arr[idx] = orig
            fd /= h
            err = abs(g[idx] - fd) / (abs(fd) + 1e-8)
            count += 1
            if err > worst[0] or not worst[1]:
                worst = (err, name, idx)
    return GradCheckReport(float(worst[0]), worst[1], tuple(int(i) for i in worst[2]), count)
