import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from flowlab.errors import DomainError
from flowlab.net import (
    MlpParams,
    MlpSpec,
    NULL_LABEL,
    forward,
    grad_check,
    input_vjp,
    mlp_init,
    mse_loss,
    mse_loss_and_grads,
    time_features,
)
from flowlab.rng import make_rng

LD = np.longdouble


def _batch(spec, n=4, seed=5):
    rng = make_rng(seed)
    x = rng.standard_normal((n, spec.dim))
    t = rng.random(n)
    y = rng.integers(0, spec.n_classes, n) if spec.conditional else None
    if y is not None:
        y[0] = NULL_LABEL
    return x, t, y, rng.standard_normal((n, spec.dim))


def test_spec_validation():
    with pytest.raises(DomainError):
        MlpSpec(dim=2, hidden=(0,))
    with pytest.raises(DomainError):
        MlpSpec(dim=2, n_time_features=3)
    with pytest.raises(DomainError):
        MlpSpec(dim=2, activation="relu")


def test_param_count():
    spec = MlpSpec(dim=2, hidden=(64, 64, 64), n_classes=3)
    # (2+8+8)*64 + 64 + 2*(64*64+64) + 64*2 + 2 + 4*8
    assert spec.n_params() == 18 * 64 + 64 + 2 * (64 * 64 + 64) + 64 * 2 + 2 + 4 * 8
    p = mlp_init(spec, 0)
    assert sum(a.size for _, a in p.items()) == spec.n_params()


def test_init_is_deterministic_with_zero_biases():
    spec = MlpSpec(dim=2, n_classes=2)
    a, b = mlp_init(spec, 3), mlp_init(spec, 3)
    for name, arr in a.items():
        assert_array_equal(arr, b.arrays[name])
        if name.endswith("bias"):
            assert not arr.any()
    assert not np.array_equal(a.arrays["dense0.weight"], mlp_init(spec, 4).arrays["dense0.weight"])


def test_init_weight_scale():
    spec = MlpSpec(dim=2, hidden=(512, 512))
    w = mlp_init(spec, 0).arrays["dense1.weight"]
    assert w.std() == pytest.approx(1 / np.sqrt(512), rel=0.02)


def test_time_features():
    f = time_features(0.25, 4, 2)
    assert f.shape == (2, 4)
    assert_allclose(f[0], [np.sin(np.pi / 4), np.cos(np.pi / 4), 1.0, 0.0], atol=1e-15)


def test_zero_weights_give_zero_output():
    spec = MlpSpec(dim=3, n_classes=2)
    p = mlp_init(spec, 0).zeros_like()
    x, t, y, _ = _batch(spec)
    assert_array_equal(forward(p, x, t, y), np.zeros_like(x))


def test_forward_shapes():
    spec = MlpSpec(dim=2)
    p = mlp_init(spec, 0)
    assert forward(p, np.zeros((7, 2)), 0.5).shape == (7, 2)
    assert forward(p, np.zeros(2), 0.5).shape == (2,)


def test_label_handling():
    spec = MlpSpec(dim=2, n_classes=3)
    p = mlp_init(spec, 0)
    x = np.zeros((2, 2))
    with pytest.raises(DomainError):
        forward(p, x, 0.5, np.array([0, 3]))
    # None means the null label
    assert_array_equal(forward(p, x, 0.5, None), forward(p, x, 0.5, np.array([NULL_LABEL] * 2)))
    assert not np.allclose(forward(p, x, 0.5, np.array([0, 0])), forward(p, x, 0.5, None))


@pytest.mark.parametrize("activation", ["silu", "tanh"])
def test_input_vjp_matches_finite_differences(activation):
    spec = MlpSpec(dim=3, hidden=(16, 16), n_classes=2, activation=activation)
    p = mlp_init(spec, 1)
    x, t, y, v = _batch(spec, n=5)
    vjp = input_vjp(p, x, t, y, v)
    h = 1e-5
    for j in range(spec.dim):
        e = np.zeros_like(x)
        e[:, j] = h
        fd = np.sum(v * (forward(p, x + e, t, y) - forward(p, x - e, t, y)), axis=1) / (2 * h)
        assert_allclose(vjp[:, j], fd, atol=1e-6)


def test_loss_examples():
    spec = MlpSpec(dim=2)
    p = mlp_init(spec, 0).zeros_like()
    x = np.zeros((3, 2))
    assert mse_loss(p, x, 0.5, None, np.ones((3, 2))) == 2.0
    target = np.array([[3.0, 4.0], [0.0, 0.0]])
    assert mse_loss(p, x[:2], 0.5, None, target) == 12.5


def test_grads_vanish_at_target():
    spec = MlpSpec(dim=2, n_classes=2)
    p = mlp_init(spec, 2)
    x, t, y, _ = _batch(spec)
    loss, grads = mse_loss_and_grads(p, x, t, y, forward(p, x, t, y))
    assert loss == 0.0
    for _, g in grads.items():
        assert not g.any()


def test_loss_rejects_bad_batches():
    spec = MlpSpec(dim=2)
    p = mlp_init(spec, 0)
    with pytest.raises(DomainError):
        mse_loss(p, np.zeros((0, 2)), 0.5, None, np.zeros((0, 2)))
    with pytest.raises(DomainError):
        mse_loss(p, np.zeros((1, 2)), 0.5, None, np.array([[np.nan, 0.0]]))


@pytest.mark.parametrize("activation", ["silu", "tanh"])
@pytest.mark.parametrize("n_classes", [0, 3])
def test_grad_check_small_nets(activation, n_classes):
    spec = MlpSpec(dim=2, hidden=(8, 8), n_classes=n_classes, activation=activation)
    p = mlp_init(spec, 3)
    report = grad_check(p, *_batch(spec))
    assert report.n_checked == spec.n_params()
    assert report.max_rel_error < 1e-6


def test_grad_check_detects_wrong_gradients():
    spec = MlpSpec(dim=2, hidden=(8,))
    p = mlp_init(spec, 3)
    x, t, y, target = _batch(spec)
    report = grad_check(p, x, t, y, target, grads=p.zeros_like())
    assert report.max_rel_error == pytest.approx(1.0, abs=1e-3)


def test_grad_check_all_zero_params():
    spec = MlpSpec(dim=2, hidden=(4, 4))
    p = mlp_init(spec, 0).zeros_like()
    x, t, y, target = _batch(spec)
    assert grad_check(p, x, t, y, target).max_rel_error < 1e-8


def _ld_loss(arrays, spec, x, t, y, target):
    """Extended-precision forward pass written independently of the library."""
    n = x.shape[0]
    freqs = np.pi * LD(2) ** np.arange(spec.n_time_features // 2)
    ang = t.astype(LD)[:, None] * freqs
    feats = np.empty((n, spec.n_time_features), dtype=LD)
    feats[:, 0::2], feats[:, 1::2] = np.sin(ang), np.cos(ang)
    parts = [x.astype(LD), feats]
    if spec.n_classes:
        parts.append(arrays["embedding"][np.where(y < 0, spec.n_classes, y)])
    h = np.concatenate(parts, axis=1)
    depth = len(spec.hidden)
    for i in range(depth + 1):
        z = h @ arrays[f"dense{i}.weight"] + arrays[f"dense{i}.bias"]
        if i < depth:
            h = z / (1 + np.exp(-z)) if spec.activation == "silu" else np.tanh(z)
        else:
            h = z
    d = h - target.astype(LD)
    return np.mean(np.sum(d * d, axis=1))


@pytest.mark.skipif(np.finfo(LD).eps > 1e-18, reason="needs 80-bit long double")
def test_two_point_difference_at_small_step_in_extended_precision():
    # default-size conditional net, step 1e-6 (1 + |p|), plain central difference
    spec = MlpSpec(dim=2, n_classes=3)
    p = mlp_init(spec, 1)
    x, t, y, target = _batch(spec)
    _, grads = mse_loss_and_grads(p, x, t, y, target)
    arrays = {k: v.astype(LD) for k, v in p.items()}
    worst = 0.0
    for name, arr in arrays.items():
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            h = LD(1e-6) * (1 + abs(orig))
            arr[idx] = orig + h
            up = _ld_loss(arrays, spec, x, t, y, target)
            arr[idx] = orig - h
            down = _ld_loss(arrays, spec, x, t, y, target)
            arr[idx] = orig
            fd = float((up - down) / (2 * h))
            worst = max(worst, abs(grads.arrays[name][idx] - fd) / (abs(fd) + 1e-8))
    assert worst < 1e-6


def test_params_validate_shapes():
    spec = MlpSpec(dim=2, hidden=(4,))
    arrays = dict(mlp_init(spec, 0).items())
    arrays["dense0.bias"] = np.zeros(5)
    with pytest.raises(DomainError):
        MlpParams(spec, arrays)
