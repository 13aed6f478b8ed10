"""Numerical validation suites shared by the CLI and the test-suite.

Each suite returns a list of :class:`Check` rows ``(check, probe, value,
threshold, passed)``; a check passes when ``value < threshold`` unless it
carries its own acceptance interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import TimeGrid, simulate_euler, simulate_heun, fitted_order
from .errors import DomainError
from .net import MlpParams, MlpSpec, forward, grad_check, mlp_init
from .oracle import (
    Dataset,
    continuity_residual,
    fokker_planck_residual,
    loss_gap_probe,
    marginal_density,
    marginal_vector_field,
    mass_weighted_probes,
    sde_extension_field,
)
from .paths import (
    SCHEDULE_KINDS,
    GaussianPath,
    NoiseSchedule,
    cond_score,
    cond_vector_field,
    gaussian_log_density,
    score_to_velocity,
    velocity_to_score,
)
from .rng import make_rng

SUITES = ("gradcheck", "continuity", "fokker-planck", "conversion", "loss-gap", "integrator-order")

RESIDUAL_DATA = Dataset(np.array([[-1.0], [0.5], [2.0]]))
RESIDUAL_TOL = 1e-4
N_PROBES = 100
FD_STEPS = (1e-4, 1e-4)
# The quartering check starts from steps large enough that truncation error
# dominates round-off at both resolutions.
COARSE_STEPS = (4e-3, 4e-3)


@dataclass(frozen=True)
class Check:
    check: str
    probe: str
    value: float
    threshold: float
    passed: bool


def _below(check: str, probe: str, value: float, threshold: float) -> Check:
    value = float(value)
    return Check(check, probe, value, threshold, bool(np.isfinite(value) and value < threshold))


# --------------------------------------------------------------------------


def gradcheck_suite(
    params: MlpParams | None = None,
    n_probes: int = 5,
    seed: int = 0,
    hidden: tuple[int, ...] = (32, 32, 32),
    tol: float = 1e-5,
) -> list[Check]:
    """Analytic gradients against fourth-order central differences.

    With ``params`` the given network is probed; otherwise fresh random
    networks cover both activations with and without labels.
    """
    rows = []
    if params is not None:
        variants = [("checkpoint", params.spec, params)]
    else:
        variants = []
        for act in ("silu", "tanh"):
            for n_classes in (0, 3):
                spec = MlpSpec(dim=2, hidden=hidden, n_classes=n_classes, activation=act)
                variants.append((f"{act},K={n_classes}", spec, None))
    for v, (name, spec, fixed) in enumerate(variants):
        for k in range(n_probes):
            rng = make_rng(seed, 10 + v, k)
            p = fixed if fixed is not None else mlp_init(spec, seed + 1000 * v + k)
            n = 4
            x = rng.standard_normal((n, spec.dim))
            t = rng.random(n)
            y = None
            if spec.conditional:
                # always include the null row
                y = rng.integers(-1, spec.n_classes, size=n)
                y[0] = -1
            target = rng.standard_normal((n, spec.dim))
            rep = grad_check(p, x, t, y, target)
            rows.append(_below("gradcheck", f"{name}/probe={k}", rep.max_rel_error, tol))
    return rows


def _conditional_pair(path: GaussianPath, z: np.ndarray):
    def density(x, t):
        b = path.coefficients(t).beta
        return np.exp(gaussian_log_density(x, path.coefficients(t).alpha * z, b))

    def field(x, t):
        return cond_vector_field(path, x, z, t)

    return density, field


def _marginal_pair(path: GaussianPath, data: Dataset):
    return (
        lambda x, t: marginal_density(path, data, x, t),
        lambda x, t: marginal_vector_field(path, data, x, t),
    )


def continuity_suite(seed: int = 0, data: Dataset = RESIDUAL_DATA) -> list[Check]:
    """Continuity residuals at mass-weighted probes, and their second-order decay."""
    rows = []
    for kind in SCHEDULE_KINDS:
        path = GaussianPath(NoiseSchedule(kind), data.dim)
        x, t = mass_weighted_probes(path, data, N_PROBES, make_rng(seed, 20))
        idx = make_rng(seed, 21).integers(len(data), size=N_PROBES)
        cond = np.empty(N_PROBES)
        for i in range(N_PROBES):
            dens, fld = _conditional_pair(path, data.points[idx[i]])
            cond[i] = continuity_residual(dens, fld, x[i : i + 1], float(t[i]), FD_STEPS)[0]
        rows.append(_below("continuity", f"{kind}/conditional", np.max(np.abs(cond)), RESIDUAL_TOL))
        dens, fld = _marginal_pair(path, data)
        marg = continuity_residual(dens, fld, x, t, FD_STEPS)
        rows.append(_below("continuity", f"{kind}/marginal", np.max(np.abs(marg)), RESIDUAL_TOL))
        coarse = continuity_residual(dens, fld, x, t, COARSE_STEPS)
        fine = continuity_residual(dens, fld, x, t, tuple(s / 4 for s in COARSE_STEPS))
        ratio = float(np.max(np.abs(coarse)) / np.max(np.abs(fine)))
        rows.append(Check("continuity", f"{kind}/quartering-ratio", ratio, 16.0, 8.0 <= ratio <= 32.0))
    return rows


def fokker_planck_suite(
    seed: int = 0, data: Dataset = RESIDUAL_DATA, sigmas=(0.0, 0.5, 1.0)
) -> list[Check]:
    rows = []
    for kind in SCHEDULE_KINDS:
        path = GaussianPath(NoiseSchedule(kind), data.dim)
        x, t = mass_weighted_probes(path, data, N_PROBES, make_rng(seed, 20))
        dens, _ = _marginal_pair(path, data)
        for s in sigmas:
            sigma = lambda _t, s=s: s  # noqa: E731
            field = sde_extension_field(path, data, sigma)
            res = fokker_planck_residual(dens, field, sigma, x, t, FD_STEPS)
            rows.append(
                _below("fokker-planck", f"{kind}/sigma={s}", np.max(np.abs(res)), RESIDUAL_TOL)
            )
    return rows


def conversion_suite(seed: int = 0, tol: float = 1e-12) -> list[Check]:
    """Score/velocity conversion identities on a 19 x 61 grid of ``(t, x)``.

    Errors are measured relative to ``max(1, |reference|)`` so that the
    large score values near ``t = 0.95`` are held to the same number of
    significant digits as the rest of the grid.
    """
    rows = []
    ts = np.linspace(0.05, 0.95, 19)
    xs = np.linspace(-3.0, 3.0, 61)[:, None]
    zs = make_rng(seed, 30).uniform(-3.0, 3.0, size=(61, 1))
    for kind in SCHEDULE_KINDS:
        path = GaussianPath(NoiseSchedule(kind), 1)
        worst_u = worst_s = worst_rt = 0.0
        for t in ts:
            u = cond_vector_field(path, xs, zs, t)
            s = cond_score(path, xs, zs, t)
            u_conv = score_to_velocity(path, xs, t, s)
            s_conv = velocity_to_score(path, xs, t, u)
            s_rt = velocity_to_score(path, xs, t, score_to_velocity(path, xs, t, s))
            worst_u = max(worst_u, np.max(np.abs(u_conv - u) / np.maximum(1.0, np.abs(u))))
            worst_s = max(worst_s, np.max(np.abs(s_conv - s) / np.maximum(1.0, np.abs(s))))
            worst_rt = max(worst_rt, np.max(np.abs(s_rt - s) / np.maximum(1.0, np.abs(s))))
        rows.append(_below("conversion", f"{kind}/score-to-velocity", worst_u, tol))
        rows.append(_below("conversion", f"{kind}/velocity-to-score", worst_s, tol))
        rows.append(_below("conversion", f"{kind}/round-trip", worst_rt, tol))
    return rows


def score_fd_suite(seed: int = 0, tol: float = 1e-6) -> list[Check]:
    """Conditional score against a central difference of the log density."""
    rows = []
    rng = make_rng(seed, 31)
    for kind in SCHEDULE_KINDS:
        path = GaussianPath(NoiseSchedule(kind), 2)
        worst = 0.0
        for _ in range(50):
            t = float(rng.uniform(0.05, 0.95))
            z = rng.uniform(-3, 3, size=2)
            x = rng.uniform(-3, 3, size=2)
            a, b, _, _ = path.coefficients(t)
            s = cond_score(path, x, z, t)
            for j in range(2):
                h = 1e-5 * (1.0 + abs(x[j]))
                e = np.zeros(2)
                e[j] = h
                fd = (
                    gaussian_log_density(x + e, a * z, b) - gaussian_log_density(x - e, a * z, b)
                ) / (2 * h)
                worst = max(worst, abs(fd - s[j]) / max(1.0, abs(s[j])))
        rows.append(_below("score-fd", kind, worst, tol))
    return rows


def _random_field(seed: int):
    params = mlp_init(MlpSpec(dim=1), seed)
    return lambda x, t: forward(params, x, t)


def loss_gap_suite(seed: int = 0, n_nets: int = 3, tol: float = 1e-4) -> list[Check]:
    """``L_FM - L_CFM`` computed by quadrature is the same for unrelated fields."""
    data = Dataset(np.array([[-1.0], [1.0]]))
    path = GaussianPath(NoiseSchedule("condot"), 1)
    exact = lambda x, t: marginal_vector_field(path, data, x, t)  # noqa: E731
    nets = [_random_field(seed + k) for k in range(n_nets)]
    gaps = [loss_gap_probe(path, data, exact, nets[0])]
    gaps += [loss_gap_probe(path, data, exact, f) for f in nets[1:]]
    ref = gaps[0].gap_a
    rows = [_below("loss-gap", "exact-field/fm", abs(gaps[0].fm_a), tol)]
    for k, g in enumerate(gaps):
        rows.append(_below("loss-gap", f"net{k}-vs-exact", abs(g.gap_b - ref), tol))
    for i in range(n_nets):
        for j in range(i + 1, n_nets):
            rows.append(
                _below("loss-gap", f"net{i}-vs-net{j}", abs(gaps[i].gap_b - gaps[j].gap_b), tol)
            )
    return rows


INTEGRATOR_STEPS = (0.1, 0.05, 0.025, 0.0125)


def integrator_errors(method, step_sizes=INTEGRATOR_STEPS) -> np.ndarray:
    """Terminal error at ``t = 1`` for ``u = -x``, ``x0 = 1`` against ``exp(-1)``."""
    errors = []
    for h in step_sizes:
        grid = TimeGrid(int(round(1.0 / h)))
        traj = method(lambda x, t: -x, np.array([1.0]), grid, record="terminal")
        errors.append(abs(traj.terminal[0] - np.exp(-1.0)))
    return np.array(errors)


def integrator_order_suite() -> list[Check]:
    rows = []
    for name, method, (lo, hi) in (
        ("euler", simulate_euler, (0.8, 1.2)),
        ("heun", simulate_heun, (1.7, 2.3)),
    ):
        order = fitted_order(INTEGRATOR_STEPS, integrator_errors(method))
        rows.append(Check("integrator-order", name, order, hi, lo <= order <= hi))
    return rows


def run_suite(name: str, params: MlpParams | None = None, seed: int = 0) -> list[Check]:
    if name == "gradcheck":
        return gradcheck_suite(params, seed=seed)
    if name == "continuity":
        return continuity_suite(seed)
    if name == "fokker-planck":
        return fokker_planck_suite(seed)
    if name == "conversion":
        return conversion_suite(seed) + score_fd_suite(seed)
    if name == "loss-gap":
        return loss_gap_suite(seed)
    if name == "integrator-order":
        return integrator_order_suite()
    raise DomainError(f"unknown suite {name!r}; expected one of {SUITES}")
