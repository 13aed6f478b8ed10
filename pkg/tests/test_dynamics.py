import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from flowlab.data_eval import energy_distance
from flowlab.dynamics import (
    DiffusionCoefficient,
    TimeGrid,
    Trajectory,
    brownian_path,
    fitted_order,
    simulate_em,
    simulate_euler,
    simulate_heun,
    simulate_langevin,
)
from flowlab.errors import DomainError, SimulationError
from flowlab.oracle import Dataset, marginal_density, marginal_score
from flowlab.paths import GaussianPath, NoiseSchedule
from flowlab.rng import make_rng


def decay(x, t):
    return -x


def test_time_grid():
    g = TimeGrid(4, 0.0, 2.0)
    assert g.h == 0.5
    assert_array_equal(g.times(), [0.0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(DomainError):
        TimeGrid(0)
    with pytest.raises(DomainError):
        TimeGrid(3, 1.0, 1.0)


def test_trajectory_invariants():
    with pytest.raises(DomainError):
        Trajectory([0.0, 0.0], [[1.0], [2.0]])
    with pytest.raises(SimulationError):
        Trajectory([0.0, 1.0], [[1.0], [np.inf]])


def test_diffusion_coefficient():
    assert DiffusionCoefficient.zero().kind == "zero"
    assert DiffusionCoefficient.constant(0.5)(0.3) == 0.5
    with pytest.raises(DomainError):
        DiffusionCoefficient(-1.0)


def test_brownian_starts_at_zero():
    traj = brownian_path(make_rng(0), TimeGrid(10), 3)
    assert_array_equal(traj.states[0], np.zeros(3))
    assert traj.states.shape == (11, 3)


def test_brownian_increments():
    traj = brownian_path(make_rng(1), TimeGrid(3, 0.0, 0.03), 1, n_paths=100_000)
    inc = np.diff(traj.states[:, :, 0], axis=0)
    assert 0.0098 <= inc[0].var() <= 0.0102
    assert abs(np.corrcoef(inc[0], inc[1])[0, 1]) < 0.01


def test_euler_examples():
    x0 = np.array([1.0])
    assert_array_equal(simulate_euler(lambda x, t: 0 * x, x0, TimeGrid(5)).states, np.ones((6, 1)))
    assert simulate_euler(decay, x0, TimeGrid(2)).terminal[0] == 0.25
    assert simulate_euler(decay, x0, TimeGrid(10_000)).terminal[0] == pytest.approx(np.exp(-1), abs=1e-4)


def test_heun_examples():
    x0 = np.array([1.0])
    assert simulate_heun(decay, x0, TimeGrid(1)).terminal[0] == 0.5
    assert_array_equal(simulate_heun(lambda x, t: 0 * x, x0, TimeGrid(3)).terminal, x0)


def _terminal_errors(method, hs):
    return np.array(
        [abs(method(decay, np.array([1.0]), TimeGrid(round(1 / h)), "terminal").terminal[0] - np.exp(-1))
         for h in hs]
    )


def test_heun_error_quarters_when_h_halves():
    errors = _terminal_errors(simulate_heun, (0.1, 0.05, 0.025))
    ratios = errors[:-1] / errors[1:]
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_fitted_orders():
    hs = (0.1, 0.05, 0.025, 0.0125)
    assert 0.8 <= fitted_order(hs, _terminal_errors(simulate_euler, hs)) <= 1.2
    assert 1.7 <= fitted_order(hs, _terminal_errors(simulate_heun, hs)) <= 2.3
    assert fitted_order([1.0, 0.5], [4.0, 1.0]) == pytest.approx(2.0)


def test_record_modes():
    traj = simulate_euler(decay, np.ones((4, 2)), TimeGrid(8), record="terminal")
    assert traj.states.shape == (1, 4, 2) and traj.times[0] == 1.0
    with pytest.raises(DomainError):
        simulate_euler(decay, np.ones(2), TimeGrid(8), record="some")


def test_non_finite_field_raises_with_location():
    def bad(x, t):
        return np.full_like(x, np.nan) if t > 0.4 else x

    with pytest.raises(SimulationError) as info:
        simulate_euler(bad, np.ones(2), TimeGrid(10))
    assert info.value.t == pytest.approx(0.5)
    assert info.value.x is not None


def test_em_zero_sigma_is_euler_bitwise():
    field = lambda x, t: np.sin(3 * x) - t * x  # noqa: E731
    x0 = make_rng(2).standard_normal((50, 2))
    grid = TimeGrid(37)
    rng = make_rng(3)
    em = simulate_em(field, DiffusionCoefficient.zero(), x0, grid, rng)
    eu = simulate_euler(field, x0, grid)
    assert np.array_equal(em.states, eu.states)
    # no random numbers were consumed
    assert rng.random() == make_rng(3).random()


def test_em_reproducible():
    sigma = DiffusionCoefficient.constant(0.7)
    a = simulate_em(decay, sigma, np.zeros((10, 2)), TimeGrid(20), make_rng(5))
    b = simulate_em(decay, sigma, np.zeros((10, 2)), TimeGrid(20), make_rng(5))
    assert np.array_equal(a.states, b.states)


def test_em_pure_noise_is_brownian():
    grid = TimeGrid(3, 0.0, 0.03)
    traj = simulate_em(lambda x, t: 0 * x, DiffusionCoefficient(1.0), np.zeros((100_000, 1)), grid, make_rng(6))
    inc = np.diff(traj.states[:, :, 0], axis=0)
    assert_allclose(inc.var(axis=1), 0.01, rtol=0.02)
    assert_allclose(traj.terminal.var(), 0.03, rtol=0.02)


def test_ou_stationary_variance():
    theta, sigma = 0.25, 1.0
    traj = simulate_em(
        lambda x, t: -theta * x,
        DiffusionCoefficient(sigma),
        np.zeros((10_000, 1)),
        TimeGrid(2000, 0.0, 20.0),
        make_rng(7),
        record="terminal",
    )
    assert traj.terminal.var() == pytest.approx(sigma**2 / (2 * theta), rel=0.05)


def test_langevin_standard_normal():
    traj = simulate_langevin(
        lambda x, t: -x, 1.0, np.full((10_000, 1), 3.0), TimeGrid(2000, 0.0, 20.0), make_rng(8), "terminal"
    )
    assert traj.terminal.var() == pytest.approx(1.0, rel=0.05)
    assert abs(traj.terminal.mean()) < 0.05


def test_langevin_keeps_target_stationary():
    x0 = make_rng(9).standard_normal((20_000, 1))
    traj = simulate_langevin(lambda x, t: -x, 0.8, x0, TimeGrid(50, 0.0, 0.5), make_rng(10), "terminal")
    assert abs(traj.terminal.mean()) < 0.03
    assert traj.terminal.var() == pytest.approx(1.0, abs=0.04)


def test_langevin_requires_positive_sigma():
    with pytest.raises(DomainError):
        simulate_langevin(lambda x, t: -x, 0.0, np.zeros(1), TimeGrid(2), make_rng(0))


def test_langevin_mixture_matches_quadrature_samples():
    path = GaussianPath(NoiseSchedule("condot"), 1)
    data = Dataset(np.array([-1.0, 1.0]))
    t_fix = 0.5
    score = lambda x, t: marginal_score(path, data, x, t_fix)  # noqa: E731
    x0 = make_rng(11).standard_normal((4096, 1))
    traj = simulate_langevin(score, 1.0, x0, TimeGrid(1000, 0.0, 10.0), make_rng(12), "terminal")
    # reference draws by inverse-CDF on a quadrature grid
    xs = np.linspace(-6, 6, 24001)
    pdf = marginal_density(path, data, xs[:, None], t_fix)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(xs))])
    cdf /= cdf[-1]
    ref = np.interp(make_rng(13).random(4096), cdf, xs)
    assert energy_distance(traj.terminal, ref[:, None]) < 0.05
