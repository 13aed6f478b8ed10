import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from flowlab.data_eval import (
    CHECKER_CELLS,
    DatasetSpec,
    class_purity,
    energy_distance,
    gmm_means,
    histogram2d,
    make_dataset,
    nearest_mean,
)
from flowlab.errors import DomainError
from flowlab.rng import make_rng


def test_spec_validation():
    with pytest.raises(DomainError):
        DatasetSpec(kind="spirals")
    with pytest.raises(DomainError):
        DatasetSpec(n_points=0)
    assert DatasetSpec(label_mode="cell").n_classes == 8
    assert DatasetSpec(kind="gmm", n_components=5).n_classes == 5


def test_gmm_means_on_circle():
    spec = DatasetSpec(kind="gmm", n_components=4, radius=3.0)
    assert_allclose(gmm_means(spec), [[3, 0], [0, 3], [-3, 0], [0, -3]], atol=1e-12)


def test_gmm_sample_class_means():
    spec = DatasetSpec(kind="gmm", n_points=20_000, n_components=3, std=0.2)
    data = make_dataset(spec)
    means = gmm_means(spec)
    for k in range(3):
        assert_allclose(data.points[data.labels == k].mean(axis=0), means[k], atol=0.01)


def test_checkerboard_support():
    data = make_dataset(DatasetSpec(n_points=20_000, seed=2))
    cols = np.floor(data.points[:, 0] + 2).astype(int)
    rows = np.floor(data.points[:, 1] + 2).astype(int)
    assert np.all((cols + rows) % 2 == 0)
    assert np.all(np.abs(data.points) <= 2.0)
    assert_array_equal(data.labels, cols % 2)
    # every occupied cell receives points
    assert len({(c, r) for c, r in zip(cols, rows)}) == len(CHECKER_CELLS)


def test_checkerboard_cell_labels():
    data = make_dataset(DatasetSpec(n_points=2000, label_mode="cell"))
    cells = np.array(CHECKER_CELLS)[data.labels]
    assert_array_equal(np.floor(data.points + 2).astype(int), cells)


def test_moons_shape():
    data = make_dataset(DatasetSpec(kind="moons", n_points=5000, noise=0.0))
    upper = data.points[data.labels == 0]
    assert_allclose(np.linalg.norm(upper, axis=1), 1.0, atol=1e-12)
    assert upper[:, 1].min() >= 0


def test_datasets_are_deterministic():
    for kind in ("checkerboard", "gmm", "moons"):
        a = make_dataset(DatasetSpec(kind=kind, n_points=100, seed=3))
        b = make_dataset(DatasetSpec(kind=kind, n_points=100, seed=3))
        assert_array_equal(a.points, b.points)
        assert_array_equal(a.labels, b.labels)
    c = make_dataset(DatasetSpec(n_points=100, seed=4))
    assert not np.array_equal(a.points, c.points)


def test_energy_distance_examples():
    a = make_rng(0).standard_normal((50, 2))
    assert energy_distance(a, a) == 0.0
    # point masses at 0 and 1: 2*1 - 0 - 0
    assert energy_distance(np.zeros((3, 1)), np.ones((4, 1))) == pytest.approx(2.0)


def test_energy_distance_same_law_is_small():
    a = make_rng(1).standard_normal((2000, 2))
    b = make_rng(2).standard_normal((2000, 2))
    assert energy_distance(a, b) < 0.02
    assert energy_distance(a, b + 1.0) > 0.3


def test_energy_distance_symmetric_and_blocked():
    a = make_rng(3).standard_normal((300, 2))
    b = make_rng(4).standard_normal((200, 2)) * 1.5
    assert energy_distance(a, b) == pytest.approx(energy_distance(b, a), rel=1e-12)
    assert energy_distance(a, b, block=7) == pytest.approx(energy_distance(a, b), rel=1e-12)


def test_energy_distance_errors():
    with pytest.raises(DomainError):
        energy_distance(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(DomainError):
        energy_distance(np.zeros((2, 2)), np.zeros((3, 1)))


def test_histogram_edges():
    pts = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0], [1.0001, 0.5], [-0.1, 0.2]])
    h = histogram2d(pts, (0, 1, 0, 1), (2, 2))
    # lower edge belongs to the first bin, the upper edge to the last
    assert_array_equal(h.counts, [[1, 0], [0, 2]])
    assert h.out_of_bounds == 2
    assert h.total == len(pts)


def test_histogram_uniform_counts():
    pts = make_rng(5).random((100_000, 2))
    h = histogram2d(pts, (0, 1, 0, 1), (10, 10))
    assert h.counts.sum() == 100_000
    assert np.all(np.abs(h.counts - 1000) < 5 * np.sqrt(1000))


def test_histogram_errors():
    with pytest.raises(DomainError):
        histogram2d(np.zeros((1, 2)), (1, 0, 0, 1), (2, 2))
    with pytest.raises(DomainError):
        histogram2d(np.zeros((1, 2)), (0, 1, 0, 1), (0, 2))


def test_purity_examples():
    means = np.array([[-1.0, 0.0], [1.0, 0.0]])
    near_one = np.array([[0.9, 0.1], [1.2, -0.3]])
    assert class_purity(near_one, 1, means) == 1.0
    mixed = np.array([[0.9, 0.0], [-0.9, 0.0]])
    assert class_purity(mixed, 1, means) == 0.5
    assert np.isnan(class_purity(np.zeros((0, 2)), 1, means))
    assert_array_equal(nearest_mean(mixed, means), [1, 0])
