"""Labelled 2D toy datasets and sample-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError
from .oracle import Dataset
from .rng import make_rng

DATASET_KINDS = ("checkerboard", "gmm", "moons")
CHECKER_LABEL_MODES = ("parity", "cell")

# 4x4 board on [-2, 2]^2 with unit cells; cell (i, j) is occupied when i + j is even.
CHECKER_CELLS = [(i, j) for i in range(4) for j in range(4) if (i + j) % 2 == 0]


@dataclass(frozen=True)
class DatasetSpec:
    """Recipe for a toy dataset.

    checkerboard: uniform on the occupied cells; ``label_mode`` "parity"
    labels a point by the parity of its column index, "cell" by the index
    (0..7) of its occupied cell.
    gmm: ``n_components`` isotropic Gaussians with std ``std`` whose means sit
    evenly on a circle of radius ``radius`` starting at angle 0.
    moons: two interleaved half circles with Gaussian noise ``noise``.
    """

    kind: str = "checkerboard"
    n_points: int = 4096
    seed: int = 0
    label_mode: str = "parity"
    n_components: int = 2
    radius: float = 2.0
    std: float = 0.1
    noise: float = 0.05

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise DomainError(f"dataset kind must be one of {DATASET_KINDS}")
        if self.n_points < 1:
            raise DomainError("n_points must be >= 1")
        if self.label_mode not in CHECKER_LABEL_MODES:
            raise DomainError(f"label_mode must be one of {CHECKER_LABEL_MODES}")
        if self.n_components < 1:
            raise DomainError("n_components must be >= 1")
        if self.std < 0 or self.noise < 0 or self.radius < 0:
            raise DomainError("radius, std and noise must be non-negative")

    @property
    def n_classes(self) -> int:
        if self.kind == "checkerboard":
            return 2 if self.label_mode == "parity" else len(CHECKER_CELLS)
        if self.kind == "gmm":
            return self.n_components
        return 2

    def bounding_box(self) -> tuple[float, float, float, float]:
        """Box containing the noiseless support."""
        if self.kind == "checkerboard":
            return (-2.0, 2.0, -2.0, 2.0)
        if self.kind == "gmm":
            return (-self.radius, self.radius, -self.radius, self.radius)
        return (-1.0, 2.0, -0.5, 1.0)


def gmm_means(spec: DatasetSpec) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(spec.n_components) / spec.n_components
    return spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _checkerboard(spec: DatasetSpec, rng):
    cells = np.array(CHECKER_CELLS, dtype=np.float64)
    which = rng.integers(len(CHECKER_CELLS), size=spec.n_points)
    offsets = rng.random((spec.n_points, 2))
    points = cells[which] - 2.0 + offsets
    if spec.label_mode == "parity":
        labels = cells[which, 0].astype(np.int64) % 2
    else:
        labels = which.astype(np.int64)
    return points, labels


def _gmm(spec: DatasetSpec, rng):
    labels = rng.integers(spec.n_components, size=spec.n_points)
    points = gmm_means(spec)[labels] + spec.std * rng.standard_normal((spec.n_points, 2))
    return points, labels.astype(np.int64)


def _moons(spec: DatasetSpec, rng):
    labels = rng.integers(2, size=spec.n_points)
    theta = np.pi * rng.random(spec.n_points)
    upper = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    lower = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1)
    points = np.where(labels[:, None] == 0, upper, lower)
    points = points + spec.noise * rng.standard_normal((spec.n_points, 2))
    return points, labels.astype(np.int64)


def make_dataset(spec: DatasetSpec) -> Dataset:
    rng = make_rng(spec.seed)
    build = {"checkerboard": _checkerboard, "gmm": _gmm, "moons": _moons}[spec.kind]
    points, labels = build(spec, rng)
    return Dataset(points, labels)


def _as_samples(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] == 0:
        raise DomainError(f"{name} is empty")
    return a


def _mean_distance(a: np.ndarray, b: np.ndarray, block: int) -> float:
    total = 0.0
    for start in range(0, a.shape[0], block):
        total += float(cdist(a[start : start + block], b).sum())
    return total / (a.shape[0] * b.shape[0])


def energy_distance(a, b, block: int = 1024) -> float:
    """``2 E|A - B| - E|A - A'| - E|B - B'|`` with exact double sums over all pairs."""
    a = _as_samples(a, "first sample set")
    b = _as_samples(b, "second sample set")
    if a.shape[1] != b.shape[1]:
        raise DomainError("sample sets differ in dimension")
    value = (
        2.0 * _mean_distance(a, b, block) - _mean_distance(a, a, block) - _mean_distance(b, b, block)
    )
    return max(value, 0.0)


@dataclass
class Histogram2D:
    bounds: tuple[float, float, float, float]
    bins: tuple[int, int]
    counts: np.ndarray  # (nx, ny); counts[i, j] is x-bin i, y-bin j
    out_of_bounds: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.out_of_bounds


def histogram2d(samples, bounds, bins) -> Histogram2D:
    """Bins are half open ``[lo, hi)`` except the last, which also holds its upper edge."""
    x_min, x_max, y_min, y_max = (float(v) for v in bounds)
    if not (x_max > x_min and y_max > y_min):
        raise DomainError(f"inverted or empty histogram bounds {bounds}")
    nx, ny = (int(b) for b in bins)
    if nx < 1 or ny < 1:
        raise DomainError("need at least one bin per axis")
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    counts, _, _ = np.histogram2d(
        samples[:, 0], samples[:, 1], bins=(nx, ny), range=((x_min, x_max), (y_min, y_max))
    )
    counts = counts.astype(np.int64)
    return Histogram2D(
        (x_min, x_max, y_min, y_max), (nx, ny), counts, samples.shape[0] - int(counts.sum())
    )


def nearest_mean(samples, means) -> np.ndarray:
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    return np.argmin(cdist(samples, np.asarray(means, dtype=np.float64)), axis=1)


def class_purity(samples, labels_requested, means) -> float:
    """Fraction of samples whose nearest class mean is the requested class."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] == 0:
        return float("nan")
    requested = np.broadcast_to(np.asarray(labels_requested), (samples.shape[0],))
    return float(np.mean(nearest_mean(samples, means) == requested))
