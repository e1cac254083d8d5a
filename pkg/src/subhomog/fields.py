"""Rough coefficients, fractional-Gaussian right-hand sides and singular weights."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .grid import CoarsePartition, FineGrid

MULTISCALE_EPS = (1 / 5, 1 / 13, 1 / 17, 1 / 31, 1 / 65)


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise constant coefficient, one value per fine element."""

    grid: FineGrid
    values: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.grid.element_count:
            raise ValueError(f"expected {self.grid.element_count} element values, got {values.size}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def a_min(self) -> float:
        return float(self.values.min())

    @property
    def a_max(self) -> float:
        return float(self.values.max())

    def to_csv(self, path) -> None:
        centers = self.grid.element_centers()
        axes = [f"x{k + 1}" for k in range(self.grid.d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element", *axes, "value"])
            for e, (x, v) in enumerate(zip(centers, self.values)):
                w.writerow([e, *map(repr, x.tolist()), repr(float(v))])


def constant_coefficient(grid: FineGrid, value: float = 1.0) -> CoefficientField:
    return CoefficientField(grid, np.full(grid.element_count, float(value)), name=f"constant({value:g})")


@dataclass(frozen=True)
class RandomSource:
    """Seed plus stream id; each (seed, stream) pair owns an independent Philox stream."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))


def trig_coefficient_1d(grid: FineGrid, eta: np.ndarray, zeta: np.ndarray) -> CoefficientField:
    if grid.d != 1:
        raise ValueError("the random trigonometric coefficient is one-dimensional")
    x = grid.element_centers()[:, 0]
    k = np.arange(1, len(eta) + 1)
    phase = np.cos(np.outer(x, k)) @ eta + np.sin(np.outer(x, k)) @ zeta
    return CoefficientField(grid, 1.0 + 0.5 * np.sin(phase), name="random-trig")


def coeff_random_trig_1d(src: RandomSource, grid: FineGrid, terms: int = 100) -> CoefficientField:
    if grid.d != 1:
        raise ValueError("the random trigonometric coefficient is one-dimensional")
    rng = src.generator()
    eta = rng.uniform(-0.5, 0.5, terms)
    zeta = rng.uniform(-0.5, 0.5, terms)
    field = trig_coefficient_1d(grid, eta, zeta)
    return CoefficientField(grid, field.values, name=f"random-trig(seed={src.seed},stream={src.stream})")


def multiscale_2d(x1, x2):
    e1, e2, e3, e4, e5 = MULTISCALE_EPS
    s, c, tp = np.sin, np.cos, 2 * np.pi
    return (
        (1.1 + s(tp * x1 / e1)) / (1.1 + s(tp * x2 / e1))
        + (1.1 + s(tp * x2 / e2)) / (1.1 + c(tp * x1 / e2))
        + (1.1 + c(tp * x1 / e3)) / (1.1 + s(tp * x2 / e3))
        + (1.1 + s(tp * x2 / e4)) / (1.1 + c(tp * x1 / e4))
        + (1.1 + c(tp * x1 / e5)) / (1.1 + s(tp * x2 / e5))
        + s(4 * x1 ** 2 * x2 ** 2)
        + 1
    ) / 6


def coeff_multiscale_2d(grid: FineGrid) -> CoefficientField:
    if grid.d != 2:
        raise ValueError("the multiscale trigonometric coefficient is two-dimensional")
    x = grid.element_centers()
    return CoefficientField(grid, multiscale_2d(x[:, 0], x[:, 1]), name="multiscale")


def fractional_spectrum(K: int, delta: float) -> np.ndarray:
    """Standard deviations (k pi)^-(1/2 + delta), k = 1..K."""
    k = np.arange(1, K + 1)
    return (k * np.pi) ** -(0.5 + delta)


def _fractional_1d(rng: np.random.Generator, levels: int, delta: float) -> np.ndarray:
    K = (1 << levels) - 1
    coef = fractional_spectrum(K, delta) * rng.standard_normal(K) * np.sqrt(2.0)
    f = np.zeros(K + 2)
    # DST-I: y_j = 2 sum_k c_k sin(pi (k+1)(j+1) / (K+1))
    f[1:-1] = scipy.fft.dst(coef, type=1) / 2
    return f


def sample_rhs_fractional(src: RandomSource, grid: FineGrid, delta: float = 1e-2) -> np.ndarray:
    """Nodal sample of N(0, (-Laplace)^(-1/2 - delta)); tensor product of 1D draws for d > 1."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    rng = src.generator()
    f = np.ones(1)
    for _ in range(grid.d):
        f = np.multiply.outer(f, _fractional_1d(rng, grid.levels, delta))
    return f.ravel()


def distance_to_centers(partition: CoarsePartition, x: np.ndarray) -> np.ndarray:
    """Euclidean distance from each row of x to the nearest coarse-cell center."""
    H = partition.H
    cell = np.clip(np.floor(x / H), 0, partition.m - 1)
    return np.linalg.norm(x - (cell + 0.5) * H, axis=1)


def log_weight(dist, H: float, cutoff: float):
    r = H / np.maximum(cutoff, dist)
    return r * np.log1p(r) ** 2


def power_weight(dist, H: float, exponent: float, cutoff: float):
    return (H / np.maximum(cutoff, dist)) ** exponent


def weight_log_singular(partition: CoarsePartition) -> CoefficientField:
    grid = partition.grid
    dist = distance_to_centers(partition, grid.element_centers())
    return CoefficientField(grid, log_weight(dist, partition.H, grid.h), name="weight-log")


def weight_power(partition: CoarsePartition, gamma: float) -> CoefficientField:
    grid = partition.grid
    if grid.d < 2:
        raise ValueError("the power weight needs d >= 2")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    dist = distance_to_centers(partition, grid.element_centers())
    values = power_weight(dist, partition.H, grid.d - 2 + gamma, grid.h)
    return CoefficientField(grid, values, name=f"weight-power(gamma={gamma:g})")
