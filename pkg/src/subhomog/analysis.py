"""Coarse solutions, error functionals, decay diagnostics and theory evaluators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import BasisSet, _condition_checked_solve
from .fem import SparseOperator, element_energies, norms
from .grid import CoarsePartition, patch, saturation_layer

DECAY_FLOOR = 1e-12


@dataclass
class ErrorReport:
    variant: str
    energy_error: float
    l2_error: float
    params: dict = field(default_factory=dict)


def recover(basis: BasisSet, data: np.ndarray) -> np.ndarray:
    """Sum of basis columns weighted by the measured data."""
    data = np.asarray(data, dtype=float)
    if data.shape[0] != basis.size:
        raise ValueError(f"expected {basis.size} measurements, got {data.shape[0]}")
    out = basis.values @ data
    return np.asarray(out)


def galerkin_solve(basis: BasisSet, A: SparseOperator, load: np.ndarray) -> np.ndarray:
    """Galerkin projection of the fine problem onto span(basis); load may hold several columns."""
    Psi = basis.interior()
    K = Psi.T @ (A.matrix @ Psi)
    K = K.toarray() if sp.issparse(K) else np.asarray(K)
    F = np.asarray(Psi.T @ np.asarray(load, dtype=float))
    c = _condition_checked_solve(K, F, "coarse Galerkin matrix")
    return recover(basis, c)


def error_report(reference: np.ndarray, candidate: np.ndarray, A: SparseOperator, M: SparseOperator,
                 variant: str = "recovery", **params) -> ErrorReport:
    diff = A.grid.check_nodal(reference) - A.grid.check_nodal(candidate)
    e1, e0 = norms(diff, A, M)
    return ErrorReport(variant, e1, e0, params)


def rho(p: int, d: int, t: float) -> float:
    if d < p:
        return 1.0
    if d == p:
        return math.log1p(t) ** ((d - 1) / d)
    return t ** ((d - p) / p)


@dataclass(frozen=True)
class TheoryConstants:
    a_min: float
    a_max: float
    C0: float = 1.0
    C1: float = 1.0
    C2: float = 1.0

    def __post_init__(self):
        if min(self.a_min, self.a_max, self.C0, self.C1, self.C2) <= 0:
            raise ValueError("all theory constants must be positive")


def beta_bound(h: float, H: float, d: int, tc: TheoryConstants) -> float:
    """Geometric decay factor per oversampling layer; unknown constants come from tc."""
    x = tc.C0 * math.sqrt(tc.a_max / tc.a_min) * (tc.C1 * rho(2, d, H / h) + tc.C1 * tc.C2 * h / H)
    return x / (x + 1)


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


@dataclass
class DecayProfile:
    cell: int
    tails: np.ndarray
    total: float

    def fit(self, kmax: int | None = None):
        """OLS of log(tail) on k over tails above the noise floor; returns (slope, ratio)."""
        k = np.arange(self.tails.size)
        keep = self.tails > DECAY_FLOOR
        if kmax is not None:
            keep &= k <= kmax
        if keep.sum() < 2:
            return float("nan"), float("nan")
        slope = float(np.polyfit(k[keep], np.log(self.tails[keep]), 1)[0])
        return slope, math.exp(slope)


def decay_profile(basis: BasisSet, i: int, A: SparseOperator) -> DecayProfile:
    """Energy of basis column i outside N^k for k = 0 .. saturation."""
    if basis.layers is not None:
        raise ValueError("decay profiles are defined for the ideal basis")
    partition: CoarsePartition = basis.measurements.partition
    energies = element_energies(A.grid, A.coefficient, basis.column(i))
    tails = []
    for k in range(saturation_layer(partition, i) + 1):
        outside = ~patch(partition, i, k).element_mask()
        tails.append(float(energies[outside].sum()))
    return DecayProfile(int(i), np.array(tails), float(energies.sum()))


def localization_distance(ideal_i: np.ndarray, localized_i: np.ndarray, A: SparseOperator) -> float:
    diff = A.grid.check_nodal(ideal_i) - A.grid.check_nodal(localized_i)
    return math.sqrt(max(A.quadratic(diff), 0.0))
