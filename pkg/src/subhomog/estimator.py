"""scikit-learn style wrapper around basis construction, measurement and recovery."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import galerkin_solve, recover
from .basis import ideal_basis, localized_basis
from .fem import Factorization, assemble_load, assemble_mass, assemble_stiffness
from .fields import CoefficientField, constant_coefficient
from .grid import build_coarse_partition, build_fine_grid, measure, measurement_set_from_ratio


class SubsampledRecovery(TransformerMixin, BaseEstimator):
    """Operator-adapted recovery from subsampled cell averages.

    ``fit`` builds the basis for a coefficient, ``transform`` maps nodal functions
    (rows of X) to their subsampled averages, ``inverse_transform`` recovers nodal
    functions from averages and ``predict`` maps nodal right-hand sides to the
    Galerkin coarse solution.

    Parameters
    ----------
    d : int
        Spatial dimension.
    levels : int
        Fine grid size 2**-levels.
    H : float
        Coarse cell side, a negative power of two.
    ratio : float
        Subsampled side over coarse side, h / H.
    layers : int or None
        Oversampling layers; None builds the ideal (global) basis.
    """

    def __init__(self, d=1, levels=8, H=0.125, ratio=1.0, layers=None):
        self.d = d
        self.levels = levels
        self.H = H
        self.ratio = ratio
        self.layers = layers

    def fit(self, X=None, y=None):
        """X: per-element coefficient values (or a CoefficientField); None means a = 1."""
        grid = build_fine_grid(self.d, self.levels)
        if X is None:
            a = constant_coefficient(grid)
        elif isinstance(X, CoefficientField):
            a = X
        else:
            a = CoefficientField(grid, check_array(np.asarray(X, float).reshape(1, -1)).ravel())
        self.grid_ = grid
        self.stiffness_ = assemble_stiffness(grid, a)
        self.mass_ = assemble_mass(grid)
        self.measurements_ = measurement_set_from_ratio(build_coarse_partition(grid, self.H), self.ratio)
        if self.layers is None:
            self.basis_ = ideal_basis(self.stiffness_, self.measurements_, Factorization(self.stiffness_.matrix))
        else:
            self.basis_ = localized_basis(self.stiffness_, self.measurements_, self.layers)
        self.n_features_in_ = grid.node_count
        return self

    def _nodal(self, X):
        check_is_fitted(self, "basis_")
        X = check_array(X)
        if X.shape[1] != self.grid_.node_count:
            raise ValueError(f"expected {self.grid_.node_count} nodal values per row, got {X.shape[1]}")
        return X

    def transform(self, X):
        return measure(self._nodal(X).T, self.measurements_).T

    def inverse_transform(self, X):
        check_is_fitted(self, "basis_")
        X = check_array(X)
        return recover(self.basis_, X.T).T

    def predict(self, X):
        X = self._nodal(X)
        loads = np.column_stack([assemble_load(self.grid_, f, self.mass_) for f in X])
        return galerkin_solve(self.basis_, self.stiffness_, loads).T
