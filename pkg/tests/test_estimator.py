import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from subhomog.estimator import SubsampledRecovery
from subhomog.fem import assemble_load, solve_dirichlet


def test_params_and_clone():
    est = SubsampledRecovery(d=1, levels=6, H=0.25, ratio=0.5, layers=2)
    assert est.get_params() == dict(d=1, levels=6, H=0.25, ratio=0.5, layers=2)
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est


def test_round_trip_and_predict():
    est = SubsampledRecovery(d=1, levels=6, H=0.125, ratio=0.5).fit()
    c = np.random.default_rng(0).standard_normal((3, 8))
    np.testing.assert_allclose(est.transform(est.inverse_transform(c)), c, atol=1e-12)
    g = est.grid_
    f = np.ones((1, g.node_count))
    u = solve_dirichlet(est.stiffness_, assemble_load(g, f[0], est.mass_))
    # ideal Galerkin equals recovery of the exact solution
    np.testing.assert_allclose(est.predict(f)[0], est.inverse_transform(est.transform(u[None]))[0], atol=1e-10)


def test_fit_with_coefficient_values_and_localized():
    coeff = np.linspace(1, 2, 2 ** 6)
    est = SubsampledRecovery(d=1, levels=6, H=0.25, ratio=1.0, layers=1).fit(coeff)
    assert est.basis_.layers == 1
    assert est.stiffness_.coefficient.a_max == 2.0


def test_not_fitted_and_shape_errors():
    est = SubsampledRecovery(levels=5, H=0.25)
    with pytest.raises(NotFittedError):
        est.transform(np.ones((1, 33)))
    est.fit()
    with pytest.raises(ValueError, match="nodal"):
        est.transform(np.ones((1, 10)))
