import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from subhomog.fem import (Factorization, SolverError, assemble_load, assemble_mass, assemble_stiffness,
                          element_energies, local_mass, local_stiffness, norms, solve_dirichlet)
from subhomog.fields import CoefficientField, coeff_multiscale_2d, constant_coefficient
from subhomog.grid import GridMismatchError, build_fine_grid


def test_1d_stiffness_and_mass_by_hand():
    g = build_fine_grid(1, 2)
    A = assemble_stiffness(g, constant_coefficient(g)).matrix.toarray()
    np.testing.assert_allclose(A, [[8, -4, 0], [-4, 8, -4], [0, -4, 8]])
    M = assemble_mass(g).matrix.toarray()
    np.testing.assert_allclose(M, np.array([[4, 1, 0], [1, 4, 1], [0, 1, 4]]) * 0.25 / 6)


def _bilinear_oracle(h, n=3):
    """Local Q1 stiffness and mass on [0,h]^2 by Gauss quadrature."""
    t, w = leggauss(n)
    t = (t + 1) / 2 * h
    w = w / 2 * h
    corners = [(0, 0), (0, 1), (1, 0), (1, 1)]  # last axis fastest
    phi = lambda c, s: (1 - s / h) if c == 0 else s / h
    dphi = lambda c: -1 / h if c == 0 else 1 / h
    K, M = np.zeros((4, 4)), np.zeros((4, 4))
    for a, (ax, ay) in enumerate(corners):
        for b, (bx, by) in enumerate(corners):
            for x, wx in zip(t, w):
                for y, wy in zip(t, w):
                    gx = dphi(ax) * phi(ay, y) * dphi(bx) * phi(by, y)
                    gy = phi(ax, x) * dphi(ay) * phi(bx, x) * dphi(by)
                    K[a, b] += wx * wy * (gx + gy)
                    M[a, b] += wx * wy * phi(ax, x) * phi(ay, y) * phi(bx, x) * phi(by, y)
    return K, M


def test_2d_local_matrices_match_quadrature():
    K, M = _bilinear_oracle(0.125)
    np.testing.assert_allclose(local_stiffness(2, 0.125), K, atol=1e-13)
    np.testing.assert_allclose(local_mass(2, 0.125), M, atol=1e-16)
    assert local_stiffness(2, 1.0)[0, 0] == pytest.approx(2 / 3)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_mass_total_and_definite(d):
    g = build_fine_grid(d, 2)
    M = assemble_mass(g)
    one = np.ones(g.node_count)
    assert one @ M.full @ one == pytest.approx(1.0, rel=1e-14)
    assert np.linalg.eigvalsh(M.matrix.toarray()).min() > 0


def test_load_of_constant():
    g = build_fine_grid(1, 2)
    np.testing.assert_allclose(assemble_load(g, np.ones(g.node_count)), [0.25] * 3)


@pytest.mark.parametrize("d", [1, 2])
def test_manufactured_solution_second_order(d):
    errs = []
    for levels in (4, 5):
        g = build_fine_grid(d, levels)
        x = g.node_coordinates()
        u = np.prod(np.sin(np.pi * x), axis=1)
        f = d * np.pi ** 2 * u
        A = assemble_stiffness(g, constant_coefficient(g))
        uh = solve_dirichlet(A, assemble_load(g, f))
        errs.append(np.max(np.abs(uh - u)))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.1)


def test_stiffness_symmetric_and_spd():
    g = build_fine_grid(2, 4)
    A = assemble_stiffness(g, coeff_multiscale_2d(g))
    assert abs(A.matrix - A.matrix.T).max() == 0
    assert np.linalg.eigvalsh(A.matrix.toarray()).min() > 0
    assert abs(A.full @ np.ones(g.node_count)).max() < 1e-12


def test_tent_norms():
    g = build_fine_grid(1, 1)
    v = np.array([0.0, 1.0, 0.0])
    A = assemble_stiffness(g, constant_coefficient(g))
    e1, e0 = norms(v, A, assemble_mass(g))
    assert e1 == pytest.approx(2.0)
    assert e0 == pytest.approx(1 / np.sqrt(3))
    # homogeneity
    assert norms(-3 * v, A, assemble_mass(g))[0] == pytest.approx(6.0)


def test_larger_coefficient_gives_larger_energy():
    g = build_fine_grid(2, 4)
    v = np.random.default_rng(0).standard_normal(g.node_count) * g.interior_mask
    a = coeff_multiscale_2d(g)
    big = CoefficientField(g, a.values * 1.5)
    assert assemble_stiffness(g, big).quadratic(v) > assemble_stiffness(g, a).quadratic(v)


def test_rejects_bad_coefficients():
    g = build_fine_grid(1, 3)
    with pytest.raises(ValueError):
        assemble_stiffness(g, CoefficientField(g, -np.ones(g.element_count)))
    with pytest.raises(GridMismatchError):
        assemble_stiffness(g, constant_coefficient(build_fine_grid(1, 4)))
    with pytest.raises(GridMismatchError):
        assemble_load(g, np.ones(3))


def test_factorization_reuse_is_bitwise():
    g = build_fine_grid(2, 5)
    A = assemble_stiffness(g, coeff_multiscale_2d(g))
    F = Factorization(A.matrix)
    b = np.random.default_rng(1).standard_normal((g.interior_count, 3))
    x = F.solve(b)
    assert np.array_equal(x, F.solve(b))
    assert np.array_equal(x[:, 1], F.solve(b[:, 1]))
    assert np.linalg.norm(A.matrix @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_cg_path_agrees_with_direct():
    g = build_fine_grid(2, 4)
    A = assemble_stiffness(g, coeff_multiscale_2d(g))
    b = np.ones(g.interior_count)
    np.testing.assert_allclose(Factorization(A.matrix, method="cg").solve(b),
                               Factorization(A.matrix).solve(b), rtol=1e-8)
    with pytest.raises(ValueError):
        Factorization(A.matrix, method="qr")


def test_unattainable_tolerance_raises():
    g = build_fine_grid(1, 10)
    A = assemble_stiffness(g, constant_coefficient(g))
    with pytest.raises(SolverError):
        Factorization(A.matrix, rtol=1e-30).solve(np.ones(g.interior_count))


def test_element_energies_sum_to_quadratic():
    g = build_fine_grid(2, 4)
    a = coeff_multiscale_2d(g)
    A = assemble_stiffness(g, a)
    v = np.random.default_rng(2).standard_normal(g.node_count) * g.interior_mask
    e = element_energies(g, a, v)
    assert np.all(e >= -1e-14)
    assert e.sum() == pytest.approx(A.quadratic(v), rel=1e-12)


def test_symmetric_data_gives_symmetric_solution():
    g = build_fine_grid(1, 7)
    x = g.element_centers()[:, 0]
    a = CoefficientField(g, 1.5 + np.cos(6 * np.pi * x))
    f = np.abs(g.node_coordinates()[:, 0] - 0.5)
    u = solve_dirichlet(assemble_stiffness(g, a), assemble_load(g, f))
    np.testing.assert_allclose(u, u[::-1], atol=1e-14)
