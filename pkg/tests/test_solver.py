import numpy as np
import pytest

from helmstab.errors import NumericalFailureError
from helmstab.geometry import build_grid
from helmstab.solver import (
    HelmholtzSystem,
    assemble,
    clear_caches,
    flux_normal_derivative,
    node_coefficients,
    normal_derivative,
    solve_dirichlet,
)


def unit_square(n, coeff=1.0, omega2=0.0):
    g = build_grid((1.0, 1.0), (n, n))
    return g, HelmholtzSystem(g, np.full(g.n_cells, coeff), omega2)


def test_single_interior_node_matrix():
    g = build_grid((1.0, 1.0, 1.0), (2, 2, 2))
    with pytest.warns(UserWarning):  # deliberately under-resolved
        sys_ = assemble(g, np.full(8, 0.7), 5.0, cache=False)
    # h = 0.5: diagonal 6/h^2 - omega^2 * c = 24 - 3.5
    assert sys_.interior_matrix.shape == (1, 1)
    assert np.isclose(sys_.interior_matrix.toarray()[0, 0], 24.0 - 5.0 * 0.7)


def test_node_coefficient_is_adjacent_cell_mean():
    g = build_grid((1.0, 1.0), (2, 2))
    coeff = np.array([1.0, 2.0, 3.0, 4.0])  # x-fastest 2x2 cells
    nodal = node_coefficients(g, coeff)
    # center node touches all four cells
    center_flat = 1 + 3 * 1
    assert np.isclose(nodal[center_flat], 2.5)
    # corner node touches only its one cell
    assert np.isclose(nodal[0], 1.0)


def test_laplace_reproduces_linear_functions():
    g, sys_ = unit_square(8)
    x = g.all_node_coordinates()[:, 0]
    u = solve_dirichlet(sys_, x[g.boundary_nodes])
    assert np.max(np.abs(u - x)) < 1e-10


def test_zero_data_gives_zero_solution():
    g, sys_ = unit_square(8, omega2=3.0)
    u = solve_dirichlet(sys_, np.zeros(g.n_boundary))
    assert np.array_equal(u, np.zeros(g.n_nodes))


def test_constant_boundary_harmonic():
    g, sys_ = unit_square(8, omega2=0.0)
    u = solve_dirichlet(sys_, np.ones(g.n_boundary))
    assert np.max(np.abs(u - 1.0)) < 1e-12


def test_manufactured_solution_second_order():
    # u* = cos(pi x) cos(pi y), f = (2 pi^2 - omega^2) u*
    def error(n):
        g = build_grid((1.0, 1.0), (n, n))
        sys_ = HelmholtzSystem(g, np.ones(g.n_cells), 1.0)
        xy = g.all_node_coordinates()
        ustar = np.cos(np.pi * xy[:, 0]) * np.cos(np.pi * xy[:, 1])
        f = (2 * np.pi**2 - 1.0) * ustar[g.interior_nodes]
        u = solve_dirichlet(sys_, ustar[g.boundary_nodes], f)
        w = sys_.node_volumes
        return np.sqrt(np.sum(w * (u - ustar) ** 2) / np.sum(w * ustar**2))

    errs = [error(n) for n in (16, 32, 64)]
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(abs(o - 2.0) <= 0.2 for o in orders)


def test_solution_linearity():
    g, sys_ = unit_square(12, omega2=4.0)
    rng = np.random.default_rng(0)
    g1 = rng.normal(size=g.n_boundary)
    g2 = rng.normal(size=g.n_boundary)
    a, b = 1.7, -0.4
    u12 = solve_dirichlet(sys_, a * g1 + b * g2)
    u1 = solve_dirichlet(sys_, g1)
    u2 = solve_dirichlet(sys_, g2)
    scale = np.max(np.abs(u12))
    assert np.max(np.abs(u12 - (a * u1 + b * u2))) < 1e-12 * scale


def test_input_size_validation():
    g, sys_ = unit_square(8)
    with pytest.raises(ValueError):
        solve_dirichlet(sys_, np.zeros(3))
    with pytest.raises(ValueError):
        solve_dirichlet(sys_, np.zeros(g.n_boundary), np.zeros(5))
    with pytest.raises(ValueError):
        normal_derivative(sys_, np.zeros(7))


def test_normal_derivative_on_linear_field():
    g, sys_ = unit_square(8)
    coords = g.all_node_coordinates()
    nd = normal_derivative(sys_, coords[:, 0])
    axes = g.boundary_face // 2
    sides = g.boundary_face % 2
    expect = np.where(axes == 0, np.where(sides == 1, 1.0, -1.0), 0.0)
    assert np.allclose(nd, expect, atol=1e-12)


def test_normal_derivative_constant_field_zero():
    g, sys_ = unit_square(8)
    nd = normal_derivative(sys_, np.full(g.n_nodes, 3.7))
    assert np.max(np.abs(nd)) < 1e-12


def test_normal_derivative_exact_on_quadratics():
    g, sys_ = unit_square(10)
    coords = g.all_node_coordinates()
    nd = normal_derivative(sys_, coords[:, 0] ** 2)
    xb = coords[g.boundary_nodes, 0]
    axes = g.boundary_face // 2
    sides = g.boundary_face % 2
    expect = np.where(axes == 0, np.where(sides == 1, 2 * xb, -2 * xb), 0.0)
    assert np.allclose(nd, expect, atol=1e-11)


def test_dtn_pairing_symmetry():
    # <Lambda g, h> = <Lambda h, g> to near machine precision (flux pairing)
    g = build_grid((1.0, 1.0), (32, 32))
    sys_ = HelmholtzSystem(g, np.full(g.n_cells, 0.5), 3.0)
    rng = np.random.default_rng(1)
    for _ in range(5):
        ga = rng.normal(size=g.n_boundary)
        hb = rng.normal(size=g.n_boundary)
        pa = np.dot(sys_.flux_rows.dot(solve_dirichlet(sys_, ga)), hb)
        pb = np.dot(sys_.flux_rows.dot(solve_dirichlet(sys_, hb)), ga)
        assert abs(pa - pb) <= 1e-8 * max(abs(pa), abs(pb))


def test_flux_reciprocity_point_sources():
    # point data at p and q swapped give the same flux sample
    g = build_grid((1.0, 1.0), (16, 16))
    sys_ = HelmholtzSystem(g, np.full(g.n_cells, 0.8), 5.0)
    p, q = 3, 37
    ep = np.zeros(g.n_boundary)
    ep[p] = 1.0
    eq = np.zeros(g.n_boundary)
    eq[q] = 1.0
    w = g.boundary_weights
    at_q = (w * flux_normal_derivative(sys_, solve_dirichlet(sys_, ep)))[q]
    at_p = (w * flux_normal_derivative(sys_, solve_dirichlet(sys_, eq)))[p]
    assert abs(at_q - at_p) < 1e-6 * max(abs(at_q), abs(at_p))


def test_flux_pairing_matches_weighted_form():
    g = build_grid((1.0, 1.0), (12, 12))
    sys_ = HelmholtzSystem(g, np.ones(g.n_cells), 2.0)
    rng = np.random.default_rng(2)
    ga = rng.normal(size=g.n_boundary)
    hb = rng.normal(size=g.n_boundary)
    u = solve_dirichlet(sys_, ga)
    direct = np.dot(sys_.flux_rows.dot(u), hb)
    weighted = np.sum(g.boundary_weights * flux_normal_derivative(sys_, u) * hb)
    assert np.isclose(direct, weighted, rtol=1e-12)


def test_factorization_cache_reuse():
    clear_caches()
    g = build_grid((1.0, 1.0), (8, 8))
    coeff = np.ones(g.n_cells)
    s1 = assemble(g, coeff, 2.0, cache=True)
    s2 = assemble(g, coeff, 2.0, cache=True)
    assert s1 is s2
    s3 = assemble(g, coeff, 2.0, cache=False)
    assert s3 is not s1
    clear_caches()


def test_invalid_assembly_inputs():
    g = build_grid((1.0, 1.0), (8, 8))
    with pytest.raises(ValueError):
        HelmholtzSystem(g, np.ones(5), 1.0)
    bad = np.ones(g.n_cells)
    bad[0] = -1.0
    with pytest.raises(ValueError):
        HelmholtzSystem(g, bad, 1.0)
    with pytest.raises(ValueError):
        HelmholtzSystem(g, np.ones(g.n_cells), -2.0)


def test_residual_guard_reports_failure():
    g = build_grid((1.0, 1.0), (8, 8))
    sys_ = HelmholtzSystem(g, np.ones(g.n_cells), 2.0)

    class BadLU:
        def solve(self, rhs):
            return np.zeros_like(rhs)

    sys_._lu = BadLU()
    with pytest.raises(NumericalFailureError) as err:
        solve_dirichlet(sys_, np.ones(g.n_boundary))
    assert "residual" in str(err.value)
