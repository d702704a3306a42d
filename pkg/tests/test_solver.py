# --------------------------------------------------
# test_solver.py
# --------------------------------------------------
# Purpose:
#   Validate the mixed saddle-point solve:
#       • div sigma_h = P_h f elementwise
#       • the smooth manufactured problem converges
#       • the three data variants of a nested pair
#
# Expectations:
#   - Constraint residual below 1e-10
#   - Flux error halves with h
#   - Galerkin orthogonality and the energy identity
#     hold to rounding
# --------------------------------------------------

import numpy as np
import pytest

from amfem.complex import FeFunction, build_complex, inner, l2_error, norm_sq, prolong
from amfem.errors import SolverError
from amfem.mesh import uniform_refine
from amfem.metrics import metrics
from amfem.problems import const1, sinsin, sinsin_flux, sinsin_potential
from amfem.solver import project_data, solve_mixed, solve_with_data_variants


def test_divergence_matches_projected_data(square_fine_cx):
    sol = solve_mixed(square_fine_cx, sinsin)
    np.testing.assert_allclose(square_fine_cx.D1 @ sol.sigma.coefficients, sol.f_h.coefficients, atol=1e-10)
    assert sol.diagnostics.constraint_residual <= 1e-10
    assert sol.diagnostics.method in ("splu", "dense_sym")
    assert sol.p is None
    assert sol.mesh is square_fine_cx.mesh


def test_constant_data(lshape):
    cx = build_complex(uniform_refine(lshape, 1))
    sol = solve_mixed(cx, const1)
    np.testing.assert_allclose(cx.D1 @ sol.sigma.coefficients, 1.0, atol=1e-10)


def test_zero_data_gives_zero_solution(square_fine_cx):
    sol = solve_mixed(square_fine_cx, 0.0)
    np.testing.assert_allclose(sol.sigma.coefficients, 0.0, atol=1e-14)
    np.testing.assert_allclose(sol.u.coefficients, 0.0, atol=1e-14)


def test_smooth_problem_converges_at_first_order(square):
    errors = []
    for level in (2, 3, 4):
        cx = build_complex(uniform_refine(square, level))
        errors.append(l2_error(sinsin_flux, solve_mixed(cx, sinsin).sigma, cx))
    ratios = np.array(errors[:-1]) / np.array(errors[1:])
    assert np.all((ratios > 1.7) & (ratios < 2.3))


def test_potential_sign(square):
    cx = build_complex(uniform_refine(square, 4))
    sol = solve_mixed(cx, sinsin)
    assert sol.u.coefficients.mean() > 0.0
    assert l2_error(sinsin_potential, sol.u, cx) < 0.15


def test_degree_one_data_is_rejected(square_fine_cx):
    sigma = FeFunction(1, np.zeros(square_fine_cx.mesh.num_edges), square_fine_cx.mesh)
    with pytest.raises(SolverError):
        solve_mixed(square_fine_cx, sigma)


def test_project_data_keeps_fine_function(square_fine_cx):
    f_h = FeFunction(2, np.arange(square_fine_cx.mesh.num_triangles, dtype=float), square_fine_cx.mesh)
    assert project_data(f_h, square_fine_cx) is f_h


def test_data_variants(square):
    coarse = uniform_refine(square, 1)
    fine = uniform_refine(coarse, 1)
    cx_H, cx_h = build_complex(coarse), build_complex(fine)
    variants = solve_with_data_variants(cx_h, cx_H, sinsin)

    f_H_on_fine = prolong(variants.sigma_H.f_h, cx_h).coefficients
    np.testing.assert_allclose(cx_h.D1 @ variants.sigma_tilde_h.sigma.coefficients, f_H_on_fine, atol=1e-10)
    np.testing.assert_allclose(cx_h.D1 @ variants.sigma_h.sigma.coefficients,
                               variants.sigma_h.f_h.coefficients, atol=1e-10)
    assert variants.sigma_H.mesh is coarse
    assert variants.sigma_tilde_h.mesh is fine


def test_data_variants_on_one_mesh(square_fine_cx):
    variants = solve_with_data_variants(square_fine_cx, square_fine_cx, sinsin)
    assert variants.sigma_h is variants.sigma_tilde_h is variants.sigma_H


def test_solves_are_counted(square_fine_cx):
    solve_mixed(square_fine_cx, sinsin)
    solve_mixed(square_fine_cx, const1)
    assert sum(metrics.solves.values()) == 2
    assert "amfem_solves_total" in metrics.render_prometheus()


def test_first_equation_holds_for_every_test_flux(square_fine_cx):
    cx = square_fine_cx
    sol = solve_mixed(cx, sinsin)
    rng = np.random.default_rng(8)
    for _ in range(5):
        tau = FeFunction(1, rng.standard_normal(cx.mesh.num_edges), cx.mesh)
        div_tau = FeFunction(2, cx.D1 @ tau.coefficients, cx.mesh)
        lhs = inner(sol.sigma, tau, cx) - inner(sol.u, div_tau, cx)
        scale = np.sqrt(norm_sq(sol.sigma, cx) * norm_sq(tau, cx))
        assert abs(lhs) <= 1e-10 * scale


def test_energy_identity(square_fine_cx):
    cx = square_fine_cx
    sol = solve_mixed(cx, sinsin)
    assert norm_sq(sol.sigma, cx) == pytest.approx(inner(sol.f_h, sol.u, cx), rel=1e-10)


def test_error_is_orthogonal_to_coarse_divergence_free_fluxes(square):
    coarse = uniform_refine(square, 1)
    fine = uniform_refine(coarse, 1)
    cx_H, cx_h = build_complex(coarse), build_complex(fine)
    sol_H, sol_h = solve_mixed(cx_H, sinsin), solve_mixed(cx_h, sinsin)
    error = sol_h.sigma - prolong(sol_H.sigma, cx_h)

    rng = np.random.default_rng(4)
    for _ in range(5):
        tau_H = FeFunction(1, cx_H.D0 @ rng.standard_normal(coarse.num_vertices), coarse)
        tau = prolong(tau_H, cx_h)
        assert abs(inner(error, tau, cx_h)) <= 1e-10 * np.sqrt(norm_sq(error, cx_h) * norm_sq(tau, cx_h))


def test_sparse_lu_and_dense_fallback_agree(square_fine_cx, monkeypatch):
    cx = square_fine_cx
    sparse = solve_mixed(cx, sinsin)
    assert sparse.diagnostics.method == "splu"
    assert sparse.diagnostics.unknowns == cx.mesh.num_edges + cx.mesh.num_triangles
    assert sparse.diagnostics.min_pivot > 0.0

    def failing_splu(matrix):
        raise RuntimeError("Factor is exactly singular")

    monkeypatch.setattr("amfem.solver.splu", failing_splu)
    dense = solve_mixed(cx, sinsin)
    assert dense.diagnostics.method == "dense_sym"
    np.testing.assert_allclose(dense.sigma.coefficients, sparse.sigma.coefficients, atol=1e-10)
    np.testing.assert_allclose(dense.u.coefficients, sparse.u.coefficients, atol=1e-10)
