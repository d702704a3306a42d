# --------------------------------------------------
# test_estimator.py
# --------------------------------------------------
# Purpose:
#   Validate the residual indicators and oscillation:
#       • jump terms vanish for globally smooth fields
#       • residual and oscillation vanish for
#         piecewise-constant data
#       • oscillation of f = x matches the closed form
#       • fine-mesh data is measured exactly
# --------------------------------------------------

import numpy as np
import pytest

from amfem.complex import (
    EDGE_WEIGHTS,
    FeFunction,
    build_complex,
    canonical_interp_rt,
    edge_points,
    evaluate,
    prolong,
)
from amfem.errors import MeshError
from amfem.estimator import (
    estimate,
    estimate_field,
    eta_total,
    oscillation,
    oscillation_indicators,
)
from amfem.mesh import MarkedSet, ancestor_map, bisect, build_mesh, uniform_refine
from amfem.problems import const1, linex, signstep, sinsin
from amfem.solver import solve_mixed


def test_constant_field_has_no_interior_jumps(square_fine_cx):
    sigma = canonical_interp_rt(lambda p: np.tile([2.0, 1.0], (p.shape[0], 1)), square_fine_cx)
    ind = estimate_field(sigma, const1, square_fine_cx)
    interior = ~square_fine_cx.mesh.boundary
    np.testing.assert_allclose(ind.edge_jump_sq[interior], 0.0, atol=1e-24)
    assert ind.edge_jump_sq[~interior].min() > 0.0
    np.testing.assert_allclose(ind.corot, 0.0, atol=1e-24)


def test_constant_data_has_no_residual(lshape):
    cx = build_complex(uniform_refine(lshape, 1))
    sol = solve_mixed(cx, const1)
    ind = estimate(sol, const1, cx)
    np.testing.assert_allclose(ind.residual, 0.0, atol=1e-18)
    np.testing.assert_allclose(ind.osc_sq, 0.0, atol=1e-24)
    assert ind.total_eta_sq > 0.0
    np.testing.assert_allclose(ind.eta_sq, ind.jump + ind.corot + ind.residual)


def test_linear_data_oscillation_closed_form(square):
    """Right isosceles triangle with unit legs: h^2 * |T| * var(x) = 2 * 1/2 * 1/18."""
    cx = build_complex(square)
    np.testing.assert_allclose(oscillation_indicators(linex, cx), [1.0 / 18.0, 1.0 / 18.0], rtol=1e-12)
    assert oscillation(linex, cx) == pytest.approx(1.0 / 3.0)


def test_linear_data_oscillation_scales_with_h_to_the_fourth(square):
    coarse = build_complex(uniform_refine(square, 1))
    fine = build_complex(uniform_refine(square, 2))
    ratio = oscillation_indicators(linex, coarse).sum() / oscillation_indicators(linex, fine).sum()
    assert ratio == pytest.approx(16.0, rel=1e-9)


def test_step_data_oscillates_only_across_the_jump(square, square_fine_cx):
    osc = oscillation_indicators(signstep, square_fine_cx)
    x = square_fine_cx.mesh.element_coordinates[:, :, 0]
    crossing = (x.min(axis=1) < 0.5) & (x.max(axis=1) > 0.5)
    np.testing.assert_allclose(osc[~crossing], 0.0, atol=1e-24)

    assert oscillation_indicators(signstep, build_complex(square)).min() > 0.0


def test_fine_data_oscillation_is_exact(square):
    coarse = build_complex(uniform_refine(square, 1))
    fine = build_complex(uniform_refine(coarse.mesh, 1))
    rng = np.random.default_rng(7)
    f_h = FeFunction(2, rng.standard_normal(fine.mesh.num_triangles), fine.mesh)

    anc = ancestor_map(fine.mesh, coarse.mesh)
    areas = fine.mesh.areas
    means = np.bincount(anc, weights=areas * f_h.coefficients) / coarse.mesh.areas
    expected = coarse.mesh.diameters ** 2 * np.bincount(anc, weights=areas * (f_h.coefficients - means[anc]) ** 2)
    np.testing.assert_allclose(oscillation_indicators(f_h, coarse), expected, rtol=1e-12)

    f_H = FeFunction(2, rng.standard_normal(coarse.mesh.num_triangles), coarse.mesh)
    np.testing.assert_allclose(oscillation_indicators(prolong(f_H, fine), coarse), 0.0, atol=1e-24)


def test_estimator_decreases_under_refinement(square):
    values = []
    for level in (1, 2, 3):
        cx = build_complex(uniform_refine(square, level))
        values.append(estimate(solve_mixed(cx, sinsin), sinsin, cx).total_eta_sq)
    assert values[0] > values[1] > values[2]


def test_estimate_rejects_solution_from_another_mesh(square):
    cx = build_complex(uniform_refine(square, 1))
    other = build_complex(uniform_refine(square, 2))
    sol = solve_mixed(cx, sinsin)
    with pytest.raises(MeshError):
        estimate(sol, sinsin, other)


def test_coarse_flux_is_prolonged(square):
    cx_H = build_complex(uniform_refine(square, 1))
    cx_h = build_complex(uniform_refine(cx_H.mesh, 1))
    sigma_H = solve_mixed(cx_H, sinsin).sigma
    direct = estimate_field(sigma_H, sinsin, cx_h)
    prolonged = estimate_field(prolong(sigma_H, cx_h), sinsin, cx_h)
    np.testing.assert_allclose(direct.eta_sq, prolonged.eta_sq)


def test_eta_total_subsets(square_fine_cx):
    ind = estimate(solve_mixed(square_fine_cx, sinsin), sinsin, square_fine_cx)
    assert eta_total(ind) == pytest.approx(ind.eta_sq.sum())
    assert eta_total(ind, [0, 3]) == pytest.approx(ind.eta_sq[[0, 3]].sum())
    assert eta_total(ind, MarkedSet.of(ind.mesh, [])) == 0.0
    with pytest.raises(MeshError):
        eta_total(ind, [square_fine_cx.mesh.num_triangles])


def test_residual_equals_oscillation_after_a_solve(square_fine_cx):
    sol = solve_mixed(square_fine_cx, sinsin)
    ind = estimate(sol, sinsin, square_fine_cx)
    np.testing.assert_allclose(ind.residual, ind.osc_sq, rtol=1e-9, atol=1e-20)


def test_reference_triangle_oscillation():
    cx = build_complex(build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]]))
    assert oscillation_indicators(linex, cx)[0] == pytest.approx(2.0 / 36.0)


def test_oscillation_is_monotone_under_refinement(lshape):
    rng = np.random.default_rng(12)
    mesh = lshape
    previous = oscillation(sinsin, build_complex(mesh))
    for _ in range(4):
        mesh = bisect(mesh, rng.choice(mesh.num_triangles, size=max(1, mesh.num_triangles // 3), replace=False))
        current = oscillation(sinsin, build_complex(mesh))
        assert current <= previous * (1.0 + 1e-12)
        previous = current


def test_eta_total_is_additive(square_fine_cx):
    ind = estimate(solve_mixed(square_fine_cx, sinsin), sinsin, square_fine_cx)
    a, b = [0, 2, 4], [1, 7, 9]
    assert eta_total(ind, a + b) == pytest.approx(eta_total(ind, a) + eta_total(ind, b), rel=1e-14)
    assert eta_total(ind, range(ind.mesh.num_triangles)) == pytest.approx(ind.total_eta_sq)


def test_estimate_on_mesh_with_boundary(square):
    cx = build_complex(uniform_refine(square, 2))
    ind = estimate(solve_mixed(cx, sinsin), sinsin, cx)
    mesh = cx.mesh
    assert ind.eta_sq.shape == (mesh.num_triangles,)
    assert ind.edge_jump_sq.shape == (mesh.num_edges,)
    assert np.all(np.isfinite(ind.eta_sq)) and np.all(ind.eta_sq >= 0.0)
    assert ind.edge_jump_sq[mesh.boundary].max() > 0.0


def test_edge_jumps_match_pointwise_traces(square):
    mesh = uniform_refine(square, 2)
    cx = build_complex(mesh)
    rng = np.random.default_rng(5)
    sigma = FeFunction(1, rng.standard_normal(mesh.num_edges), mesh)
    ind = estimate_field(sigma, const1, cx)

    pts = edge_points(mesh)
    tangent = mesh.vertices[mesh.edges[:, 1]] - mesh.vertices[mesh.edges[:, 0]]
    unit = tangent / np.linalg.norm(tangent, axis=1)[:, None]
    for e in range(mesh.num_edges):
        left, right = mesh.edge_tris[e]
        jump = evaluate(sigma, np.full(3, left), pts[e]) @ unit[e]
        if right >= 0:
            jump = jump - evaluate(sigma, np.full(3, right), pts[e]) @ unit[e]
        expected = mesh.edge_lengths[e] * (jump ** 2) @ EDGE_WEIGHTS
        assert ind.edge_jump_sq[e] == pytest.approx(expected, rel=1e-10, abs=1e-14)
