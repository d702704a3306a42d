# --------------------------------------------------
# test_hodge.py
# --------------------------------------------------
# Purpose:
#   Validate discrete harmonic forms and the Hodge
#   decomposition of edge functions.
#
# Expectations:
#   - dim of the harmonic space = number of holes
#   - the three parts are mass-orthogonal and sum to x
#   - subspace gaps are symmetric and below one, and
#     exactly zero between two bases of one space
#   - c_P bounds every field off ker D, is attained at
#     the lowest mode and scales with the domain
# --------------------------------------------------

import numpy as np
import pytest

from amfem.complex import FeFunction, build_complex, inner
from amfem.hodge import (
    SubspaceBasis,
    betti_number,
    d_laplacian_spectrum,
    harmonic_basis,
    hodge_decompose,
    poincare_constant,
    prolong_basis,
    subspace_gap,
)
from amfem.mesh import BUILTIN_BETTI, BUILTIN_DOMAINS, bisect, build_mesh, builtin_domain, uniform_refine


@pytest.mark.parametrize("name", BUILTIN_DOMAINS)
def test_harmonic_dimension_counts_holes(name):
    cx = build_complex(builtin_domain(name))
    basis = harmonic_basis(cx)
    assert basis.dim == BUILTIN_BETTI[name]
    assert betti_number(cx) == BUILTIN_BETTI[name]


def test_harmonic_basis_properties():
    cx = build_complex(builtin_domain("square_two_holes"))
    basis = harmonic_basis(cx)
    np.testing.assert_allclose(basis.gram(), np.eye(2), atol=1e-10)
    np.testing.assert_allclose(cx.D1 @ basis.vectors, 0.0, atol=1e-10)
    np.testing.assert_allclose(cx.D0.T @ (cx.M1 @ basis.vectors), 0.0, atol=1e-10)


def test_dimension_survives_refinement():
    mesh = uniform_refine(builtin_domain("square_one_hole"), 1)
    assert harmonic_basis(build_complex(mesh)).dim == 1


def test_hodge_decomposition_parts():
    cx = build_complex(builtin_domain("square_one_hole"))
    rng = np.random.default_rng(11)
    x = FeFunction(1, rng.standard_normal(cx.mesh.num_edges), cx.mesh)
    b, h, z = hodge_decompose(x, cx)

    np.testing.assert_allclose((b + h + z).coefficients, x.coefficients, atol=1e-10)
    scale = inner(x, x, cx)
    assert abs(inner(b, h, cx)) <= 1e-10 * scale
    assert abs(inner(b, z, cx)) <= 1e-10 * scale
    assert abs(inner(h, z, cx)) <= 1e-10 * scale
    np.testing.assert_allclose(cx.D1 @ b.coefficients, 0.0, atol=1e-10)
    np.testing.assert_allclose(cx.D1 @ h.coefficients, 0.0, atol=1e-10)
    assert np.linalg.norm(h.coefficients) > 0.0


def test_decomposition_of_exact_field_is_itself(square_fine_cx):
    rng = np.random.default_rng(2)
    v = rng.standard_normal(square_fine_cx.mesh.num_vertices)
    x = FeFunction(1, square_fine_cx.D0 @ v, square_fine_cx.mesh)
    b, h, z = hodge_decompose(x, square_fine_cx)
    np.testing.assert_allclose(b.coefficients, x.coefficients, atol=1e-9)
    np.testing.assert_allclose(h.coefficients, 0.0, atol=1e-12)
    np.testing.assert_allclose(z.coefficients, 0.0, atol=1e-9)


def test_euclidean_gap():
    A = SubspaceBasis.from_vectors(1, np.array([[1.0], [1.0]]))
    B = SubspaceBasis.from_vectors(1, np.array([[1.0], [0.0]]))
    assert subspace_gap(A, B) == pytest.approx(1.0 / np.sqrt(2.0))
    assert subspace_gap(B, A) == pytest.approx(1.0 / np.sqrt(2.0))
    assert subspace_gap(A, A) <= 1e-15


def test_gap_requires_matching_spaces():
    A = SubspaceBasis.from_vectors(1, np.eye(3)[:, :1])
    B = SubspaceBasis.from_vectors(1, np.eye(3)[:, :2])
    with pytest.raises(ValueError):
        subspace_gap(A, B)
    with pytest.raises(ValueError):
        subspace_gap(A, SubspaceBasis.from_vectors(1, np.eye(4)[:, :1]))


def test_nested_harmonic_gap():
    coarse = builtin_domain("square_one_hole")
    fine = bisect(coarse, np.arange(coarse.num_triangles))
    cx_H, cx_h = build_complex(coarse), build_complex(fine)
    h_H = prolong_basis(harmonic_basis(cx_H), cx_H, cx_h)
    h_h = harmonic_basis(cx_h)
    forward, backward = subspace_gap(h_h, h_H), subspace_gap(h_H, h_h)
    assert forward == pytest.approx(backward, abs=1e-8)
    assert forward < 0.9


def test_spectrum_ranks(square_fine_cx):
    mesh = square_fine_cx.mesh
    lam1, vec1 = d_laplacian_spectrum(square_fine_cx, 1)
    assert lam1.size == mesh.num_triangles
    assert vec1.shape == (mesh.num_edges, mesh.num_triangles)
    lam0, _ = d_laplacian_spectrum(square_fine_cx, 0)
    assert lam0.size == mesh.num_vertices - 1
    assert np.all(lam0 > 0)


def test_poincare_constants_are_finite(square_fine_cx):
    for degree in (0, 1):
        c = poincare_constant(square_fine_cx, degree)
        assert np.isfinite(c) and c > 1.0


def test_gap_between_two_bases_of_one_space_is_zero():
    cx = build_complex(uniform_refine(builtin_domain("square_two_holes"), 1))
    basis = harmonic_basis(cx)
    mixing = np.array([[2.0, 1.0], [-1.0, 3.0]])
    other = SubspaceBasis.from_vectors(1, basis.vectors @ mixing, cx.M1)
    assert subspace_gap(basis, other) <= 1e-12
    assert subspace_gap(other, basis) <= 1e-12


def test_harmonic_field_decomposes_into_itself():
    cx = build_complex(uniform_refine(builtin_domain("square_one_hole"), 1))
    basis = harmonic_basis(cx)
    x = FeFunction(1, basis.vectors[:, 0], cx.mesh)
    b, h, z = hodge_decompose(x, cx, basis)
    np.testing.assert_allclose(b.coefficients, 0.0, atol=1e-9)
    np.testing.assert_allclose(z.coefficients, 0.0, atol=1e-9)
    np.testing.assert_allclose(h.coefficients, x.coefficients, atol=1e-9)


# --------------------------------------------------
# Poincare constants
# --------------------------------------------------


def _graph_and_derivative_norms(cx, degree, v):
    D = cx.derivative(degree)
    dv = D @ v
    d_sq = float(dv @ (cx.mass(degree + 1) @ dv))
    return float(v @ (cx.mass(degree) @ v)) + d_sq, d_sq


@pytest.mark.parametrize("degree", [0, 1])
def test_poincare_bound_and_equality(square_fine_cx, degree):
    c = poincare_constant(square_fine_cx, degree)
    lam, vecs = d_laplacian_spectrum(square_fine_cx, degree)
    rng = np.random.default_rng(degree)
    for _ in range(5):
        v = vecs @ rng.standard_normal(lam.size)
        graph_sq, d_sq = _graph_and_derivative_norms(square_fine_cx, degree, v)
        assert graph_sq <= c ** 2 * d_sq * (1.0 + 1e-10)

    graph_sq, d_sq = _graph_and_derivative_norms(square_fine_cx, degree, vecs[:, np.argmin(lam)])
    assert graph_sq == pytest.approx(c ** 2 * d_sq, rel=1e-8)


@pytest.mark.parametrize("degree", [0, 1])
def test_poincare_constant_scales_with_the_domain(square_fine, degree):
    doubled = build_mesh(2.0 * square_fine.vertices, square_fine.triangles, square_fine.refinement_edge)
    c_one = poincare_constant(build_complex(square_fine), degree)
    c_two = poincare_constant(build_complex(doubled), degree)
    assert c_two ** 2 - 1.0 == pytest.approx(4.0 * (c_one ** 2 - 1.0), rel=1e-8)


@pytest.mark.parametrize("degree", [0, 1])
def test_poincare_constant_stabilizes_under_refinement(square, degree):
    values = [poincare_constant(build_complex(uniform_refine(square, k)), degree) for k in (2, 3)]
    assert values[1] == pytest.approx(values[0], rel=0.05)
