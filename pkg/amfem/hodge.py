# --------------------------------------------------
# hodge.py
# --------------------------------------------------
# Discrete Hodge theory of RT0 fields:
#
#   ✔ harmonic bases and the Betti number
#   ✔ Hodge decomposition x = b + h + z
#   ✔ subspace gaps between harmonic spaces
#   ✔ discrete Poincare constants
#
# Dense linear algebra throughout: these meshes have
# at most a few thousand edges. Integer quantities
# such as the harmonic dimension come from rank
# decisions at a relative singular-value threshold of
# RANK_RTOL.
# --------------------------------------------------

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .complex import DeRhamComplex, FeFunction, prolong

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Columns of `vectors` are mass-orthonormal coefficient vectors of one space."""

    degree: int
    vectors: np.ndarray
    mass: Optional[sp.spmatrix] = None

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def ambient_dim(self) -> int:
        return int(self.vectors.shape[0])

    def gram(self) -> np.ndarray:
        return self.vectors.T @ _apply(self.mass, self.vectors)

    @classmethod
    def from_vectors(cls, degree: int, vectors: np.ndarray, mass=None) -> "SubspaceBasis":
        return cls(degree=degree, vectors=orthonormalize(np.asarray(vectors, dtype=float), mass), mass=mass)


def _apply(mass, vectors: np.ndarray) -> np.ndarray:
    return vectors if mass is None else mass @ vectors


def orthonormalize(vectors: np.ndarray, mass=None) -> np.ndarray:
    """Mass-orthonormal basis of span(vectors) via a Cholesky factor of the Gram matrix."""
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    if vectors.shape[1] == 0:
        return vectors
    gram = vectors.T @ _apply(mass, vectors)
    gram = 0.5 * (gram + gram.T)
    L = scipy.linalg.cholesky(gram, lower=True)
    return scipy.linalg.solve_triangular(L, vectors.T, lower=True).T


def numerical_rank(matrix: np.ndarray) -> int:
    if min(matrix.shape) == 0:
        return 0
    s = scipy.linalg.svd(matrix, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int((s > RANK_RTOL * s[0]).sum())


# --------------------------------------------------
# Harmonic forms
# --------------------------------------------------


def harmonic_basis(cx: DeRhamComplex, degree: int = 1) -> SubspaceBasis:
    """M1-orthonormal basis of {x : D1 x = 0 and D0^T M1 x = 0}."""
    if degree != 1:
        raise ValueError("harmonic forms are computed for degree 1 only")
    stacked = sp.vstack([cx.M2 @ cx.D1, cx.D0.T @ cx.M1]).toarray()
    kernel = scipy.linalg.null_space(stacked, rcond=RANK_RTOL)
    basis = SubspaceBasis.from_vectors(1, kernel, cx.M1)
    logger.debug({"msg": "harmonic_basis", "edges": cx.mesh.num_edges, "dim": basis.dim})
    return basis


def betti_number(cx: DeRhamComplex) -> int:
    """dim ker D1 - rank D0, computed from incidence ranks."""
    rank_d1 = numerical_rank(cx.D1.toarray())
    rank_d0 = numerical_rank(cx.D0.toarray())
    return cx.mesh.num_edges - rank_d1 - rank_d0


def prolong_basis(basis: SubspaceBasis, coarse: DeRhamComplex, fine: DeRhamComplex) -> SubspaceBasis:
    """Write a coarse basis in the fine space and re-orthonormalize in the fine mass."""
    columns = [
        prolong(FeFunction(basis.degree, basis.vectors[:, j], coarse.mesh), fine).coefficients
        for j in range(basis.dim)
    ]
    vectors = np.column_stack(columns) if columns else np.zeros((fine.dofs[basis.degree], 0))
    return SubspaceBasis.from_vectors(basis.degree, vectors, fine.mass(basis.degree))


# --------------------------------------------------
# Decomposition
# --------------------------------------------------


def _exact_part(x: np.ndarray, cx: DeRhamComplex) -> np.ndarray:
    """M1-projection of x onto range(D0), pinning one vertex per connected component."""
    D0, M1 = cx.D0, cx.M1
    stiffness = (D0.T @ M1 @ D0).tocsr()
    rhs = D0.T @ (M1 @ x)

    adjacency = sp.coo_matrix(
        (np.ones(cx.mesh.num_edges), (cx.mesh.edges[:, 0], cx.mesh.edges[:, 1])),
        shape=(cx.mesh.num_vertices,) * 2,
    )
    _, labels = connected_components(adjacency, directed=False)
    _, pinned = np.unique(labels, return_index=True)
    free = np.setdiff1d(np.arange(cx.mesh.num_vertices), pinned)

    phi = np.zeros(cx.mesh.num_vertices)
    if free.size:
        reduced = stiffness[free][:, free].tocsc()
        phi[free] = splu(reduced).solve(rhs[free])
    return D0 @ phi


def hodge_decompose(x: FeFunction, cx: DeRhamComplex,
                    harmonics: Optional[SubspaceBasis] = None) -> Tuple[FeFunction, FeFunction, FeFunction]:
    """Split a degree-1 function into exact, harmonic and ker(D1)-orthogonal parts."""
    if x.degree != 1 or x.mesh is not cx.mesh:
        raise ValueError("hodge_decompose expects a degree-1 function on the complex's mesh")
    if harmonics is None:
        harmonics = harmonic_basis(cx)

    b = _exact_part(x.coefficients, cx)
    rest = x.coefficients - b
    Q = harmonics.vectors
    h = Q @ (Q.T @ (cx.M1 @ rest)) if harmonics.dim else np.zeros_like(rest)
    z = rest - h
    mesh = cx.mesh
    return FeFunction(1, b, mesh), FeFunction(1, h, mesh), FeFunction(1, z, mesh)


# --------------------------------------------------
# Gaps and Poincare constants
# --------------------------------------------------


def subspace_gap(A: SubspaceBasis, B: SubspaceBasis) -> float:
    """
    delta(A, B) = sup_{x in A, |x| = 1} |x - P_B x|, the largest M-norm singular
    value of the residual R = A - B (B^T M A) for orthonormal bases.
    """
    if A.ambient_dim != B.ambient_dim:
        raise ValueError("subspaces live in different spaces; prolong the coarse basis first")
    if A.dim != B.dim:
        raise ValueError(f"gap is only symmetric for equal dimensions ({A.dim} vs {B.dim})")
    if A.dim == 0:
        return 0.0
    residual = A.vectors - B.vectors @ (B.vectors.T @ _apply(A.mass, A.vectors))
    gram = residual.T @ _apply(A.mass, residual)
    top = float(scipy.linalg.eigvalsh(0.5 * (gram + gram.T)).max())
    return float(np.sqrt(max(0.0, top)))


def d_laplacian_spectrum(cx: DeRhamComplex, degree: int):
    """
    Non-zero generalized eigenpairs of D^T M' D v = lam M v for D = D0 or D1;
    the eigenvectors span the orthogonal complement of ker D.
    """
    if degree not in (0, 1):
        raise ValueError("degree must be 0 or 1")
    D = cx.derivative(degree)
    A = (D.T @ cx.mass(degree + 1) @ D).toarray()
    M = cx.mass(degree).toarray()
    lam, vecs = scipy.linalg.eigh(0.5 * (A + A.T), 0.5 * (M + M.T))
    keep = lam > RANK_RTOL * max(float(lam.max()), 0.0)
    return lam[keep], vecs[:, keep]


def poincare_constant(cx: DeRhamComplex, degree: int) -> float:
    """Discrete c_P with |v|_V <= c_P |D v| on the complement of ker D, c_P^2 = 1 + 1/lam_min."""
    lam, _ = d_laplacian_spectrum(cx, degree)
    return float(np.sqrt(1.0 + 1.0 / lam.min()))
