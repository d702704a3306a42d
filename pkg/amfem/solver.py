# --------------------------------------------------
# solver.py
# --------------------------------------------------
# Mixed solve of the top-degree Hodge-Laplace problem:
#
#   find (sigma, u) in RT0 x P0 with
#     <sigma, tau> - <u, div tau> = 0        all tau
#     <div sigma, v>              = <f_h, v> all v
#
# assembled as the symmetric indefinite system
#
#   [ M1   -B^T ] [sigma]   [    0     ]
#   [ -B     0  ] [  u  ] = [ -M2 f_h  ],  B = M2 D1
#
#   ✔ solve_mixed -> MixedSolution + SolveDiagnostics
#   ✔ solve_with_data_variants for a nested pair
#
# Notes:
#   - no harmonic block: the top-degree space has no
#     harmonic forms
#   - the sparse path is a general LU (SuperLU, partial
#     pivoting) plus one step of iterative refinement;
#     it does not use the symmetry
#   - only the dense fallback does, via assume_a="sym"
#     and an LDL^T for the pivot diagnostics
#   - residuals of both equations are checked after
#     every solve
# --------------------------------------------------

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .complex import DataLike, DeRhamComplex, FeFunction, l2_project, prolong
from .config import settings
from .errors import SolverError
from .mesh import ancestor_map
from .metrics import metrics

logger = logging.getLogger(__name__)

# a residual this far off means the factorization is broken, not inexact
_GROSS_RESIDUAL = 1e-6


@dataclass(frozen=True)
class SolveDiagnostics:
    method: str
    unknowns: int
    constraint_residual: float
    first_residual: float
    min_pivot: float
    max_pivot: float
    seconds: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class MixedSolution:
    sigma: FeFunction
    u: FeFunction
    f_h: FeFunction
    complex: DeRhamComplex
    diagnostics: SolveDiagnostics

    @property
    def p(self):
        """Harmonic multiplier; always absent in top degree."""
        return None

    @property
    def mesh(self):
        return self.complex.mesh


@dataclass(frozen=True, eq=False)
class DataVariants:
    """Fine solve with fine data, fine solve with coarse data, coarse solve."""

    sigma_h: MixedSolution
    sigma_tilde_h: MixedSolution
    sigma_H: MixedSolution


def project_data(f: DataLike, cx: DeRhamComplex) -> FeFunction:
    """f_h = P_h f, the piecewise-constant projection used as right-hand side."""
    if isinstance(f, FeFunction):
        if f.degree != 2:
            raise SolverError(f"data must be a degree-2 function, got degree {f.degree}")
        if f.mesh is cx.mesh:
            return f
    return l2_project(f, cx, 2)


def _factor_and_solve(K: sp.csr_matrix, rhs: np.ndarray):
    n = K.shape[0]
    try:
        lu = splu(K.tocsc())
        x = lu.solve(rhs)
        x = x + lu.solve(rhs - K @ x)
        pivots = np.abs(lu.U.diagonal())
        return x, "splu", pivots
    except RuntimeError as exc:
        if n > settings.DENSE_SOLVE_LIMIT:
            raise SolverError(f"sparse factorization failed for {n} unknowns: {exc}") from exc
        logger.warning({"msg": "splu_failed_dense_fallback", "unknowns": n, "error": str(exc)})

    dense = K.toarray()
    try:
        x = scipy.linalg.solve(dense, rhs, assume_a="sym")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"dense symmetric factorization failed: {exc}") from exc
    _, d, _ = scipy.linalg.ldl(dense)
    return x, "dense_sym", np.abs(np.diag(d))


def solve_mixed(cx: DeRhamComplex, f: DataLike) -> MixedSolution:
    """Assemble and solve the mixed system for data f (callable or degree-2 function)."""
    start = time.perf_counter()
    f_h = project_data(f, cx)
    ne, nt = cx.mesh.num_edges, cx.mesh.num_triangles
    if f_h.coefficients.shape != (nt,):
        raise SolverError("data dimension does not match the mesh")

    B = (cx.M2 @ cx.D1).tocsr()
    K = sp.bmat([[cx.M1, -B.T], [-B, None]], format="csr")
    rhs = np.concatenate([np.zeros(ne), -(cx.M2 @ f_h.coefficients)])

    x, method, pivots = _factor_and_solve(K, rhs)
    sigma = FeFunction(1, x[:ne], cx.mesh)
    u = FeFunction(2, x[ne:], cx.mesh)

    scale_f = max(1.0, float(np.abs(f_h.coefficients).max(initial=0.0)))
    constraint = float(np.abs(cx.D1 @ sigma.coefficients - f_h.coefficients).max(initial=0.0)) / scale_f
    first = cx.M1 @ sigma.coefficients - cx.D1.T @ (cx.M2 @ u.coefficients)
    scale = max(1.0, float(np.linalg.norm(sigma.coefficients) + np.linalg.norm(u.coefficients)))
    first_residual = float(np.linalg.norm(first)) / scale

    elapsed = time.perf_counter() - start
    diagnostics = SolveDiagnostics(
        method=method,
        unknowns=int(K.shape[0]),
        constraint_residual=constraint,
        first_residual=first_residual,
        min_pivot=float(pivots.min()) if pivots.size else 0.0,
        max_pivot=float(pivots.max()) if pivots.size else 0.0,
        seconds=elapsed,
    )

    metrics.inc_solve(method)
    metrics.observe_latency(elapsed * 1000.0)
    logger.debug({"msg": "solve_mixed", **diagnostics.as_dict()})

    if not np.isfinite(x).all() or constraint > _GROSS_RESIDUAL or first_residual > _GROSS_RESIDUAL:
        raise SolverError(
            f"mixed solve residuals out of range (constraint {constraint:.3g}, first {first_residual:.3g})"
        )
    return MixedSolution(sigma=sigma, u=u, f_h=f_h, complex=cx, diagnostics=diagnostics)


def solve_with_data_variants(cx_h: DeRhamComplex, cx_H: DeRhamComplex, f: DataLike,
                             coarse_solution: Optional[MixedSolution] = None) -> DataVariants:
    """
    sigma_h:       fine solve with P_h f
    sigma_tilde_h: fine solve with P_H f (written on the fine mesh)
    sigma_H:       coarse solve with P_H f
    """
    ancestor_map(cx_h.mesh, cx_H.mesh)
    if cx_h is cx_H or cx_h.mesh is cx_H.mesh:
        sol = solve_mixed(cx_h, f)
        return DataVariants(sol, sol, sol)

    sol_H = coarse_solution if coarse_solution is not None else solve_mixed(cx_H, f)
    sol_h = solve_mixed(cx_h, f)
    sol_tilde = solve_mixed(cx_h, prolong(sol_H.f_h, cx_h))
    return DataVariants(sigma_h=sol_h, sigma_tilde_h=sol_tilde, sigma_H=sol_H)
