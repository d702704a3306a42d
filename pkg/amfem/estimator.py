# --------------------------------------------------
# estimator.py
# --------------------------------------------------
# Element error indicators for a flux sigma_H on a
# mesh T with data f:
#
#   eta_T^2 = h_T   ||[[sigma_H . t]]||^2_{dT}  (jump)
#           + h_T^2 ||rot sigma_H||^2_T         (zero
#                                for RT0, kept live)
#           + h_T^2 ||f - div sigma_H||^2_T  (residual)
#
#   osc_T^2 = h_T^2 ||f - P_T f||^2_T
#
#   ✔ estimate / estimate_field -> ErrorIndicators
#   ✔ oscillation, on callables and on fine data
#   ✔ eta_total over any element subset
#
# Notes:
#   - on boundary edges the jump is the trace itself
#   - each element integrates its own edges with its
#     own h_T, so an interior edge counts once per side
#   - oscillation is never folded into eta
# --------------------------------------------------

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from .complex import (
    EDGE_WEIGHTS,
    QUAD_WEIGHTS,
    DataLike,
    DeRhamComplex,
    FeFunction,
    affine_field,
    canonical_interp_top,
    divergence,
    edge_points,
    l2_project,
    prolong,
    sample,
)
from .errors import MeshError
from .mesh import MarkedSet, Mesh, ancestor_map, is_refinement
from .solver import MixedSolution

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ErrorIndicators:
    mesh: Mesh
    jump: np.ndarray
    corot: np.ndarray
    residual: np.ndarray
    osc_sq: np.ndarray
    edge_jump_sq: np.ndarray

    @property
    def eta_sq(self) -> np.ndarray:
        return self.jump + self.corot + self.residual

    @property
    def generation(self) -> int:
        return self.mesh.level

    @property
    def total_eta_sq(self) -> float:
        return float(self.eta_sq.sum())

    @property
    def total_osc_sq(self) -> float:
        return float(self.osc_sq.sum())


def _is_fine_data(f, cx: DeRhamComplex) -> bool:
    return (
        isinstance(f, FeFunction)
        and f.degree == 2
        and f.mesh is not cx.mesh
        and is_refinement(f.mesh, cx.mesh)
    )


def _distance_to_constants_sq(f: DataLike, cx: DeRhamComplex, constants: np.ndarray) -> np.ndarray:
    """Per element ||f - c_T||^2_T; exact when f is piecewise constant on a finer mesh."""
    mesh = cx.mesh
    if _is_fine_data(f, cx):
        anc = ancestor_map(f.mesh, mesh)
        local = f.mesh.areas * (f.coefficients - constants[anc]) ** 2
        return np.bincount(anc, weights=local, minlength=mesh.num_triangles)
    values = sample(f, cx)
    return mesh.areas * (((values - constants[:, None]) ** 2) @ QUAD_WEIGHTS)


def oscillation_indicators(f: DataLike, cx: DeRhamComplex) -> np.ndarray:
    """osc_T^2 = h_T^2 ||f - P_T f||^2_T for every element."""
    if _is_fine_data(f, cx):
        means = canonical_interp_top(f, cx).coefficients
    else:
        means = l2_project(f, cx, 2).coefficients
    return cx.mesh.diameters ** 2 * _distance_to_constants_sq(f, cx, means)


def oscillation(f: DataLike, cx: DeRhamComplex) -> float:
    return float(np.sqrt(oscillation_indicators(f, cx).sum()))


def tangential_jumps_sq(sigma: FeFunction) -> np.ndarray:
    """Per edge |e| * mean over Gauss points of [[sigma . t]]^2."""
    mesh = sigma.mesh
    jac, offset = affine_field(sigma)
    pts = edge_points(mesh)
    tangent = mesh.vertices[mesh.edges[:, 1]] - mesh.vertices[mesh.edges[:, 0]]
    lengths = mesh.edge_lengths
    unit = tangent / lengths[:, None]

    def trace(elements, edges):
        vals = np.einsum("eij,egj->egi", jac[elements], pts[edges]) + offset[elements][:, None, :]
        return np.einsum("egi,ei->eg", vals, unit[edges])

    left = mesh.edge_tris[:, 0]
    right = mesh.edge_tris[:, 1]
    jump = trace(left, np.arange(mesh.num_edges))
    interior = np.flatnonzero(right >= 0)
    jump[interior] -= trace(right[interior], interior)
    return lengths * ((jump ** 2) @ EDGE_WEIGHTS)


def estimate_field(sigma: FeFunction, f: DataLike, cx: DeRhamComplex) -> ErrorIndicators:
    """
    Indicators of any degree-1 function against data f on the mesh of `cx`.
    A sigma living on a coarser mesh is prolonged first.
    """
    if sigma.degree != 1:
        raise ValueError("estimator expects a degree-1 flux")
    if sigma.mesh is not cx.mesh:
        sigma = prolong(sigma, cx)
    mesh = cx.mesh
    h = mesh.diameters

    edge_jump_sq = tangential_jumps_sq(sigma)
    jump = h * edge_jump_sq[mesh.tri_edges].sum(axis=1)

    jac, _ = affine_field(sigma)
    rot = jac[:, 1, 0] - jac[:, 0, 1]
    corot = h ** 2 * mesh.areas * rot ** 2

    residual = h ** 2 * _distance_to_constants_sq(f, cx, divergence(sigma))
    osc_sq = oscillation_indicators(f, cx)

    return ErrorIndicators(
        mesh=mesh,
        jump=jump,
        corot=corot,
        residual=residual,
        osc_sq=osc_sq,
        edge_jump_sq=edge_jump_sq,
    )


def estimate(solution: MixedSolution, f: DataLike, cx: DeRhamComplex) -> ErrorIndicators:
    """Indicators of a computed solution; the solution must live on `cx`."""
    if solution.complex.mesh is not cx.mesh:
        raise MeshError(
            f"solution is on mesh generation {solution.mesh.level}, indicators requested "
            f"on generation {cx.mesh.level}"
        )
    ind = estimate_field(solution.sigma, f, cx)
    logger.debug({
        "msg": "estimate",
        "cells": cx.mesh.num_triangles,
        "eta_sq": ind.total_eta_sq,
        "osc_sq": ind.total_osc_sq,
    })
    return ind


def eta_total(ind: ErrorIndicators, subset: Optional[Union[MarkedSet, Iterable[int]]] = None) -> float:
    """Sum of eta_T^2 over `subset` (all elements when None)."""
    if subset is None:
        return ind.total_eta_sq
    if isinstance(subset, MarkedSet):
        if subset.mesh is not ind.mesh:
            raise MeshError("subset refers to a different mesh")
        ids = subset.ids
    else:
        ids = MarkedSet.of(ind.mesh, subset).ids
    return float(ind.eta_sq[ids].sum())
