# --------------------------------------------------
# verification.py
# --------------------------------------------------
# Measurements on one nested pair (coarse T_H, fine
# T_h) of meshes:
#
#   ✔ quasi-orthogonality
#   ✔ discrete stability
#   ✔ upper bounds and efficiency
#   ✔ estimator continuity
#
# Each function solves what it needs and returns a
# small report; `as_dict(prefix)` gives flat, dotted
# keys for the JSON report. Nothing here raises on a
# failed inequality: the run matrices in `suites`
# decide what has to hold.
#
# The exact flux sigma is replaced by a reference
# solve on extra uniform levels of the fine mesh,
# shared between pairs when the caller passes one in.
# --------------------------------------------------

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from .adapt import reference_solution
from .complex import (
    DataLike,
    DeRhamComplex,
    FeFunction,
    build_complex,
    canonical_interp_top,
    element_norms_sq,
    norm_sq,
    prolong,
)
from .errors import NotNestedError
from .estimator import estimate, estimate_field, oscillation_indicators
from .mesh import Mesh, ancestor_map, is_refinement
from .solver import DataVariants, MixedSolution, solve_mixed, solve_with_data_variants

# below this, a difference of discrete fields is a rounding artefact
_ZERO = 1e-26


def _ratio(numerator: float, denominator: float) -> float:
    if denominator > _ZERO:
        return numerator / denominator
    return 0.0 if numerator <= _ZERO else math.inf


@dataclass(frozen=True, eq=False)
class NestedPair:
    """Complexes and data-variant solves of one nested pair, computed once."""

    coarse: DeRhamComplex
    fine: DeRhamComplex
    f: object
    variants: DataVariants

    @classmethod
    def build(cls, f: DataLike, coarse: Mesh, fine: Mesh) -> "NestedPair":
        if not is_refinement(fine, coarse):
            raise NotNestedError("fine mesh is not a refinement of the coarse mesh")
        cx_H = build_complex(coarse)
        cx_h = cx_H if fine is coarse else build_complex(fine)
        return cls(coarse=cx_H, fine=cx_h, f=f, variants=solve_with_data_variants(cx_h, cx_H, f))

    @property
    def same_mesh(self) -> bool:
        return self.fine.mesh is self.coarse.mesh

    def diff_sq(self, a: FeFunction, b: FeFunction, cx: DeRhamComplex) -> float:
        return norm_sq(prolong(a, cx) - prolong(b, cx), cx)

    def osc_fine_data_sq(self) -> float:
        """osc^2(f_h, T_H), exact for the piecewise-constant fine data."""
        return float(oscillation_indicators(self.variants.sigma_h.f_h, self.coarse).sum())


Reference = Tuple[DeRhamComplex, MixedSolution]


def _reference(pair: NestedPair, reference: Optional[Reference]) -> Reference:
    if reference is None:
        return reference_solution(pair.fine.mesh, pair.f, 2)
    ref_cx, _ = reference
    ancestor_map(ref_cx.mesh, pair.fine.mesh)
    return reference


def _prefixed(report, prefix: str) -> dict:
    return {f"{prefix}.{key}": value for key, value in asdict(report).items()}


# --------------------------------------------------
# Quasi-orthogonality
# --------------------------------------------------


@dataclass(frozen=True)
class QuasiOrthogonalityReport:
    normalized_inner: float
    lhs: float
    rhs_without_osc: float
    osc_sq: float
    delta: float
    c0_required: float
    c0: float
    holds: bool

    def as_dict(self, prefix: str) -> dict:
        return _prefixed(self, prefix)


def verify_quasi_orthogonality(f: DataLike, coarse: Mesh, fine: Mesh, *,
                               reference: Optional[Reference] = None, delta: float = 0.5,
                               c0: Optional[float] = None,
                               pair: Optional[NestedPair] = None) -> QuasiOrthogonalityReport:
    """
    (a) |<s - s_h, s~_h - s_H>| / (|s - s_h| |s~_h - s_H|)
    (b) (1-delta)|s - s_h|^2 <= |s - s_H|^2 - |s_h - s_H|^2 + (C0/delta) osc^2(f_h, T_H)
    with s the reference flux. `c0_required` is the smallest C0 making (b) hold.
    """
    pair = pair or NestedPair.build(f, coarse, fine)
    if pair.same_mesh:
        return QuasiOrthogonalityReport(0.0, 0.0, 0.0, 0.0, delta, 0.0, c0 or 0.0, True)

    ref_cx, ref = _reference(pair, reference)
    v = pair.variants
    s_h = prolong(v.sigma_h.sigma, ref_cx)
    s_t = prolong(v.sigma_tilde_h.sigma, ref_cx)
    s_H = prolong(v.sigma_H.sigma, ref_cx)

    err_h = ref.sigma - s_h
    data_shift = s_t - s_H
    norm_err = math.sqrt(norm_sq(err_h, ref_cx))
    norm_shift = math.sqrt(norm_sq(data_shift, ref_cx))
    cross = float(err_h.coefficients @ (ref_cx.M1 @ data_shift.coefficients))
    scale = norm_err * norm_shift
    normalized = abs(cross) / scale if scale > math.sqrt(_ZERO) else 0.0

    lhs = (1.0 - delta) * norm_err ** 2
    rhs = norm_sq(ref.sigma - s_H, ref_cx) - norm_sq(s_h - s_H, ref_cx)
    osc_sq = pair.osc_fine_data_sq()
    c0_required = max(0.0, delta * _ratio(lhs - rhs, osc_sq)) if lhs > rhs else 0.0
    used = c0_required if c0 is None else c0
    holds = lhs <= rhs + (used / delta) * osc_sq + 1e-12 * max(lhs, 1e-300)

    return QuasiOrthogonalityReport(
        normalized_inner=normalized,
        lhs=lhs,
        rhs_without_osc=rhs,
        osc_sq=osc_sq,
        delta=delta,
        c0_required=c0_required,
        c0=used,
        holds=bool(holds),
    )


# --------------------------------------------------
# Discrete stability
# --------------------------------------------------


@dataclass(frozen=True)
class StabilityReport:
    diff: float
    osc: float
    ratio: float
    umpu_max_ratio: float

    def as_dict(self, prefix: str) -> dict:
        return _prefixed(self, prefix)


def _umpu_max_ratio(pair: NestedPair) -> float:
    """max over coarse T of |u_h - I_H u_h|_T / (h_T |sigma_h|_T)."""
    u_h = pair.variants.sigma_h.u
    sigma_h = pair.variants.sigma_h.sigma
    fine, coarse = pair.fine, pair.coarse
    anc = ancestor_map(fine.mesh, coarse.mesh)
    means = canonical_interp_top(u_h, coarse).coefficients
    nt = coarse.mesh.num_triangles
    num = np.bincount(anc, weights=fine.mesh.areas * (u_h.coefficients - means[anc]) ** 2, minlength=nt)
    den = np.bincount(anc, weights=element_norms_sq(sigma_h, fine), minlength=nt)
    h = coarse.mesh.diameters
    usable = den > _ZERO
    if not usable.any():
        return 0.0
    return float((np.sqrt(num[usable]) / (h[usable] * np.sqrt(den[usable]))).max())


def verify_discrete_stability(f: DataLike, coarse: Mesh, fine: Mesh, *,
                              pair: Optional[NestedPair] = None) -> StabilityReport:
    """|sigma_h - sigma~_h| against osc(f_h, T_H); all quantities are discrete."""
    pair = pair or NestedPair.build(f, coarse, fine)
    v = pair.variants
    diff = math.sqrt(norm_sq(v.sigma_h.sigma - v.sigma_tilde_h.sigma, pair.fine))
    osc = math.sqrt(pair.osc_fine_data_sq())
    return StabilityReport(
        diff=diff,
        osc=osc,
        ratio=_ratio(diff, osc) if diff > 1e-13 else 0.0,
        umpu_max_ratio=0.0 if pair.same_mesh else _umpu_max_ratio(pair),
    )


# --------------------------------------------------
# Upper and lower bounds
# --------------------------------------------------


@dataclass(frozen=True)
class BoundsReport:
    eta_sq_H: float
    dub_ratio: float
    cub_ratio: float
    efficiency_ratio: float
    contS_ratio: float
    zero_estimator_exact: bool

    def as_dict(self, prefix: str) -> dict:
        return _prefixed(self, prefix)


def verify_upper_bounds(f: DataLike, coarse: Mesh, fine: Mesh, *,
                        reference: Optional[Reference] = None,
                        pair: Optional[NestedPair] = None) -> BoundsReport:
    """
    dub_ratio        |sigma_h - sigma_H|^2 / eta^2(sigma_H, T_H)     exact
    cub_ratio        |sigma - sigma_H|^2 / eta^2(sigma_H, T_H)       reference flux
    efficiency_ratio eta^2 / (|sigma - sigma_H|^2 + osc^2(f, T_H))
    contS_ratio      |sigma - sigma~| / osc(f, T_h), sigma~ solved with data f_h
    """
    pair = pair or NestedPair.build(f, coarse, fine)
    v = pair.variants
    eta_sq = estimate(v.sigma_H, f, pair.coarse).total_eta_sq
    dub_diff = pair.diff_sq(v.sigma_h.sigma, v.sigma_H.sigma, pair.fine)

    zero_exact = True
    if eta_sq <= _ZERO:
        zero_exact = dub_diff <= 1e-20

    ref_cx, ref = _reference(pair, reference)
    cub_diff = norm_sq(ref.sigma - prolong(v.sigma_H.sigma, ref_cx), ref_cx)
    osc_H = float(oscillation_indicators(f, pair.coarse).sum())

    sigma_tilde = solve_mixed(ref_cx, prolong(v.sigma_h.f_h, ref_cx))
    contS_diff = math.sqrt(norm_sq(ref.sigma - sigma_tilde.sigma, ref_cx))
    osc_h = math.sqrt(float(oscillation_indicators(f, pair.fine).sum()))

    return BoundsReport(
        eta_sq_H=eta_sq,
        dub_ratio=_ratio(dub_diff, eta_sq),
        cub_ratio=_ratio(cub_diff, eta_sq),
        efficiency_ratio=_ratio(eta_sq, cub_diff + osc_H),
        contS_ratio=_ratio(contS_diff, osc_h) if contS_diff > 1e-13 else 0.0,
        zero_estimator_exact=bool(zero_exact),
    )


# --------------------------------------------------
# Estimator continuity
# --------------------------------------------------


@dataclass(frozen=True)
class ContinuityReport:
    eta_sq_fine: float
    eta_sq_coarse_on_fine: float
    rhs: float
    beta_max: Optional[float]
    beta: Optional[float]
    holds: bool

    def as_dict(self, prefix: str) -> dict:
        return _prefixed(self, prefix)


def verify_estimator_continuity(f: DataLike, coarse: Mesh, fine: Mesh, *,
                                beta: Optional[float] = None,
                                pair: Optional[NestedPair] = None) -> ContinuityReport:
    """
    beta (eta^2(sigma_h, T_h) - eta^2(sigma_H, T_h)) <= |sigma_h - sigma_H|^2 + osc^2(f_h, T_H)

    `beta_max` is the largest beta for which the pair satisfies the inequality
    (None when the left difference is not positive, i.e. every beta works).
    """
    pair = pair or NestedPair.build(f, coarse, fine)
    v = pair.variants
    fine_cx = pair.fine
    eta_fine = estimate_field(v.sigma_h.sigma, f, fine_cx).total_eta_sq
    eta_coarse = estimate_field(prolong(v.sigma_H.sigma, fine_cx), f, fine_cx).total_eta_sq
    rhs = pair.diff_sq(v.sigma_h.sigma, v.sigma_H.sigma, fine_cx) + pair.osc_fine_data_sq()

    difference = eta_fine - eta_coarse
    beta_max = rhs / difference if difference > 0.0 else None
    if beta is None:
        holds = True
    else:
        holds = beta * difference <= rhs * (1.0 + 1e-10) + 1e-300

    return ContinuityReport(
        eta_sq_fine=eta_fine,
        eta_sq_coarse_on_fine=eta_coarse,
        rhs=rhs,
        beta_max=beta_max,
        beta=beta,
        holds=bool(holds),
    )
