# --------------------------------------------------
# suites.py
# --------------------------------------------------
# Run matrices behind `amfem verify --suite ...`.
#
# Each suite fills a flat report (dotted keys) and
# records named assertions. Constants the theory only
# claims to exist are calibrated on the coarsest
# instance of a matrix; the assertions then hold them
# on the rest.
#
# Standard nested matrix:
#   - unit square, smooth `sinsin` data
#   - `levels + 1` uniform levels, starting from one
#     uniform level
#   - one reference solve `reference_depth` levels
#     above the finest mesh, shared by all pairs
# --------------------------------------------------

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from .adapt import (
    HISTORY_COLUMNS,
    amfem,
    amfem_optimal,
    approx_data,
    comparison_report,
    contraction_report,
    dorfler_select,
    fit_rate,
    fit_slope,
    reference_solution,
)
from .complex import (
    FeFunction,
    build_complex,
    canonical_interp_rt,
    canonical_interp_top,
    l2_error,
    prolong,
)
from .errors import VerificationError
from .hodge import (
    betti_number,
    harmonic_basis,
    hodge_decompose,
    poincare_constant,
    prolong_basis,
    subspace_gap,
)
from .mesh import BUILTIN_BETTI, BUILTIN_DOMAINS, bisect, builtin_domain, check_conformity, uniform_refine
from .problems import const1, linex, signstep, sinsin, sinsin_flux
from .schemas import RunConfig
from .solver import solve_mixed
from .verification import (
    NestedPair,
    verify_discrete_stability,
    verify_estimator_continuity,
    verify_quasi_orthogonality,
    verify_upper_bounds,
)

logger = logging.getLogger(__name__)


@dataclass
class SuiteRun:
    """Collects report values and named assertion outcomes."""

    report: Dict[str, object] = field(default_factory=dict)
    failures: List[VerificationError] = field(default_factory=list)

    def record(self, values: Dict[str, object]) -> None:
        self.report.update(values)

    def check(self, name: str, condition: bool, detail: str = "") -> bool:
        ok = bool(condition)
        self.report[f"assert.{name}"] = ok
        if not ok:
            self.failures.append(VerificationError(name, detail))
            logger.error({"msg": "assertion_failed", "name": name, "detail": detail})
        return ok

    @property
    def passed(self) -> bool:
        return not self.failures


def drift(values) -> float:
    """max / min of positive values; 1 for fewer than two values."""
    arr = np.asarray([v for v in values if v is not None and np.isfinite(v) and v > 0.0])
    if arr.size < 2:
        return 1.0
    return float(arr.max() / arr.min())


def uniform_hierarchy(mesh0, count: int, start: int = 1) -> list:
    """`count` nested meshes, each one uniform level above the previous."""
    mesh = uniform_refine(mesh0, start)
    meshes = [mesh]
    for _ in range(count - 1):
        mesh = uniform_refine(mesh, 1)
        meshes.append(mesh)
    return meshes


class _Matrix:
    """Shared nested pairs and reference solve for the square / sinsin matrix."""

    def __init__(self, cfg: RunConfig):
        self.f = sinsin
        self.meshes = uniform_hierarchy(builtin_domain("square"), cfg.levels + 1)
        self.pairs = [NestedPair.build(self.f, H, h) for H, h in zip(self.meshes, self.meshes[1:])]
        self._reference = None
        self.reference_depth = cfg.reference_depth

    @property
    def reference(self):
        if self._reference is None:
            self._reference = reference_solution(self.meshes[-1], self.f, self.reference_depth)
        return self._reference


# --------------------------------------------------
# Nested-pair suites
# --------------------------------------------------


def suite_stability(run: SuiteRun, cfg: RunConfig, matrix: _Matrix) -> None:
    reports = [verify_discrete_stability(matrix.f, p.coarse.mesh, p.fine.mesh, pair=p) for p in matrix.pairs]
    for i, rep in enumerate(reports):
        run.record(rep.as_dict(f"stability.pair{i}"))
    ratios = [r.ratio for r in reports]
    umpu = [r.umpu_max_ratio for r in reports]
    run.record({"stability.ratio_drift": drift(ratios), "stability.umpu_drift": drift(umpu)})
    run.check("stability.ratio_drift", drift(ratios) <= 2.0, f"ratios {ratios}")
    run.check("stability.umpu_bounded", all(np.isfinite(umpu)) and drift(umpu) <= 2.0, f"umpu ratios {umpu}")


def suite_quasi(run: SuiteRun, cfg: RunConfig, matrix: _Matrix) -> None:
    delta = 0.5
    reports = [
        verify_quasi_orthogonality(matrix.f, p.coarse.mesh, p.fine.mesh, reference=matrix.reference,
                                   delta=delta, pair=p)
        for p in matrix.pairs
    ]
    c0 = reports[0].c0_required
    run.record({"quasi.c0_calibrated": c0,
                "quasi.c0_required_max": max(r.c0_required for r in reports)})
    for i, pair in enumerate(matrix.pairs):
        rep = verify_quasi_orthogonality(matrix.f, None, None, reference=matrix.reference,
                                         delta=delta, c0=c0, pair=pair)
        run.record(rep.as_dict(f"quasi.pair{i}"))
        run.check(f"quasi.pair{i}.normalized_inner", rep.normalized_inner <= 0.05,
                  f"normalized inner product {rep.normalized_inner:.3g}")
        run.check(f"quasi.pair{i}.inequality", rep.holds, f"required C0 {rep.c0_required:.3g} > {c0:.3g}")


def suite_bounds(run: SuiteRun, cfg: RunConfig, matrix: _Matrix) -> None:
    reports = [
        verify_upper_bounds(matrix.f, p.coarse.mesh, p.fine.mesh, reference=matrix.reference, pair=p)
        for p in matrix.pairs
    ]
    for i, rep in enumerate(reports):
        run.record(rep.as_dict(f"bounds.pair{i}"))
    dub = [r.dub_ratio for r in reports]
    cub = [r.cub_ratio for r in reports]
    c1 = cub[0]
    run.record({
        "bounds.dub_drift": drift(dub),
        "bounds.C1": c1,
        "bounds.C2": max(r.efficiency_ratio for r in reports),
        "bounds.contS_max": max(r.contS_ratio for r in reports),
        "bounds.cub_within_10pct": all(c <= 1.1 * c1 for c in cub),
    })
    run.check("bounds.dub_drift", drift(dub) <= 4.0, f"DUB ratios {dub}")
    run.check("bounds.cub_drift", all(c <= 2.0 * c1 for c in cub), f"CUB ratios {cub}")
    run.check("bounds.zero_estimator_exact", all(r.zero_estimator_exact for r in reports))


def suite_continuity(run: SuiteRun, cfg: RunConfig, matrix: _Matrix) -> None:
    first = [verify_estimator_continuity(matrix.f, None, None, pair=p) for p in matrix.pairs]
    betas = [r.beta_max for r in first]
    beta = 0.5 * betas[0] if betas[0] is not None else 1.0
    run.record({"continuity.beta_calibrated": beta, "continuity.beta_drift": drift(betas)})
    for i, pair in enumerate(matrix.pairs):
        rep = verify_estimator_continuity(matrix.f, None, None, beta=beta, pair=pair)
        run.record(rep.as_dict(f"continuity.pair{i}"))
        run.check(f"continuity.pair{i}.inequality", rep.holds,
                  f"beta_max {rep.beta_max} below calibrated {beta:.3g}")
    run.check("continuity.beta_drift", drift(betas) <= 2.0, f"beta_max values {betas}")


# --------------------------------------------------
# Topology, marking and structure
# --------------------------------------------------


def suite_harmonics(run: SuiteRun, cfg: RunConfig) -> None:
    rng = np.random.default_rng(cfg.seed)
    for name in BUILTIN_DOMAINS:
        expected = BUILTIN_BETTI[name]
        mesh = builtin_domain(name)
        dims = []
        for level_mesh in (mesh, uniform_refine(mesh, 1)):
            cx = build_complex(level_mesh)
            dims.append(harmonic_basis(cx).dim)
        run.record({f"harmonics.{name}.dim": dims[0], f"harmonics.{name}.betti": betti_number(build_complex(mesh))})
        run.check(f"harmonics.{name}.dim", dims[0] == expected, f"dim {dims[0]}, expected {expected}")
        run.check(f"harmonics.{name}.refinement_invariant", dims[0] == dims[1], f"dims {dims}")

    coarse = builtin_domain("square_one_hole")
    cx_H = build_complex(coarse)
    h_H = harmonic_basis(cx_H)
    fine = coarse
    for steps in (1, 2):
        fine = bisect(fine, np.arange(fine.num_triangles))
        cx_h = build_complex(fine)
        h_h = harmonic_basis(cx_h)
        h_Hp = prolong_basis(h_H, cx_H, cx_h)
        forward, backward = subspace_gap(h_h, h_Hp), subspace_gap(h_Hp, h_h)
        run.record({f"harmonics.gap.bisections{steps}": forward})
        run.check(f"harmonics.gap{steps}.symmetric", abs(forward - backward) <= 1e-8,
                  f"{forward} vs {backward}")
        run.check(f"harmonics.gap{steps}.below_one", forward <= 0.9, f"gap {forward}")

    x = FeFunction(1, rng.standard_normal(cx_h.mesh.num_edges), cx_h.mesh)
    b, h, z = hodge_decompose(x, cx_h, h_h)
    again = hodge_decompose(b + h + z, cx_h, h_h)
    recombined = float(np.abs((b + h + z).coefficients - x.coefficients).max())
    idempotent = max(float(np.abs(p.coefficients - q.coefficients).max()) for p, q in zip((b, h, z), again))
    run.record({"harmonics.recombination_error": recombined, "harmonics.idempotence_error": idempotent,
                "harmonics.poincare.square.degree0": poincare_constant(build_complex(uniform_refine(
                    builtin_domain("square"), 2)), 0)})
    scale = max(1.0, float(np.abs(x.coefficients).max()))
    run.check("harmonics.decomposition", recombined <= 1e-10 * scale and idempotent <= 1e-8 * scale)


def brute_force_min_count(values: np.ndarray, theta: float) -> int:
    n = values.size
    masks = np.array(list(itertools.product([0, 1], repeat=n)), dtype=float)
    sums = masks @ values
    feasible = sums >= theta * values.sum() * (1.0 - 1e-12)
    return int(masks[feasible].sum(axis=1).min())


def suite_marking(run: SuiteRun, cfg: RunConfig) -> None:
    rng = np.random.default_rng(cfg.seed)
    thetas = (0.25, 0.5, 0.9)
    mismatches = 0
    non_monotone = 0
    instances = 0
    for _ in range(200):
        n = int(rng.integers(1, 13))
        values = rng.random(n)
        counts = []
        for theta in thetas:
            instances += 1
            got = dorfler_select(values, theta).size
            counts.append(got)
            if got != brute_force_min_count(values, theta):
                mismatches += 1
        if any(a > b for a, b in zip(counts, counts[1:])):
            non_monotone += 1
    run.record({"marking.instances": instances, "marking.mismatches": mismatches,
                "marking.non_monotone": non_monotone})
    run.check("marking.minimal", mismatches == 0, f"{mismatches} of {instances} instances differ")
    run.check("marking.monotone", non_monotone == 0, f"{non_monotone} vectors")


def suite_structure(run: SuiteRun, cfg: RunConfig) -> None:
    rng = np.random.default_rng(cfg.seed)
    meshes = uniform_hierarchy(builtin_domain("square"), cfg.levels, start=0)
    meshes += [uniform_refine(builtin_domain(name), 1) for name in BUILTIN_DOMAINS[1:]]

    worst_dd = worst_constraint = 0.0
    for mesh in meshes:
        check_conformity(mesh)
        cx = build_complex(mesh)
        product = (cx.D1 @ cx.D0).tocoo()
        scale = float(np.abs(cx.D1.data).max() * np.abs(cx.D0.data).max())
        worst_dd = max(worst_dd, float(np.abs(product.data).max(initial=0.0)) / scale)
        sol = solve_mixed(cx, sinsin)
        worst_constraint = max(worst_constraint, sol.diagnostics.constraint_residual)
    run.record({"structure.dd_max": worst_dd, "structure.constraint_max": worst_constraint})
    run.check("structure.d_d_zero", worst_dd <= 1e-12, f"|D1 D0| {worst_dd}")
    run.check("structure.constraint", worst_constraint <= 1e-10, f"residual {worst_constraint}")

    # integral preservation and symmetry of fine-to-coarse averaging
    coarse, fine = meshes[1], meshes[2]
    cx_H, cx_h = build_complex(coarse), build_complex(fine)
    f_h = FeFunction(2, rng.standard_normal(fine.num_triangles), fine)
    u_h = FeFunction(2, rng.standard_normal(fine.num_triangles), fine)
    If = prolong(canonical_interp_top(f_h, cx_H), cx_h)
    Iu = prolong(canonical_interp_top(u_h, cx_H), cx_h)
    pl1 = float(np.abs(canonical_interp_top(f_h - If, cx_H).coefficients * coarse.areas).max())
    lhs = float((u_h - Iu).coefficients @ (cx_h.M2 @ f_h.coefficients))
    rhs = float(u_h.coefficients @ (cx_h.M2 @ (f_h - If).coefficients))
    pl2 = abs(lhs - rhs)
    run.record({"structure.pl1": pl1, "structure.pl2": pl2})
    run.check("structure.pl1", pl1 <= 1e-12)
    run.check("structure.pl2", pl2 <= 1e-12 * max(1.0, abs(lhs)))

    hs, flux_err, interp_err = [], [], []
    field = lambda p: np.column_stack([np.sin(np.pi * p[:, 1]), np.sin(np.pi * p[:, 0])])
    for mesh in uniform_hierarchy(builtin_domain("square"), 4, start=2):
        cx = build_complex(mesh)
        hs.append(float(mesh.diameters.max()))
        flux_err.append(l2_error(sinsin_flux, solve_mixed(cx, sinsin).sigma, cx))
        interp_err.append(l2_error(field, canonical_interp_rt(field, cx), cx))
    flux_slope, interp_slope = fit_slope(hs, flux_err), fit_slope(hs, interp_err)
    run.record({"structure.flux_slope": flux_slope, "structure.interp_slope": interp_slope})
    run.check("structure.flux_slope", abs(flux_slope - 1.0) <= 0.1, f"slope {flux_slope:.3f}")
    run.check("structure.interp_slope", abs(interp_slope - 1.0) <= 0.1, f"slope {interp_slope:.3f}")


# --------------------------------------------------
# Adaptive runs
# --------------------------------------------------


def corner_fraction(result, radius: float = 0.25, iterations: int = 5) -> float:
    """Share of marked elements with centroid within `radius` of the origin."""
    near = total = 0
    for mesh, marks in list(zip(result.meshes, result.marked))[:iterations]:
        centroids = mesh.centroids[marks.ids]
        near += int((np.linalg.norm(centroids, axis=1) <= radius).sum())
        total += len(marks)
    return near / total if total else 0.0


def suite_contraction(run: SuiteRun, cfg: RunConfig) -> None:
    mesh0 = uniform_refine(builtin_domain("lshape"), 2)
    kwargs = dict(max_iterations=max(10, min(cfg.max_iterations, 12)),
                  reference_depth=cfg.reference_depth, delta=cfg.delta, beta=cfg.beta)
    result = amfem(mesh0, const1, 1e-12, cfg.theta, **kwargs)
    history = result.history
    report = contraction_report(history, cfg.delta, cfg.beta_grid, theta=cfg.theta)
    run.record(report.as_dict())
    run.record(comparison_report(history, cfg.delta, theta=cfg.theta))

    total_marked = sum(len(m) for m in result.marked)
    complexity = (result.mesh.num_triangles - mesh0.num_triangles) / max(total_marked, 1)
    fraction = corner_fraction(result)
    osc, osc_hat = history.column("osc_sq"), history.column("osc_hat_sq")
    finite = np.isfinite(osc_hat)
    run.record({"contraction.iterations": len(history), "contraction.complexity_constant": complexity,
                "contraction.corner_fraction": fraction})
    run.check("contraction.iterations", len(history) >= 10, f"{len(history)} iterations")
    run.check("contraction.gamma", report.best_gamma <= 0.95,
              f"best gamma {report.best_gamma:.3f} at beta {report.best_beta}")
    run.check("contraction.complexity", complexity <= 8.0, f"constant {complexity:.2f}")
    run.check("contraction.osc_hat_le_osc", bool((osc_hat[finite] <= osc[finite] * (1 + 1e-10) + 1e-300).all()))
    run.check("contraction.corner_concentration", fraction >= 0.5, f"fraction {fraction:.2f}")

    repeat = amfem(mesh0, const1, 1e-12, cfg.theta, **kwargs).history
    same = len(history) == len(repeat) and all(
        np.array_equal(history.column(name), repeat.column(name), equal_nan=True) for name in HISTORY_COLUMNS
    )
    run.check("contraction.deterministic", same)


def suite_optimality(run: SuiteRun, cfg: RunConfig) -> None:
    mesh0 = builtin_domain("lshape")
    adaptive = amfem(mesh0, const1, 1e-12, cfg.theta, max_iterations=max(12, min(cfg.max_iterations, 16)),
                     reference_depth=cfg.reference_depth)
    uniform = amfem(mesh0, const1, 1e-12, cfg.theta, strategy="uniform", max_iterations=8,
                    reference_depth=cfg.reference_depth)
    adaptive_slope = fit_rate(adaptive.history, "dofs", "error")
    uniform_slope = fit_rate(uniform.history, "dofs", "error")
    run.record({"optimality.adaptive_slope": adaptive_slope, "optimality.uniform_slope": uniform_slope,
                "optimality.adaptive_eta_slope": fit_rate(adaptive.history, "dofs", "eta")})
    run.check("optimality.adaptive_rate", abs(adaptive_slope + 0.5) <= 0.1, f"slope {adaptive_slope:.3f}")
    run.check("optimality.uniform_worse", uniform_slope - adaptive_slope >= 0.1,
              f"uniform {uniform_slope:.3f}, adaptive {adaptive_slope:.3f}")

    square = builtin_domain("square")
    eps_values = [0.02, 0.01, 0.005, 0.0025]
    cells = [approx_data(linex, square, eps).mesh.num_triangles for eps in eps_values]
    approx_slope = fit_slope([1.0 / e for e in eps_values], cells)
    run.record({"optimality.approx_cells": str(cells), "optimality.approx_slope": approx_slope})
    run.check("optimality.approx_slope_finite", math.isfinite(approx_slope))

    step = approx_data(signstep, square, 1e-3)
    hits = total = 0
    for marks in step.marked:
        corners = marks.mesh.element_coordinates[marks.ids][:, :, 0]
        hits += int(((corners.min(axis=1) <= 0.5) & (corners.max(axis=1) >= 0.5)).sum())
        total += len(marks)
    share = hits / total if total else 1.0
    run.record({"optimality.signstep_share": share, "optimality.signstep_cells": step.mesh.num_triangles})
    run.check("optimality.signstep_concentration", share >= 0.8, f"share {share:.2f}")

    combined = amfem_optimal(mesh0, sinsin, 0.5, cfg.theta, max_iterations=8, record_error=False)
    run.record({"optimality.approx_then_amfem_cells": combined.adaptive.mesh.num_triangles,
                "optimality.approx_cells_added": combined.approx.cells_added})


SUITE_ORDER = ("structure", "marking", "harmonics", "stability", "quasi", "bounds", "continuity",
               "contraction", "optimality")
_NESTED = {"stability": suite_stability, "quasi": suite_quasi, "bounds": suite_bounds,
           "continuity": suite_continuity}
_PLAIN: Dict[str, Callable] = {"harmonics": suite_harmonics, "marking": suite_marking,
                               "structure": suite_structure, "contraction": suite_contraction,
                               "optimality": suite_optimality}


def run_suite(cfg: RunConfig) -> SuiteRun:
    """Run one suite (or all of them) and return the collected report."""
    names = SUITE_ORDER if cfg.suite == "all" else (cfg.suite,)
    run = SuiteRun()
    matrix = None
    for name in names:
        logger.info({"msg": "suite_start", "suite": name})
        if name in _NESTED:
            if matrix is None:
                matrix = _Matrix(cfg)
            _NESTED[name](run, cfg, matrix)
        else:
            _PLAIN[name](run, cfg)
    run.record({"suites": ",".join(names), "passed": run.passed, "failures": len(run.failures)})
    return run
