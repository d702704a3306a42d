# --------------------------------------------------
# adapt.py
# --------------------------------------------------
# Adaptive loops and what is measured on them:
#
#   ✔ dorfler_mark        minimal set carrying a
#                         theta-fraction of sum eta_T^2
#   ✔ amfem               SOLVE -> ESTIMATE -> MARK ->
#                         REFINE until eta <= eps
#   ✔ approx_data         greedy oscillation reduction
#                         of the data (APPROX)
#   ✔ amfem_optimal       APPROX(f, eps/2), then AMFEM
#                         with the projected data
#   ✔ contraction_report  quasi-error step ratios over
#                         a beta grid
#   ✔ comparison_report   constants implied by two
#                         simplified three-line systems
#   ✔ fit_rate            log-log slope of error or eta
#                         against dofs or cells
# --------------------------------------------------

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .complex import DataLike, build_complex, l2_project, norm_sq, prolong
from .config import settings
from .errors import ConfigError, ConvergenceDataError
from .estimator import ErrorIndicators, estimate, oscillation_indicators
from .mesh import MarkedSet, Mesh, bisect, uniform_refine
from .metrics import metrics
from .solver import MixedSolution, solve_mixed

logger = logging.getLogger(__name__)

THETA_OSC = 0.5
STRATEGIES = ("dorfler", "separate", "uniform")

HISTORY_COLUMNS = (
    "k", "cells", "dofs_sigma", "dofs_u", "error_sq", "E_sq",
    "eta_sq", "osc_sq", "osc_hat_sq", "marked", "q",
)


# --------------------------------------------------
# Marking
# --------------------------------------------------


def dorfler_select(values: np.ndarray, theta: float) -> np.ndarray:
    """
    Smallest prefix of the elements sorted by descending value (ties: lower id
    first) whose sum reaches theta * total. Returned ids are sorted.
    """
    if not 0.0 < theta <= 1.0:
        raise ConfigError(f"theta must lie in (0, 1], got {theta}")
    values = np.asarray(values, dtype=float)
    total = float(values.sum())
    if values.size == 0 or total <= 0.0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(values.size), -values))
    cumulative = np.cumsum(values[order])
    # the last prefix sum equals the recomputed total only up to rounding
    target = theta * cumulative[-1]
    count = int(np.searchsorted(cumulative, target, side="left")) + 1
    count = min(count, values.size)
    chosen = order[:count]
    if theta == 1.0:
        chosen = chosen[values[chosen] > 0.0]
    return np.sort(chosen)


def dorfler_mark(ind: ErrorIndicators, theta: float) -> MarkedSet:
    if ind.eta_sq.size == 0:
        raise ConfigError("cannot mark an empty set of indicators")
    return MarkedSet.of(ind.mesh, dorfler_select(ind.eta_sq, theta))


def _mark(ind: ErrorIndicators, theta: float, strategy: str) -> MarkedSet:
    if strategy == "dorfler":
        return dorfler_mark(ind, theta)
    if strategy == "separate":
        estimator_part = dorfler_select(ind.jump + ind.corot, theta)
        oscillation_part = dorfler_select(ind.osc_sq, theta)
        return MarkedSet.of(ind.mesh, np.union1d(estimator_part, oscillation_part))
    if strategy == "uniform":
        return MarkedSet.of(ind.mesh, np.arange(ind.mesh.num_triangles))
    raise ConfigError(f"unknown marking strategy {strategy!r}")


# --------------------------------------------------
# History
# --------------------------------------------------


@dataclass(frozen=True)
class HistoryRecord:
    k: int
    cells: int
    dofs_sigma: int
    dofs_u: int
    error_sq: float
    E_sq: float
    eta_sq: float
    osc_sq: float
    osc_hat_sq: float
    marked: int
    q: float

    @property
    def dofs(self) -> int:
        return self.dofs_sigma + self.dofs_u


@dataclass
class ConvergenceHistory:
    """Append-only sequence of per-iteration records."""

    records: List[HistoryRecord] = field(default_factory=list)

    def append(self, record: HistoryRecord) -> None:
        if self.records and record.cells <= self.records[-1].cells:
            raise ConvergenceDataError(
                f"cell count must increase between iterations ({self.records[-1].cells} -> {record.cells})"
            )
        for name in ("error_sq", "E_sq", "eta_sq", "osc_sq", "osc_hat_sq"):
            value = getattr(record, name)
            if value < 0.0:
                raise ConvergenceDataError(f"{name} must be non-negative, got {value}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, index):
        return self.records[index]

    def column(self, name: str) -> np.ndarray:
        if name == "dofs":
            return np.array([r.dofs for r in self.records], dtype=float)
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @classmethod
    def from_columns(cls, **columns: Sequence[float]) -> "ConvergenceHistory":
        """Build a history from equal-length columns; missing columns default to NaN / 0."""
        n = len(next(iter(columns.values())))
        history = cls()
        for i in range(n):
            row = {}
            for name in HISTORY_COLUMNS:
                if name in columns:
                    row[name] = columns[name][i]
                elif name == "k":
                    row[name] = i
                elif name == "cells":
                    row[name] = i + 1
                elif name in ("marked", "dofs_u", "dofs_sigma"):
                    row[name] = 0
                else:
                    row[name] = math.nan
            for name in ("k", "cells", "dofs_sigma", "dofs_u", "marked"):
                row[name] = int(row[name])
            history.append(HistoryRecord(**row))
        return history


@dataclass(frozen=True, eq=False)
class AdaptiveResult:
    mesh: Mesh
    solution: MixedSolution
    history: ConvergenceHistory
    converged: bool
    meshes: List[Mesh]
    marked: List[MarkedSet]
    indicators: List[ErrorIndicators]

    @property
    def iterations(self) -> int:
        return len(self.history)


@dataclass(frozen=True, eq=False)
class ApproxResult:
    mesh: Mesh
    converged: bool
    steps: int
    cells_added: int
    osc: float
    marked: List[MarkedSet]


@dataclass(frozen=True, eq=False)
class OptimalResult:
    approx: ApproxResult
    adaptive: AdaptiveResult
    data: object


def reference_solution(mesh: Mesh, f: DataLike, depth: int = 2):
    """Surrogate for the exact flux: solve on `depth` extra uniform levels."""
    ref_cx = build_complex(uniform_refine(mesh, depth))
    return ref_cx, solve_mixed(ref_cx, f)


# --------------------------------------------------
# AMFEM
# --------------------------------------------------


def amfem(
    mesh0: Mesh,
    f: DataLike,
    eps: float,
    theta: float = 0.5,
    *,
    max_iterations: Optional[int] = None,
    strategy: str = "dorfler",
    reference_depth: int = 2,
    delta: float = 0.25,
    beta: float = 1.0,
    record_error: bool = True,
) -> AdaptiveResult:
    """
    Iterate until eta(sigma_k, T_k) <= eps or `max_iterations` solves were done.
    Reaching the cap is reported through `converged=False`, not an exception.
    """
    if eps <= 0.0:
        raise ConfigError("eps must be positive")
    if not 0.0 < theta <= 1.0:
        raise ConfigError(f"theta must lie in (0, 1], got {theta}")
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown marking strategy {strategy!r}")
    cap = max_iterations if max_iterations is not None else settings.MAX_ITERATIONS

    mesh = mesh0
    meshes, complexes, solutions, indicators, marked = [], [], [], [], []
    converged = False

    for k in range(cap):
        cx = build_complex(mesh)
        solution = solve_mixed(cx, f)
        ind = estimate(solution, f, cx)
        meshes.append(mesh)
        complexes.append(cx)
        solutions.append(solution)
        indicators.append(ind)
        metrics.inc_iteration("amfem")

        eta = math.sqrt(ind.total_eta_sq)
        logger.info({
            "msg": "amfem_iteration",
            "k": k,
            "cells": mesh.num_triangles,
            "eta": eta,
            "osc_sq": ind.total_osc_sq,
        })
        if eta <= eps:
            converged = True
            break
        if k == cap - 1:
            break

        marks = _mark(ind, theta, strategy)
        marked.append(marks)
        mesh = bisect(mesh, marks)

    if not converged:
        logger.warning({"msg": "amfem_iteration_cap", "iterations": cap, "eps": eps,
                        "eta": math.sqrt(indicators[-1].total_eta_sq)})

    history = _build_history(
        f, complexes, solutions, indicators, marked,
        reference_depth=reference_depth, delta=delta, beta=beta, record_error=record_error,
    )
    return AdaptiveResult(
        mesh=meshes[-1],
        solution=solutions[-1],
        history=history,
        converged=converged,
        meshes=meshes,
        marked=marked,
        indicators=indicators,
    )


def _build_history(f, complexes, solutions, indicators, marked, *,
                   reference_depth, delta, beta, record_error) -> ConvergenceHistory:
    n = len(solutions)
    errors = [math.nan] * n
    if record_error:
        ref_cx, ref = reference_solution(complexes[-1].mesh, f, reference_depth)
        for k, sol in enumerate(solutions):
            errors[k] = norm_sq(ref.sigma - prolong(sol.sigma, ref_cx), ref_cx)

    history = ConvergenceHistory()
    for k in range(n):
        cx, ind = complexes[k], indicators[k]
        if k + 1 < n:
            nxt = complexes[k + 1]
            E_sq = norm_sq(solutions[k + 1].sigma - prolong(solutions[k].sigma, nxt), nxt)
            osc_hat_sq = float(oscillation_indicators(solutions[k + 1].f_h, cx).sum())
        else:
            E_sq = osc_hat_sq = math.nan
        eta_sq = ind.total_eta_sq
        history.append(HistoryRecord(
            k=k,
            cells=cx.mesh.num_triangles,
            dofs_sigma=cx.mesh.num_edges,
            dofs_u=cx.mesh.num_triangles,
            error_sq=errors[k],
            E_sq=E_sq,
            eta_sq=eta_sq,
            osc_sq=ind.total_osc_sq,
            osc_hat_sq=osc_hat_sq,
            marked=len(marked[k]) if k < len(marked) else 0,
            q=(1.0 - delta) * errors[k] + beta * eta_sq,
        ))
    return history


# --------------------------------------------------
# APPROX
# --------------------------------------------------


def approx_data(f: DataLike, mesh0: Mesh, eps: float, *, theta_osc: float = THETA_OSC,
                max_iterations: Optional[int] = None) -> ApproxResult:
    """Refine by Dorfler marking on osc_T^2 until osc(f, T_H) <= eps."""
    if eps <= 0.0:
        raise ConfigError("eps must be positive")
    cap = max_iterations if max_iterations is not None else settings.MAX_ITERATIONS

    mesh = mesh0
    marked: List[MarkedSet] = []
    converged = False
    osc = math.inf
    for step in range(cap + 1):
        cx = build_complex(mesh)
        local = oscillation_indicators(f, cx)
        osc = float(np.sqrt(local.sum()))
        metrics.inc_iteration("approx")
        if osc <= eps:
            converged = True
            break
        if step == cap:
            break
        marks = MarkedSet.of(mesh, dorfler_select(local, theta_osc))
        marked.append(marks)
        mesh = bisect(mesh, marks)

    if not converged:
        logger.warning({"msg": "approx_iteration_cap", "iterations": cap, "eps": eps, "osc": osc})
    logger.info({"msg": "approx_done", "cells": mesh.num_triangles,
                 "cells_added": mesh.num_triangles - mesh0.num_triangles, "osc": osc})
    return ApproxResult(
        mesh=mesh,
        converged=converged,
        steps=len(marked),
        cells_added=mesh.num_triangles - mesh0.num_triangles,
        osc=osc,
        marked=marked,
    )


def amfem_optimal(mesh0: Mesh, f: DataLike, eps: float, theta: float = 0.5, **kwargs) -> OptimalResult:
    """APPROX to eps/2, then AMFEM to eps/2 on the projected data f_H."""
    approx = approx_data(f, mesh0, eps / 2.0, max_iterations=kwargs.get("max_iterations"))
    f_H = l2_project(f, build_complex(approx.mesh), 2)
    adaptive = amfem(approx.mesh, f_H, eps / 2.0, theta, **kwargs)
    return OptimalResult(approx=approx, adaptive=adaptive, data=f_H)


# --------------------------------------------------
# Reports on a finished history
# --------------------------------------------------


@dataclass
class ContractionReport:
    delta: float
    theta: float
    gamma: Dict[float, float]
    gamma_with_osc: Dict[float, float]
    best_beta: float
    best_gamma: float
    contracting: bool
    lambda_min: float
    lambda_max: float
    q_best: List[float]

    def as_dict(self, prefix: str = "contraction") -> dict:
        out = {
            f"{prefix}.delta": self.delta,
            f"{prefix}.best_beta": self.best_beta,
            f"{prefix}.best_gamma": self.best_gamma,
            f"{prefix}.contracting": self.contracting,
            f"{prefix}.lambda_min": self.lambda_min,
            f"{prefix}.lambda_max": self.lambda_max,
        }
        for beta, value in self.gamma.items():
            out[f"{prefix}.gamma.beta={beta:g}"] = value
        for beta, value in self.gamma_with_osc.items():
            out[f"{prefix}.gamma_zeta1.beta={beta:g}"] = value
        return out


def _max_step_ratio(sequence: np.ndarray) -> float:
    # the first step is discarded
    prev, nxt = sequence[1:-1], sequence[2:]
    ratios = np.where(prev > 0.0, nxt / np.where(prev > 0.0, prev, 1.0), np.where(nxt > 0.0, np.inf, 0.0))
    return float(ratios.max())


def contraction_report(history: ConvergenceHistory, delta: float, beta_grid: Iterable[float],
                       theta: float = 0.5) -> ContractionReport:
    """
    For every beta: gamma = max_k q_{k+1}/q_k with q_k = (1-delta) e_k + beta eta_k
    (first step discarded), plus the same with osc_k added (zeta = 1). Also the
    range of lambda making  beta eta_{k+1} <= beta (1 - lambda theta) eta_k + E_k + osc_hat_k
    an equality, evaluated at the best beta.
    """
    if len(history) < 4:
        raise ConvergenceDataError(f"contraction report needs at least 4 iterations, got {len(history)}")
    if not 0.0 < delta < 1.0:
        raise ConfigError("delta must lie in (0, 1)")
    e = history.column("error_sq")
    eta = history.column("eta_sq")
    osc = history.column("osc_sq")
    if not np.isfinite(e).all():
        raise ConvergenceDataError("history has no error column (surrogate not computed)")

    grid = [float(b) for b in beta_grid]
    if not grid:
        raise ConfigError("beta grid must not be empty")
    gamma, gamma_osc = {}, {}
    for beta in grid:
        q = (1.0 - delta) * e + beta * eta
        gamma[beta] = _max_step_ratio(q)
        gamma_osc[beta] = _max_step_ratio(q + np.nan_to_num(osc))
    best_beta = min(grid, key=lambda b: (gamma[b], grid.index(b)))
    best_gamma = gamma[best_beta]

    E = history.column("E_sq")[:-1]
    osc_hat = history.column("osc_hat_sq")[:-1]
    eta_k, eta_next = eta[:-1], eta[1:]
    usable = np.isfinite(E) & np.isfinite(osc_hat) & (eta_k > 0.0)
    if usable.any():
        lam = (best_beta * (eta_k - eta_next) + E + osc_hat)[usable] / (best_beta * theta * eta_k[usable])
        lambda_min, lambda_max = float(lam.min()), float(lam.max())
    else:
        lambda_min = lambda_max = math.nan

    report = ContractionReport(
        delta=delta,
        theta=theta,
        gamma=gamma,
        gamma_with_osc=gamma_osc,
        best_beta=best_beta,
        best_gamma=best_gamma,
        contracting=best_gamma < 1.0,
        lambda_min=lambda_min,
        lambda_max=lambda_max,
        q_best=((1.0 - delta) * e + best_beta * eta).tolist(),
    )
    if not report.contracting:
        logger.warning({"msg": "non_contracting_history", "best_beta": best_beta, "gamma": best_gamma})
    return report


def comparison_report(history: ConvergenceHistory, delta: float, theta: float = 0.5) -> dict:
    """
    Constants each simplified system needs to hold on this history.

    ours:       (1-delta) e_{k+1} <= e_k - E_k + (C0/delta) osc_hat_k
                eta_{k+1}         <= (1 - lambda theta) eta_k + E_k + osc_hat_k
                e_k               <= C1 eta_k
    comparison: (1-delta) e_{k+1} <= e_k - E_k + C0 osc_k
                eta_{k+1}         <= (1 - lambda theta) eta_k + E_k
                e_k               <= C1 (eta_k + osc_k)
    """
    if len(history) < 3:
        raise ConvergenceDataError(f"comparison report needs at least 3 iterations, got {len(history)}")
    e = history.column("error_sq")
    eta = history.column("eta_sq")
    osc = history.column("osc_sq")
    E = history.column("E_sq")[:-1]
    osc_hat = history.column("osc_hat_sq")[:-1]
    excess = (1.0 - delta) * e[1:] - e[:-1] + E

    def required(numerator, denominator):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(denominator > 0.0, numerator / np.where(denominator > 0.0, denominator, 1.0),
                             np.where(numerator > 0.0, np.inf, 0.0))
        return float(max(0.0, ratio.max()))

    def implied_lambda(extra):
        usable = eta[:-1] > 0.0
        lam = (eta[:-1] - eta[1:] + extra)[usable] / (theta * eta[:-1][usable])
        return float(lam.min()) if lam.size else math.nan

    return {
        "comparison.ours.C0": required(delta * excess, osc_hat),
        "comparison.ours.lambda": implied_lambda(E + osc_hat),
        "comparison.ours.C1": required(e, eta),
        "comparison.separate.C0": required(excess, osc[:-1]),
        "comparison.separate.lambda": implied_lambda(E),
        "comparison.separate.C1": required(e, eta + osc),
    }


# --------------------------------------------------
# Rates
# --------------------------------------------------


def fit_slope(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ConvergenceDataError(f"need at least 3 points for a rate, got {x.size}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()) or (x <= 0).any() or (y <= 0).any():
        raise ConvergenceDataError("rates need positive, finite values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def fit_rate(history: ConvergenceHistory, x: str = "dofs", y: str = "error") -> float:
    """Slope of log y against log x over the last max(3, n // 2) records."""
    if x not in ("dofs", "cells"):
        raise ConfigError("x must be 'dofs' or 'cells'")
    if y not in ("error", "eta"):
        raise ConfigError("y must be 'error' or 'eta'")
    n = len(history)
    if n < 3:
        raise ConvergenceDataError(f"need at least 3 records for a rate, got {n}")
    window = max(3, n // 2)
    xs = history.column(x)[-window:]
    ys = np.sqrt(history.column("error_sq" if y == "error" else "eta_sq")[-window:])
    return fit_slope(xs, ys)


def history_rows(history: ConvergenceHistory) -> List[dict]:
    return [asdict(r) for r in history]
