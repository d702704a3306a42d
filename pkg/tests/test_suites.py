# --------------------------------------------------
# test_suites.py
# --------------------------------------------------
# Purpose:
#   Run every verification suite on a small matrix
#   (levels = 2) and check that its named assertions
#   pass and its report carries the expected keys:
#       • structure, marking, harmonics
#       • stability, quasi, bounds, continuity on the
#         nested square / sinsin pairs
#       • contraction and optimality on L-shape runs
#
# Expectations:
#   - run.passed, with the failing names in the message
#   - constants calibrated on the coarsest pair are
#     applied unchanged to the finer pairs
# --------------------------------------------------

import math

import pytest

from amfem.schemas import RunConfig
from amfem.suites import run_suite


def _run(suite, **overrides):
    cfg = RunConfig(command="verify", suite=suite, levels=2, **overrides)
    return run_suite(cfg)


def _assert_passed(run):
    assert run.passed, [f"{e}" for e in run.failures]


# --------------------------------------------------
# Structure, marking, harmonics
# --------------------------------------------------


def test_structure_suite():
    run = _run("structure")
    _assert_passed(run)
    assert run.report["structure.dd_max"] <= 1e-12
    assert run.report["structure.flux_slope"] == pytest.approx(1.0, abs=0.1)
    for name in ("d_d_zero", "constraint", "pl1", "pl2", "flux_slope", "interp_slope"):
        assert run.report[f"assert.structure.{name}"] is True


def test_marking_suite():
    run = _run("marking")
    _assert_passed(run)
    assert run.report["marking.instances"] == 600
    assert run.report["marking.mismatches"] == 0


def test_harmonics_suite():
    run = _run("harmonics")
    _assert_passed(run)
    assert run.report["harmonics.square_two_holes.dim"] == 2
    assert run.report["harmonics.gap.bisections2"] < 0.9


# --------------------------------------------------
# Nested pairs
# --------------------------------------------------


def test_stability_suite():
    run = _run("stability")
    _assert_passed(run)
    assert {"stability.pair0.ratio", "stability.pair1.ratio", "stability.ratio_drift"} <= set(run.report)
    assert run.report["stability.ratio_drift"] <= 2.0


def test_quasi_suite_uses_the_coarsest_required_constant():
    run = _run("quasi")
    _assert_passed(run)
    c0 = run.report["quasi.c0_calibrated"]
    assert c0 == run.report["quasi.pair0.c0_required"]
    for i in (0, 1):
        assert run.report[f"quasi.pair{i}.c0"] == c0
        assert run.report[f"quasi.pair{i}.holds"] is True
        assert run.report[f"quasi.pair{i}.normalized_inner"] <= 0.05


def test_bounds_suite():
    run = _run("bounds")
    _assert_passed(run)
    assert run.report["bounds.C1"] == run.report["bounds.pair0.cub_ratio"]
    assert run.report["bounds.dub_drift"] <= 4.0
    assert run.report["assert.bounds.zero_estimator_exact"] is True


def test_continuity_suite():
    run = _run("continuity")
    _assert_passed(run)
    beta = run.report["continuity.beta_calibrated"]
    assert math.isfinite(beta) and beta > 0.0
    assert run.report["continuity.pair1.beta"] == beta


# --------------------------------------------------
# Adaptive runs
# --------------------------------------------------


def test_contraction_suite():
    run = _run("contraction", max_iterations=10)
    _assert_passed(run)
    assert run.report["contraction.iterations"] == 10
    assert run.report["contraction.best_gamma"] <= 0.95
    assert run.report["contraction.complexity_constant"] <= 8.0
    assert run.report["assert.contraction.deterministic"] is True


def test_optimality_suite():
    run = _run("optimality", max_iterations=12)
    _assert_passed(run)
    assert run.report["optimality.adaptive_slope"] == pytest.approx(-0.5, abs=0.1)
    assert run.report["optimality.uniform_slope"] - run.report["optimality.adaptive_slope"] >= 0.1
    assert run.report["optimality.signstep_share"] >= 0.8
