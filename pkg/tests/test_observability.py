# --------------------------------------------------
# test_observability.py
# --------------------------------------------------
# Purpose:
#   Validate the metrics collector and JSON logging:
#       • counters render in Prometheus text format
#       • latency buckets are cumulative
#       • every log line is a single JSON object
# --------------------------------------------------

import io
import json
import logging

import pytest

from amfem.logging_utils import setup_logging
from amfem.mesh import bisect
from amfem.metrics import Metrics, metrics


@pytest.fixture
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers = handlers
    root.setLevel(level)


def test_prometheus_rendering():
    m = Metrics()
    m.inc_solve("splu")
    m.inc_solve("splu")
    m.inc_solve("dense_sym")
    m.inc_bisections(7)
    m.inc_iteration("amfem")
    m.observe_latency(20)
    m.observe_latency(300)
    m.observe_latency(900)

    lines = m.render_prometheus().splitlines()
    assert 'amfem_solves_total{method="dense_sym"} 1' in lines
    assert 'amfem_solves_total{method="splu"} 2' in lines
    assert "amfem_bisections_total 7" in lines
    assert 'amfem_iterations_total{loop="amfem"} 1' in lines
    assert 'amfem_solve_latency_ms_bucket{le="100"} 1' in lines
    assert 'amfem_solve_latency_ms_bucket{le="500"} 2' in lines
    assert 'amfem_solve_latency_ms_bucket{le="+Inf"} 3' in lines
    assert "amfem_solve_latency_ms_count 3" in lines


def test_reset_clears_counters():
    m = Metrics()
    m.inc_solve("splu")
    m.inc_bisections(3)
    m.reset()
    text = m.render_prometheus()
    assert "amfem_solves_total" not in text
    assert "amfem_bisections_total 0" in text


def test_bisection_is_counted(square):
    fine = bisect(square, [0])
    assert metrics.bisections == fine.num_triangles - square.num_triangles


def test_json_log_lines(restore_root_logger):
    stream = io.StringIO()
    setup_logging("INFO", stream=stream)
    log = logging.getLogger("amfem.test")
    log.info({"msg": "amfem_iteration", "k": 3, "eta": float("nan")})
    log.debug("hidden")
    log.warning("plain %s", "text")

    lines = stream.getvalue().splitlines()
    assert len(lines) == 2
    first, second = (json.loads(line) for line in lines)
    assert first["msg"] == "amfem_iteration" and first["k"] == 3
    assert first["eta"] == "nan"
    assert first["level"] == "INFO" and first["logger"] == "amfem.test"
    assert first["ts"].endswith("Z")
    assert second == {**second, "msg": "plain text", "level": "WARNING"}
