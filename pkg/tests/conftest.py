# --------------------------------------------------
# conftest.py (Test bootstrap)
# --------------------------------------------------
# Environment setup before any amfem module is imported,
# plus meshes shared by the test modules.
#
# Responsibilities:
#   - Keep logs quiet unless a test asks for them
#   - Point the default output directory at /tmp so a
#     stray CLI call never writes into the checkout
#   - Keep the dense fallback and iteration caps at
#     their documented defaults
#
# Note:
#   amfem.config reads the environment at import, so
#   the defaults below must be applied first.
# --------------------------------------------------

import os

import pytest

# --------------------------------------------------
# Test Environment Defaults
# --------------------------------------------------
os.environ.setdefault("AMFEM_LOG_LEVEL", "WARNING")
os.environ.setdefault("AMFEM_OUTPUT_DIR", "/tmp/amfem-test-results")
os.environ.setdefault("AMFEM_DENSE_SOLVE_LIMIT", "2000")
os.environ.setdefault("AMFEM_MAX_ITERATIONS", "50")

from amfem.complex import build_complex  # noqa: E402
from amfem.mesh import builtin_domain, uniform_refine  # noqa: E402
from amfem.metrics import metrics  # noqa: E402


@pytest.fixture(autouse=True)
def _fresh_metrics():
    metrics.reset()
    yield


@pytest.fixture
def square():
    return builtin_domain("square")


@pytest.fixture
def lshape():
    return builtin_domain("lshape")


@pytest.fixture
def square_fine(square):
    """Unit square after two uniform levels (32 triangles)."""
    return uniform_refine(square, 2)


@pytest.fixture
def square_fine_cx(square_fine):
    return build_complex(square_fine)
