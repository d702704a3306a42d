# --------------------------------------------------
# config.py
# --------------------------------------------------
# Process-level configuration for amfem, read once from
# the environment:
#   - AMFEM_LOG_LEVEL (INFO, DEBUG, WARNING, ...)
#   - AMFEM_DENSE_SOLVE_LIMIT (dense fallback size cap)
#   - AMFEM_MAX_ITERATIONS (AMFEM / APPROX loop cap)
#   - AMFEM_OUTPUT_DIR (default directory for run outputs)
#
# Per-run parameters live in schemas.RunConfig; this file
# only carries defaults that apply to every run.
# --------------------------------------------------

import os


class SimpleSettings:
    """
    Minimal settings loader for environment configuration.
    Values are read once at import and used across the package.
    """

    # Logging verbosity; the CLI keeps stdout for results, so keep this quiet.
    LOG_LEVEL = os.environ.get("AMFEM_LOG_LEVEL", "WARNING")

    # Saddle systems up to this many unknowns may retry with a dense
    # symmetric-indefinite factorization when the sparse LU fails.
    DENSE_SOLVE_LIMIT = int(os.environ.get("AMFEM_DENSE_SOLVE_LIMIT", "2000"))

    # Iteration cap shared by AMFEM and APPROX.
    MAX_ITERATIONS = int(os.environ.get("AMFEM_MAX_ITERATIONS", "50"))

    # Where `adapt` / `verify` write when no --out is given.
    OUTPUT_DIR = os.environ.get("AMFEM_OUTPUT_DIR", "results")


# Global settings instance used throughout the package.
settings = SimpleSettings()
