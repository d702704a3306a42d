# --------------------------------------------------
# errors.py
# --------------------------------------------------
# Exception hierarchy. Each class carries the CLI
# exit status it maps to:
#
#   ✔ 1  ConfigError, MeshError, NotNestedError,
#        ConvergenceDataError
#   ✔ 2  VerificationError (names the assertion)
#   ✔ 3  SolverError
#
# Library code raises; only main.py converts. It also
# maps LinAlgError to SolverError and OSError to
# ConfigError.
# --------------------------------------------------

from typing import Optional


class AmfemError(Exception):
    exit_code = 1


class ConfigError(AmfemError):
    """Invalid run configuration or unreadable input."""

    exit_code = 1


class MeshError(AmfemError):
    """Invalid mesh; `element` names the offending triangle when known."""

    exit_code = 1

    def __init__(self, message: str, element: Optional[int] = None):
        if element is not None:
            message = f"{message} (element {element})"
        super().__init__(message)
        self.element = element


class NotNestedError(AmfemError):
    exit_code = 1


class ConvergenceDataError(AmfemError):
    """History too short, or non-positive values where logs are taken."""

    exit_code = 1


class VerificationError(AmfemError):
    exit_code = 2

    def __init__(self, name: str, detail: str = ""):
        super().__init__(f"{name}: {detail}" if detail else name)
        self.name = name


class SolverError(AmfemError):
    exit_code = 3
