# --------------------------------------------------
# schemas.py
# --------------------------------------------------
# Pydantic models validating everything that enters or
# leaves a run:
#
#   ✔ RunConfig   - per-run parameters from the CLI
#   ✔ MeshFile    - mesh JSON files (load/save)
#   ✔ RunManifest - JSON record of a finished run
#
# Validations (RunConfig):
#   - theta in (0, 1], eps > 0, delta in (0, 1)
#   - reference_depth >= 1, max_iterations >= 1
#   - beta grid non-empty, every entry > 0
#   - strategy / suite restricted to known names
#
# A pydantic.ValidationError is turned into ConfigError
# by main.py (exit status 1).
# --------------------------------------------------

from typing import Annotated, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from .config import settings

# --------------------------------------------------
# Typed field annotations with constraints
# --------------------------------------------------
Theta = Annotated[float, Field(gt=0.0, le=1.0)]
Positive = Annotated[float, Field(gt=0.0)]
OpenUnit = Annotated[float, Field(gt=0.0, lt=1.0)]

DATA_CHOICES = ("const1", "sinsin", "linex", "signstep")
SUITES = (
    "stability", "quasi", "bounds", "continuity", "harmonics",
    "marking", "structure", "contraction", "optimality", "all",
)


class RunConfig(BaseModel):
    """
    Parameters of one `adapt` or `verify` invocation.
    `f` is a builtin data name or a path to a CSV of samples (x, y, value).
    """

    command: Literal["adapt", "verify"]
    domain: str = "lshape"
    mesh: Optional[str] = None
    f: str = "const1"
    theta: Theta = 0.5
    eps: Positive = 1e-3
    max_iterations: Annotated[int, Field(ge=1)] = settings.MAX_ITERATIONS
    delta: OpenUnit = 0.25
    beta_grid: List[Positive] = Field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0], min_length=1)
    beta: Positive = 1.0
    out: str = settings.OUTPUT_DIR
    reference_depth: Annotated[int, Field(ge=1)] = 2
    strategy: Literal["dorfler", "separate", "uniform"] = "dorfler"
    seed: int = 0
    levels: Annotated[int, Field(ge=2)] = 4
    export_operators: bool = False
    suite: Literal[SUITES] = "all"

    @field_validator("f")
    @classmethod
    def _data_not_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("data selector must not be empty")
        return value

    @field_validator("domain")
    @classmethod
    def _known_domain(cls, value: str) -> str:
        from .mesh import BUILTIN_DOMAINS

        if value not in BUILTIN_DOMAINS:
            raise ValueError(f"domain must be one of {', '.join(BUILTIN_DOMAINS)}")
        return value


class MeshFile(BaseModel):
    """JSON mesh format: 0-based indices, refinement_edge optional."""

    vertices: List[Annotated[List[float], Field(min_length=2, max_length=2)]] = Field(min_length=3)
    triangles: List[Annotated[List[int], Field(min_length=3, max_length=3)]] = Field(min_length=1)
    refinement_edge: Optional[List[Annotated[int, Field(ge=0, le=2)]]] = None

    @model_validator(mode="after")
    def _one_edge_per_triangle(self):
        if self.refinement_edge is not None and len(self.refinement_edge) != len(self.triangles):
            raise ValueError("refinement_edge needs one entry per triangle")
        return self


class RunManifest(BaseModel):
    """Everything needed to re-run and identify an `adapt` run."""

    package_version: str
    command: str
    parameters: Dict[str, object]
    domain: str
    initial_cells: int
    final_cells: int
    iterations: int
    converged: bool
    final_eta: float
    elapsed_seconds: float
    outputs: Dict[str, str]
