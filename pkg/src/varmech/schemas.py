"""Request/response models for the HTTP service.

The request models double as the on-disk problem-config schema: a config file
is the JSON serialization of `ProblemConfig`, with expression fields held as
text and parsed by the engine.  The CLI loads a config, inlines any
client-side file data (surface CSVs), and posts it unchanged.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

Kind = Literal["first_order", "higher", "lie_algebra", "g2", "string_residual", "plateau"]


class AlgebroidConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["tangent", "so3", "abelian", "custom"] = "custom"
    base_dim: Optional[int] = None
    rank: Optional[int] = None
    anchor: Optional[list[list[str]]] = None       # expressions in the base coordinates
    structure: Optional[list[list[list[str]]]] = None  # C^c_{ab} expressions, indexed [c][a][b]

    @model_validator(mode="after")
    def _required_fields(self):
        if self.name == "tangent" and not self.base_dim:
            raise ValueError("tangent algebroid requires base_dim")
        if self.name == "abelian" and not self.rank:
            raise ValueError("abelian algebra requires rank")
        if self.name == "custom" and (self.anchor is None or self.structure is None):
            raise ValueError("custom algebroid requires anchor and structure")
        return self


class LagrangianConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    expression: str
    order: int = Field(default=1, ge=1)
    dim: Optional[int] = None  # base dimension for first_order / string kinds


class HamiltonianConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    expression: str
    dim: Optional[int] = None


class InitialConfig(BaseModel):
    """Initial data: base point, momenta, or jet rows y[i-1] = y_i components."""
    model_config = ConfigDict(extra="forbid")

    x: list[float] = Field(default_factory=list)
    xdot: Optional[list[float]] = None
    p: Optional[list[float]] = None
    y: list[list[float]] = Field(default_factory=list)


class NumericConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T: float = Field(default=10.0, gt=0)
    dt: float = Field(default=1e-3, gt=0)
    tol: Optional[float] = None
    max_iter: int = Field(default=50, ge=1)
    drift_tol: float = 1e-8
    grid: Optional[tuple[int, int]] = None
    domain: Optional[tuple[tuple[float, float], tuple[float, float]]] = None
    initial: Optional[InitialConfig] = None


class HomogeneityConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    expression: str
    weights: dict[str, int]
    degree: int
    expect: bool = True


class SurfaceData(BaseModel):
    """Inline sampled surface: values[mu][i][j] = x^{mu+1}(t_i, s_j)."""
    model_config = ConfigDict(extra="forbid")

    t: list[float]
    s: list[float]
    values: list[list[list[float]]]


class IoConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    surface: Optional[str] = None           # client-side CSV path (CLI resolves)
    format: Literal["csv", "json"] = "csv"
    latex: bool = False


class ProblemConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Kind
    algebroid: Optional[AlgebroidConfig] = None
    lagrangian: Optional[LagrangianConfig] = None
    hamiltonian: Optional[HamiltonianConfig] = None
    boundary: Optional[str] = None          # plateau Dirichlet data g(x, y)
    homogeneity: list[HomogeneityConfig] = Field(default_factory=list)
    numeric: NumericConfig = Field(default_factory=NumericConfig)
    io: IoConfig = Field(default_factory=IoConfig)
    surface: Optional[SurfaceData] = None
    seed: int = 0


# ---------------------------------------------------------------------------
# Responses


class EquationBlock(BaseModel):
    label: str
    plain: str
    latex: str


class CheckItem(BaseModel):
    """A verified number together with the tolerance it was tested against."""
    name: str
    value: float
    tolerance: float
    passed: bool


class AxiomReportModel(BaseModel):
    antisymmetry_max_violation: float
    jacobi_max_violation: float
    anchor_compat_max_violation: float


class HomogeneityResult(BaseModel):
    expression: str
    degree: int
    homogeneous: bool
    expected: bool
    passed: bool


class CheckResponse(BaseModel):
    status: Literal["ok", "violation"]
    tolerance: float
    axioms: Optional[AxiomReportModel] = None
    homogeneity: list[HomogeneityResult] = Field(default_factory=list)


class RunReport(BaseModel):
    """Shared report payload: derived equations, verified numbers, artifacts."""
    status: Literal["ok", "failed"]
    kind: str
    equations: list[EquationBlock] = Field(default_factory=list)
    momenta: list[EquationBlock] = Field(default_factory=list)
    constraints: list[EquationBlock] = Field(default_factory=list)
    base_equation: Optional[str] = None
    checks: list[CheckItem] = Field(default_factory=list)
    notes: list[str] = Field(default_factory=list)
    error: Optional[str] = None
    files: dict[str, str] = Field(default_factory=dict)


class SimulateResponse(RunReport):
    columns: list[str] = Field(default_factory=list)


class PlateauResponse(RunReport):
    iterations: int = 0
    final_residual: float = float("nan")


class ResidualResponse(RunReport):
    max_interior_residual: float = float("nan")
    per_component: list[float] = Field(default_factory=list)
