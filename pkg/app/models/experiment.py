"""
Declarative experiment specification and run reports.
"""
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.enums import CheckKind, RiskKind, SolverMode

SCHEMA_VERSION = "1.0"

# Checks that sample randomness and therefore need a seed
MC_CHECKS = {
    CheckKind.SADDLE, CheckKind.MARTINGALE, CheckKind.SDG, CheckKind.RISK_APPROXIMATION, CheckKind.SIGNAL_WAIT,
}


class BuiltinRef(BaseModel):
    """A named built-in with its parameters."""
    name: str
    params: Dict[str, Any] = Field(default_factory=dict)

    model_config = ConfigDict(extra="forbid")


class RiskBlock(BaseModel):
    kind: Literal["identity", "exponential"] = "identity"
    gamma: Optional[float] = Field(None, gt=0)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _gamma_for_exponential(self):
        if self.kind == RiskKind.EXPONENTIAL.value and self.gamma is None:
            raise ValueError("exponential risk function requires gamma > 0")
        return self


class ModelBlock(BaseModel):
    dynamics: BuiltinRef
    x0: Union[float, List[float]] = 1.0
    r: float = Field(0.0, ge=0)
    lambda1: float = Field(..., ge=0)
    lambda2: float = Field(..., ge=0)
    T: float = Field(..., gt=0)
    f: BuiltinRef = Field(default_factory=lambda: BuiltinRef(name="constant", params={"value": 0.0}))
    L: BuiltinRef
    U: BuiltinRef
    xi: BuiltinRef
    g: RiskBlock = Field(default_factory=RiskBlock)

    model_config = ConfigDict(extra="forbid")

    @field_validator("x0")
    @classmethod
    def _non_empty(cls, value):
        if isinstance(value, list) and not value:
            raise ValueError("x0 needs at least one coordinate")
        return value


class SolverBlock(BaseModel):
    mode: SolverMode = SolverMode.ODE
    n_t: int = Field(2000, ge=1)
    n_x: Optional[int] = Field(None, ge=2)
    x_min: Optional[float] = None
    x_max: Optional[float] = None
    n_paths: int = Field(20000, ge=1000)
    basis_degree: Optional[int] = Field(None, ge=0)
    seed: Optional[int] = Field(None, ge=0)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _grid_for_pde(self):
        if self.mode == SolverMode.PDE and None in (self.n_x, self.x_min, self.x_max):
            raise ValueError("pde mode needs n_x, x_min and x_max")
        return self


class CheckSpec(BaseModel):
    """
    One verification step.

    `tolerance` is the standard-error multiplier for Monte Carlo comparisons and
    an absolute bound for deterministic ones.
    """
    kind: CheckKind
    name: Optional[str] = None
    tolerance: Optional[float] = Field(None, ge=0)
    n_paths: Optional[int] = Field(None, ge=100)
    n_steps: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = Field(None, ge=0)
    k_max: int = Field(4, ge=1)
    times: List[float] = Field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8])
    quad_points: int = Field(64, ge=1)
    intensities: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0, 4.0])
    reference: Optional[SolverBlock] = None

    model_config = ConfigDict(extra="forbid")

    @field_validator("intensities")
    @classmethod
    def _non_negative_intensities(cls, value):
        if not value or any(lam < 0 for lam in value):
            raise ValueError("intensities must be a non-empty list of values >= 0")
        return value

    @property
    def label(self) -> str:
        return self.name or self.kind.value


class OutputBlock(BaseModel):
    directory: Optional[str] = None
    formats: List[Literal["json", "csv"]] = Field(default_factory=lambda: ["json", "csv"])
    emit_paths: bool = False

    model_config = ConfigDict(extra="forbid")


class ExperimentSpec(BaseModel):
    schema_version: Literal["1.0"]
    name: str = "experiment"
    model: ModelBlock
    solver: SolverBlock = Field(default_factory=SolverBlock)
    checks: List[CheckSpec] = Field(default_factory=list)
    output: OutputBlock = Field(default_factory=OutputBlock)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _checks_consistent(self):
        labels = [check.label for check in self.checks]
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        if duplicates:
            raise ValueError(f"duplicate check names: {', '.join(duplicates)}; set 'name' to tell them apart")
        for i, check in enumerate(self.checks):
            needs_seed = check.kind in MC_CHECKS or (
                check.kind == CheckKind.VALUE_MATCH and self.solver.mode != SolverMode.ODE
            )
            if needs_seed and check.seed is None and self.solver.seed is None:
                raise ValueError(f"checks[{i}] ({check.label}) samples randomness and needs a seed")
        return self


class CheckReport(BaseModel):
    """Outcome of one check, as listed in the run summary."""
    kind: CheckKind
    value: Optional[float] = None
    reference: Optional[float] = None
    margin: Optional[float] = None
    stderr: Optional[float] = None
    tolerance: Optional[float] = None
    passed: bool = Field(..., serialization_alias="pass")
    details: Dict[str, Any] = Field(default_factory=dict)


class RunSummary(BaseModel):
    name: str
    schema_version: str = SCHEMA_VERSION
    mode: SolverMode
    seed: int
    value: float = Field(..., description="Q at (0, x0)")
    qbar0: float
    stderr: Optional[float] = None
    checks: Dict[str, CheckReport] = Field(default_factory=dict)
    passed: bool = Field(..., serialization_alias="pass")
