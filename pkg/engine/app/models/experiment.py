"""
Path: engine/app/models/experiment.py
Purpose: Strict schema of an experiment configuration file
Logic:
  - Unknown keys are rejected (extra="forbid")
  - Defaults: dt = 1e-3, replicas = 10^4, seed = 42
  - Each kind declares the parameters it needs; missing ones fail validation with their names
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .mechanism import JumpRegion


class ExperimentKind(str, Enum):
    """Experiment kinds understood by the CLI"""
    SOLVE_V = "solve-v"
    MOMENTS = "moments"
    SIMULATE = "simulate"
    GW_CONVERGE = "gw-converge"
    TAU_DIST = "tau-dist"
    WASSERSTEIN = "wasserstein"
    STATIONARY = "stationary"
    VALIDATE = "validate"
    ORACLE_ROW = "oracle-row"


REQUIRED_PARAMETERS: Dict[ExperimentKind, Tuple[str, ...]] = {
    ExperimentKind.SOLVE_V: ("lambda_", "t"),
    ExperimentKind.MOMENTS: ("lambda_", "x", "t_grid"),
    ExperimentKind.SIMULATE: ("x", "t"),
    ExperimentKind.GW_CONVERGE: ("x", "lambda_", "t", "k_list"),
    ExperimentKind.TAU_DIST: ("x", "r", "t_grid"),
    ExperimentKind.WASSERSTEIN: ("x", "y", "t"),
    ExperimentKind.STATIONARY: (),
    ExperimentKind.VALIDATE: (),
    ExperimentKind.ORACLE_ROW: ("rate", "offspring", "state", "t"),
}


class ExperimentConfig(BaseModel):
    """One experiment: mechanism file + kind + kind-specific parameters"""
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    mechanism: Optional[str] = Field(default=None, description="Path of the mechanism JSON file")
    kind: ExperimentKind = Field(..., description="Experiment kind")
    lambda_: Optional[Tuple[float, float]] = Field(default=None, alias="lambda", description="Laplace argument")
    lambdas: Optional[List[Tuple[float, float]]] = Field(default=None, description="Laplace arguments (stationary)")
    t: Optional[float] = Field(default=None, ge=0, description="Horizon / evaluation time")
    t_grid: Optional[List[float]] = Field(default=None, description="Evaluation times")
    x: Optional[Tuple[float, int]] = Field(default=None, description="Initial state")
    y: Optional[Tuple[float, int]] = Field(default=None, description="Second initial state")
    r: Optional[Tuple[float, float]] = Field(default=None, description="Large-jump threshold")
    region: JumpRegion = Field(default=JumpRegion.EXCEEDANCE, description="Large-jump set for tau-dist")
    k_list: Optional[List[int]] = Field(default=None, description="GW mass scales")
    replicas: int = Field(default=10_000, ge=1)
    dt: float = Field(default=1e-3, gt=0, description="Simulation time step")
    step: float = Field(default=1e-3, gt=0, description="ODE integrator step")
    seed: int = Field(default=42, ge=0, lt=2 ** 64)
    metric: str = Field(default="l1", pattern="^(l1|euclidean)$", description="W1 ground cost")
    burn_in: Optional[float] = Field(default=None, ge=0, description="Stationary burn-in time")
    rate: Optional[float] = Field(default=None, gt=0, description="Branching rate (oracle-row)")
    offspring: Optional[List[float]] = Field(default=None, description="Offspring law (oracle-row)")
    state: Optional[int] = Field(default=None, ge=0, description="Start state (oracle-row)")
    truncation: int = Field(default=400, ge=2, description="CTMC truncation level (oracle-row)")
    path: bool = Field(default=False, description="Also write the full path of stream 0 (simulate)")
    output_dir: Optional[str] = Field(default=None, description="Result directory")

    @model_validator(mode="after")
    def _kind_parameters(self) -> "ExperimentConfig":
        missing = [name.rstrip("_") for name in REQUIRED_PARAMETERS[self.kind] if getattr(self, name) is None]
        if self.kind != ExperimentKind.ORACLE_ROW and self.mechanism is None:
            missing.insert(0, "mechanism")
        if self.kind == ExperimentKind.STATIONARY and self.lambda_ is None and self.lambdas is None:
            missing.append("lambda")
        if missing:
            raise ValueError(f"kind '{self.kind.value}' requires: {', '.join(missing)}")
        return self
