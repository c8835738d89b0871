"""
Path: engine/app/models/flows.py
Purpose: Results of the deterministic ODE flows
Logic:
  - FlowGrid holds a time grid and the flow values on it (pairs for V / pi flows, scalars for F and survival)
  - Arrays are frozen read-only after construction
  - MomentFlow keeps both the integrated and the closed-form moment vector
"""

from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class FlowGrid(BaseModel):
    """Time grid with flow values"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray = Field(..., description="Strictly increasing times starting at 0")
    values: np.ndarray = Field(..., description="Shape (n, 2) for pair flows, (n,) for scalar flows")
    step: float = Field(..., gt=0, description="Nominal integrator step")
    max_undershoot: float = Field(default=0.0, description="Largest negative excursion clamped to 0")

    @property
    def final(self):
        return self.values[-1]

    def columns(self) -> List[str]:
        return ["v1", "v2"] if self.values.ndim == 2 else ["value"]

    def rows(self) -> List[Tuple[float, ...]]:
        if self.values.ndim == 2:
            return [(float(t), float(v[0]), float(v[1])) for t, v in zip(self.times, self.values)]
        return [(float(t), float(v)) for t, v in zip(self.times, self.values)]


class MomentFlow(BaseModel):
    """pi(t, lambda) from RK4 and from the matrix exponential"""
    rk4: Tuple[float, float]
    closed_form: Tuple[float, float]
    max_difference: float


class DecayEnvelope(BaseModel):
    """Exponential envelope constants for V(t, lambda)"""
    c: float = Field(..., gt=0, description="Bound on ||e^{tH}|| e^{c2 t}")
    c1: float = Field(..., ge=0, description="|lambda| * c")
    c2: float = Field(..., gt=0, description="Decay rate of the upper envelope")
    A: float = Field(..., ge=0, description="Decay exponent of the lower bound on V1")
    B: float = Field(..., ge=0, description="Decay exponent of the lower bound on V2")
    kappa: float = Field(..., ge=0, description="Sum of w * min(z1, z1^2) over n1")
    theta: float = Field(..., ge=0, description="n2 mass on z2 = -1")
