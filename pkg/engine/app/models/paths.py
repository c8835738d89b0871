"""
Path: engine/app/models/paths.py
Purpose: Simulated trajectories and replica ensembles
Logic:
  - PathRecord keeps step-boundary rows and jump-instant rows, labelled by event
  - EnsembleSample is the terminal-state matrix of independent replicas plus its provenance
"""

from enum import Enum
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .mechanism import MixedState


class JumpSource(str, Enum):
    """Which Poisson stream produced a jump"""
    N1 = "n1"
    N2 = "n2"
    IMMIGRATION = "imm"


class JumpEvent(BaseModel):
    """A single applied jump"""
    model_config = ConfigDict(frozen=True)

    time: float
    source: JumpSource
    dy1: float
    dy2: int


class PathRecord(BaseModel):
    """Time-stamped simulated trajectory"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray = Field(..., description="Nondecreasing times of every recorded row")
    y1: np.ndarray = Field(..., description="Continuous coordinate per row")
    y2: np.ndarray = Field(..., description="Integer coordinate per row")
    events: List[str] = Field(..., description="Row label: step, jump:n1, jump:n2 or jump:imm")
    jumps: List[JumpEvent] = Field(default_factory=list)
    rejected_jumps: int = Field(default=0, ge=0, description="z2 = -1 events dropped to keep y2 >= 0")

    @property
    def states(self) -> List[MixedState]:
        return [MixedState(y1=float(a), y2=int(b)) for a, b in zip(self.y1, self.y2)]

    @property
    def terminal(self) -> Tuple[float, int]:
        return float(self.y1[-1]), int(self.y2[-1])

    def rows(self) -> List[Tuple[float, float, int, str]]:
        return [(float(t), float(a), int(b), e) for t, a, b, e in zip(self.times, self.y1, self.y2, self.events)]


class EnsembleSample(BaseModel):
    """Terminal states of independent replicas"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    states: np.ndarray = Field(..., description="replicas x 2 matrix of (y1, y2)")
    seed: int = Field(..., ge=0, lt=2 ** 64)
    t: float = Field(..., ge=0)
    dt: float = Field(..., gt=0)
    config_digest: str = Field(..., description="sha256 of mechanism and scheme parameters")
    rejected_jumps: int = Field(default=0, ge=0)

    @property
    def replicas(self) -> int:
        return int(self.states.shape[0])

    def sidecar(self) -> dict:
        return {
            "seed": self.seed,
            "t": self.t,
            "dt": self.dt,
            "replicas": self.replicas,
            "config_digest": self.config_digest,
            "rejected_jumps": self.rejected_jumps,
        }
