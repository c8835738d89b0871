"""
Path: engine/app/models/mechanism.py
Purpose: Pydantic models for branching / immigration mechanisms and mixed states
Logic:
  - LevyAtomMeasure is a list of (z1, z2, weight) atoms; parses straight from JSON [[z1, z2, w], ...]
  - Mechanism models only enforce types (and reject unknown keys); admissibility is
    reported by MechanismService.validate_branching so a bad file yields a full violation list
  - MixedState is the only model that enforces its invariant on construction
"""

from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, RootModel

Atom = Tuple[float, int, float]


class LevyAtomMeasure(RootModel[Tuple[Atom, ...]]):
    """Finite atomic Levy measure: sequence of (z1, z2, weight)"""
    model_config = ConfigDict(frozen=True)
    root: Tuple[Atom, ...] = ()

    @property
    def atoms(self) -> Tuple[Atom, ...]:
        return self.root

    @property
    def total_mass(self) -> float:
        return float(sum(w for _, _, w in self.root))

    def __len__(self) -> int:
        return len(self.root)

    def __iter__(self):
        return iter(self.root)


class BranchingMechanism(BaseModel):
    """Parameters (a11, a21, alpha, n1, n2) of the branching mechanism"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    a11: float = Field(..., description="Linear drift coefficient of Phi_1")
    a21: float = Field(default=0.0, description="Cross drift from type 2 into the continuous coordinate")
    alpha: float = Field(default=0.0, description="Diffusion coefficient")
    n1: LevyAtomMeasure = Field(default_factory=LevyAtomMeasure, description="Jumps driven by the continuous mass (z2 >= 0)")
    n2: LevyAtomMeasure = Field(default_factory=LevyAtomMeasure, description="Jumps driven by type-2 individuals (z2 >= -1)")


class ImmigrationMechanism(BaseModel):
    """Immigration drift b and immigration measure m"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    b: float = Field(default=0.0, description="Constant immigration drift into y1")
    m: LevyAtomMeasure = Field(default_factory=LevyAtomMeasure, description="Compound-Poisson immigration atoms")


class MechanismFile(BaseModel):
    """Top-level layout of a mechanism JSON file"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    branching: BranchingMechanism
    immigration: Optional[ImmigrationMechanism] = None


class MixedState(BaseModel):
    """A point of R+ x N"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    y1: float = Field(..., ge=0.0, description="Continuous coordinate")
    y2: int = Field(..., ge=0, description="Integer coordinate")

    @classmethod
    def of(cls, pair) -> "MixedState":
        return cls(y1=float(pair[0]), y2=int(pair[1]))

    def as_tuple(self) -> Tuple[float, int]:
        return (self.y1, self.y2)


class MomentMatrix(BaseModel):
    """First-moment matrix H"""
    model_config = ConfigDict(frozen=True)

    h: Tuple[Tuple[float, float], Tuple[float, float]]

    @property
    def trace(self) -> float:
        return self.h[0][0] + self.h[1][1]

    @property
    def det(self) -> float:
        return self.h[0][0] * self.h[1][1] - self.h[0][1] * self.h[1][0]


class ValidationReport(BaseModel):
    """Admissibility report; empty violations means the mechanism is valid"""
    violations: List[str] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


class StabilityReport(BaseModel):
    """Spectral summary of H and the two ergodicity hypotheses"""
    eigenvalues: Tuple[Tuple[float, float], Tuple[float, float]] = Field(
        ..., description="(real, imag) of each eigenvalue, larger real part first"
    )
    trace: float
    det: float
    discriminant: float
    ergodic_hypothesis: bool = Field(..., description="det > 0 and trace < 0")
    negative_real_parts: bool = Field(..., description="Every eigenvalue has strictly negative real part")


class JumpRegion(str, Enum):
    """Which jumps count as large for a threshold r"""
    PRODUCT = "product"          # z1 > r1 and z2 > r2
    EXCEEDANCE = "exceedance"    # z1 > r1 or z2 > r2


class TruncatedMechanism(BaseModel):
    """Generalized mechanism record evaluated by the truncated-flow formulas"""
    model_config = ConfigDict(frozen=True)

    a11: float = Field(..., description="a11 plus the large-jump compensation of n1")
    a21: float = Field(..., description="a21 plus the small-jump first moment of n2 in z1")
    b11: float = Field(..., description="Small-jump first moment of n1 in z2")
    b21: float = Field(..., description="Small-jump first moment of n2 in z2")
    alpha: float
    n1: LevyAtomMeasure = Field(..., description="n1 restricted to the small-jump set")
    n2: LevyAtomMeasure = Field(..., description="n2 restricted to the small-jump set")
    r: Tuple[float, float]
    region: JumpRegion
