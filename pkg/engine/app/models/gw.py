"""
Path: engine/app/models/gw.py
Purpose: Galton-Watson approximating sequences and their convergence tables
Logic:
  - GW1Spec: one-type rescaled offspring law with time scaling gamma_k
  - OffspringMixture: weighted components, each a finite law on N^2 given as (n1, n2, prob) outcomes
  - GW2Spec bundles the two type-specific mixtures; both share the total weight gamma_k
"""

from typing import Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

Outcome = Tuple[int, int, float]


class GW1Spec(BaseModel):
    """Rescaled one-type offspring law"""
    model_config = ConfigDict(frozen=True)

    rate: float = Field(..., gt=0, description="Branching rate a of the limit process")
    k: int = Field(..., ge=1)
    gamma_k: float = Field(..., gt=0, description="Generations per unit time (a * k)")
    offspring: Tuple[float, ...] = Field(..., description="p_{k,0}, p_{k,1}, ...")


class OffspringComponent(BaseModel):
    """One mixture component of an offspring law"""
    model_config = ConfigDict(frozen=True)

    name: str
    weight: float = Field(..., ge=0)
    outcomes: Tuple[Outcome, ...] = Field(..., description="(type-1 offspring, type-2 offspring, probability)")


class OffspringMixture(BaseModel):
    """Finite mixture of offspring laws"""
    model_config = ConfigDict(frozen=True)

    components: Tuple[OffspringComponent, ...]

    @property
    def total_weight(self) -> float:
        return float(sum(c.weight for c in self.components))

    def normalized_weights(self) -> Dict[str, float]:
        total = self.total_weight
        return {c.name: c.weight / total for c in self.components}

    def table(self) -> Tuple[np.ndarray, np.ndarray]:
        """Flatten to (offspring pairs K x 2, probabilities K) with duplicate pairs merged."""
        total = self.total_weight
        merged: Dict[Tuple[int, int], float] = {}
        for component in self.components:
            if component.weight == 0:
                continue
            share = component.weight / total
            for n1, n2, p in component.outcomes:
                merged[(n1, n2)] = merged.get((n1, n2), 0.0) + share * p
        pairs = sorted(merged)
        probs = np.array([merged[pair] for pair in pairs])
        return np.array(pairs, dtype=np.int64).reshape(-1, 2), probs / probs.sum()


class GW2Spec(BaseModel):
    """Two-type rescaled Galton-Watson sequence member"""
    model_config = ConfigDict(frozen=True)

    k: int = Field(..., ge=1, description="Mass scale of type-1 individuals (mass 1/k)")
    gamma_k: float = Field(..., gt=0, description="Generations per unit time")
    g1: OffspringMixture = Field(..., description="Offspring law of a type-1 individual")
    g2: OffspringMixture = Field(..., description="Offspring law of a type-2 individual")

    def weight(self, name: str) -> float:
        for mixture in (self.g1, self.g2):
            for component in mixture.components:
                if component.name == name:
                    return component.weight
        raise KeyError(name)


class GWChainPath(BaseModel):
    """Generation sizes of one two-type chain"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    generations: np.ndarray = Field(..., description="(steps + 1) x 2 integer population sizes")
    truncated: bool = Field(default=False, description="Population cap hit; later generations frozen")


class ConvergenceRow(BaseModel):
    """One k of a convergence table"""
    k: int
    estimate: float
    continuum: float
    abs_error: float
    stderr: float

