"""
Path: engine/app/models/oracle.py
Purpose: Models for the brute-force verification oracles
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class TruncatedGenerator(BaseModel):
    """Rate matrix of a discrete-state branching process on {0, ..., N-1}"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    q: np.ndarray = Field(..., description="N x N rate matrix; row sums <= 0")
    n: int = Field(..., ge=2, description="Number of retained states")
    leak: np.ndarray = Field(..., description="Per-state rate escaping past N-1")


class TransitionRow(BaseModel):
    """One row of the truncated transition matrix"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    probabilities: np.ndarray
    leak_bound: float = Field(..., ge=0, description="Upper bound on mass lost through truncation")
    poisson_terms: int = Field(..., ge=1, description="Uniformization terms summed")
