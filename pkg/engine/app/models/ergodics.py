"""
Path: engine/app/models/ergodics.py
Purpose: Records produced by the Wasserstein / ergodicity analysis
"""

from typing import List, Optional

from pydantic import BaseModel, Field


class ErgodicRate(BaseModel):
    """Exponential W1 contraction constants"""
    lambda1: float = Field(..., description="Larger root of the characteristic polynomial of H")
    lambda2: float = Field(..., description="Smaller root")
    theta11: float
    theta12: float
    theta21: float
    theta22: float
    vartheta: float = Field(..., gt=0, description="theta11 + theta21 + |theta12| + |theta22|")
    rate: float = Field(..., gt=0, description="-lambda1")


class W1Report(BaseModel):
    """Analytic bounds and the empirical distance between two transition laws"""
    lower: float
    upper: float
    empirical_w1: float
    bootstrap_se: float
    rate: Optional[float] = None
    vartheta: Optional[float] = None
    ergodic_bound: Optional[float] = Field(default=None, description="vartheta |x - y| e^{-rate t}")
    metric: str = "l1"
    t: float
    replicas: int


class StationarityCheck(BaseModel):
    """Stationary-law existence criterion"""
    eigen_ok: bool
    log_moment: float
    stationary_exists: bool


class StationaryConvergenceRow(BaseModel):
    """Distance to the stationary proxy at one time"""
    t: float
    empirical_w1: float = Field(..., description="W1 between P_t(x, .) and the stationary proxy")
    bootstrap_se: float
    bound: float = Field(..., description="vartheta W1(delta_x, proxy) e^{-rate t}")


class StationaryConvergenceReport(BaseModel):
    """Convergence of the transition law towards an empirical stationary proxy"""
    rows: List[StationaryConvergenceRow]
    initial_distance: float = Field(..., description="W1(delta_x, proxy)")
    rate: float
    vartheta: float
    noise_floor: float = Field(..., description="W1 between random halves of the last sample and the proxy")
    burn_in: float
    metric: str = "l1"
    replicas: int
