"""
Path: engine/app/services/ergodic_service.py
Purpose: Wasserstein-1 estimation and ergodicity certification
Logic:
  - wasserstein1_exact solves the optimal assignment between equal-size samples (Hungarian)
  - coupled_sample builds the shared-component coupling from x^y, (x-y)+ and (x-y)-
  - w1_bounds / ergodic_rate evaluate the analytic bounds from the first-moment semigroup
  - bootstrap_w1_se and noise_floor give the sampling-noise scale of empirical distances
  - stationarity_check / stationary_sample handle the process with immigration in the long run
  - stationary_convergence_report measures the approach to a long-run stationary proxy
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import ConsistencyError, DomainError, PreconditionError
from ..models.ergodics import (
    ErgodicRate, StationarityCheck, StationaryConvergenceReport, StationaryConvergenceRow, W1Report,
)
from ..models.mechanism import BranchingMechanism, ImmigrationMechanism, MixedState
from ..models.paths import EnsembleSample
from .laplace_service import LaplaceService, as_state
from .mechanism_service import MechanismService
from .rng_streams import stream_generators
from .simulation_service import SimulationService

logger = logging.getLogger(__name__)

ASSIGNMENT_LIMIT = 2048
BOOTSTRAP_RESAMPLES = 200
NOISE_SPLITS = 20
BURN_IN_TARGET = 1e-3
IDENTITY_TOLERANCE = 1e-9
# stream keys reserved for resampling so they never collide with simulation blocks
BOOTSTRAP_STREAM = (7, 7)
SPLIT_STREAM = (7, 8)
CONVERGENCE_ROLE = 5


def _cost_matrix(a: np.ndarray, b: np.ndarray, metric: str) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    if metric == "l1":
        return np.abs(diff).sum(axis=2)
    if metric == "euclidean":
        return np.sqrt((diff ** 2).sum(axis=2))
    raise DomainError(f"Invalid metric: {metric}. Must be 'euclidean' or 'l1'.")


class ErgodicService:
    """
    Empirical W1 machinery plus the analytic ergodicity constants.
    """

    @staticmethod
    def wasserstein1_exact(a, b, metric: str = "euclidean") -> float:
        """
        W1 between two uniform empirical measures of equal size.

        Args:
            a, b: n x 2 samples, 1 <= n <= 2048
            metric: Ground cost, "euclidean" (default) or "l1"

        Returns:
            Optimal mean assignment cost
        """
        a = np.asarray(a, dtype=float).reshape(-1, 2)
        b = np.asarray(b, dtype=float).reshape(-1, 2)
        if len(a) != len(b):
            raise DomainError(f"Sample sizes differ: {len(a)} vs {len(b)}")
        if len(a) == 0:
            raise DomainError("Empty samples")
        if len(a) > ASSIGNMENT_LIMIT:
            raise DomainError(f"Sample size {len(a)} exceeds the assignment limit {ASSIGNMENT_LIMIT}")
        cost = _cost_matrix(a, b, metric)
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].sum() / len(a))

    @staticmethod
    def coupled_sample(mech: BranchingMechanism, x, y, t: float, replicas: int, dt: float, seed: int,
                       workers: int = 1,
                       imm: Optional[ImmigrationMechanism] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Paired samples from P_t(x, .) and P_t(y, .) sharing the x^y component.

        With immigration only the shared component carries it; the two excess
        components evolve without immigration.

        Returns:
            (n x 2, n x 2) arrays; row i of both uses the same common replica
        """
        x, y = as_state(x), as_state(y)
        common = MixedState(y1=min(x.y1, y.y1), y2=min(x.y2, y.y2))
        excess_x = MixedState(y1=max(x.y1 - y.y1, 0.0), y2=max(x.y2 - y.y2, 0))
        excess_y = MixedState(y1=max(y.y1 - x.y1, 0.0), y2=max(y.y2 - x.y2, 0))
        parts = [
            SimulationService.ensemble(mech, imm if role == 0 else None, start, t, dt, replicas, seed, workers,
                                      stream_prefix=(role,)).states
            for role, start in enumerate((common, excess_x, excess_y))
        ]
        return parts[0] + parts[1], parts[0] + parts[2]

    @staticmethod
    def w1_bounds(mech: BranchingMechanism, x, y, t: float) -> Tuple[float, float]:
        """(|<x-y, pi(t,1)>|, sum_i |x_i - y_i| pi_i(t,1))."""
        x, y = as_state(x), as_state(y)
        p1, p2 = LaplaceService.moment_flow(mech, (1.0, 1.0), t).closed_form
        d1, d2 = x.y1 - y.y1, float(x.y2 - y.y2)
        return abs(d1 * p1 + d2 * p2), abs(d1) * p1 + abs(d2) * p2

    @classmethod
    def w1_bounds_imm(cls, mech: BranchingMechanism, imm: ImmigrationMechanism, x, y,
                      t: float) -> Tuple[float, float]:
        """Same bounds with immigration: the immigration factor is shared by both laws."""
        report = MechanismService.validate_immigration(imm)
        if not report.ok:
            raise DomainError("Invalid immigration mechanism: " + "; ".join(report.violations))
        return cls.w1_bounds(mech, x, y, t)

    @staticmethod
    def ergodic_rate(mech: BranchingMechanism) -> ErgodicRate:
        """
        Roots of the characteristic polynomial of H and the theta constants with
        pi(t, 1) = (theta11 e^{l1 t} + theta12 e^{l2 t}, theta21 e^{l1 t} + theta22 e^{l2 t}).

        Raises:
            PreconditionError: det H <= 0, trace H >= 0, or the untreated case H12 = 0 < H21
        """
        hm = MechanismService.moment_matrix(mech)
        (h11, h12), (h21, h22) = hm.h
        if not (hm.det > 0 and hm.trace < 0):
            raise PreconditionError(f"Ergodic rate needs det H > 0 and trace H < 0 (det={hm.det}, trace={hm.trace})")

        if h12 == 0 and h21 == 0:
            if h11 >= h22:
                rate = ErgodicRate(lambda1=h11, lambda2=h22, theta11=1.0, theta12=0.0,
                                   theta21=0.0, theta22=1.0, vartheta=2.0, rate=-h11)
            else:
                rate = ErgodicRate(lambda1=h22, lambda2=h11, theta11=0.0, theta12=1.0,
                                   theta21=1.0, theta22=0.0, vartheta=2.0, rate=-h22)
        elif h12 == 0:
            raise PreconditionError("Unsupported case H12 = 0 < H21")
        else:
            disc = (h11 - h22) ** 2 + 4.0 * h12 * h21
            if disc <= 0:
                raise PreconditionError("Characteristic polynomial of H has a repeated root")
            root = math.sqrt(disc)
            l1 = 0.5 * (h11 + h22 + root)
            l2 = 0.5 * (h11 + h22 - root)
            t11 = (h11 + h12 - l2) / root
            t12 = (l1 - h11 - h12) / root
            t21 = (h11 + h12 - l2) * (l1 - h11) / (root * h12)
            t22 = (l1 - h11 - h12) * (l2 - h11) / (root * h12)
            rate = ErgodicRate(lambda1=l1, lambda2=l2, theta11=t11, theta12=t12, theta21=t21, theta22=t22,
                               vartheta=t11 + t21 + abs(t12) + abs(t22), rate=-l1)

        for t in (0.1, 1.0, 5.0):
            pi = LaplaceService.matrix_exponential(hm.h, t) @ np.ones(2)
            e1, e2 = math.exp(rate.lambda1 * t), math.exp(rate.lambda2 * t)
            gap = max(abs(rate.theta11 * e1 + rate.theta12 * e2 - pi[0]),
                      abs(rate.theta21 * e1 + rate.theta22 * e2 - pi[1]))
            if gap > IDENTITY_TOLERANCE:
                raise ConsistencyError(f"Ergodic constants miss pi(t, 1) by {gap:.3g}", time=t)
        return rate

    @classmethod
    def bootstrap_w1_se(cls, a, b, resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0,
                        metric: str = "l1") -> float:
        """Bootstrap standard error of the empirical W1 (each sample resampled independently)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        rng, _ = stream_generators(seed, BOOTSTRAP_STREAM)
        n = len(a)
        values = [
            cls.wasserstein1_exact(a[rng.integers(n, size=n)], b[rng.integers(n, size=n)], metric)
            for _ in range(resamples)
        ]
        return float(np.std(values, ddof=1))

    @classmethod
    def noise_floor(cls, a, b, splits: int = NOISE_SPLITS, seed: int = 0, metric: str = "l1") -> float:
        """Mean W1 between random halves of the pooled sample (distance expected with no real difference)."""
        pooled = np.vstack((np.asarray(a, dtype=float), np.asarray(b, dtype=float)))
        n = len(pooled) // 2
        rng, _ = stream_generators(seed, SPLIT_STREAM)
        values = []
        for _ in range(splits):
            order = rng.permutation(len(pooled))
            values.append(cls.wasserstein1_exact(pooled[order[:n]], pooled[order[n:2 * n]], metric))
        return float(np.mean(values))

    @classmethod
    def w1_report(cls, mech: BranchingMechanism, x, y, t: float, replicas: int, dt: float, seed: int,
                  metric: str = "l1", workers: int = 1, imm: Optional[ImmigrationMechanism] = None) -> W1Report:
        """Coupled samples, exact empirical W1, bootstrap SE and the analytic constants."""
        x, y = as_state(x), as_state(y)
        a, b = cls.coupled_sample(mech, x, y, t, replicas, dt, seed, workers, imm=imm)
        if imm is None:
            lower, upper = cls.w1_bounds(mech, x, y, t)
        else:
            lower, upper = cls.w1_bounds_imm(mech, imm, x, y, t)
        empirical = cls.wasserstein1_exact(a, b, metric)
        se = cls.bootstrap_w1_se(a, b, seed=seed, metric=metric)
        try:
            rate = cls.ergodic_rate(mech)
        except PreconditionError as exc:
            logger.info("No ergodic rate: %s", exc)
            rate = None
        bound = None
        if rate is not None:
            distance = float(_cost_matrix(np.array([x.as_tuple()], dtype=float),
                                          np.array([y.as_tuple()], dtype=float), metric)[0, 0])
            bound = rate.vartheta * distance * math.exp(-rate.rate * t)
        return W1Report(
            lower=lower, upper=upper, empirical_w1=empirical, bootstrap_se=se,
            rate=rate.rate if rate else None, vartheta=rate.vartheta if rate else None,
            ergodic_bound=bound, metric=metric, t=t, replicas=replicas,
        )

    @staticmethod
    def stationarity_check(mech: BranchingMechanism, imm: Optional[ImmigrationMechanism]) -> StationarityCheck:
        """Eigenvalue criterion plus the (always finite) log-moment of m."""
        eigen_ok = MechanismService.stability_report(mech).negative_real_parts
        log_moment = 0.0
        if imm is not None:
            for z1, z2, w in imm.m:
                size = math.hypot(z1, z2)
                if size >= 1.0:
                    log_moment += w * math.log(size)
        return StationarityCheck(eigen_ok=eigen_ok, log_moment=log_moment, stationary_exists=eigen_ok)

    @classmethod
    def default_burn_in(cls, mech: BranchingMechanism) -> float:
        """Time after which the contraction envelope is below 1e-3."""
        try:
            rate = cls.ergodic_rate(mech)
            return max(0.0, math.log(rate.vartheta / BURN_IN_TARGET) / rate.rate)
        except PreconditionError:
            envelope = LaplaceService.decay_envelope(mech, (1.0, 1.0))
            return max(0.0, math.log(envelope.c / BURN_IN_TARGET) / envelope.c2)

    @classmethod
    def stationary_sample(cls, mech: BranchingMechanism, imm: Optional[ImmigrationMechanism],
                          burn_in: Optional[float] = None, replicas: int = 10_000, dt: float = 1e-3,
                          seed: int = 42, workers: int = 1) -> EnsembleSample:
        """
        Approximate draws from the stationary law: states at t = burn_in started from the origin.

        Raises:
            PreconditionError: no stationary law exists
        """
        check = cls.stationarity_check(mech, imm)
        if not check.stationary_exists:
            raise PreconditionError("No stationary law: H has an eigenvalue with non-negative real part")
        if burn_in is None:
            burn_in = cls.default_burn_in(mech)
        logger.info("stationary_sample burn-in t=%.3f replicas=%d", burn_in, replicas)
        return SimulationService.ensemble(mech, imm, (0.0, 0), burn_in, dt, replicas, seed, workers)

    @classmethod
    def stationary_convergence_report(
        cls,
        mech: BranchingMechanism,
        imm: Optional[ImmigrationMechanism],
        x,
        t_grid,
        replicas: int = 512,
        dt: float = 1e-3,
        seed: int = 42,
        burn_in: Optional[float] = None,
        metric: str = "l1",
        workers: int = 1,
    ) -> StationaryConvergenceReport:
        """
        Distance from P_t(x, .) to a long-run proxy of the stationary law, next to the
        contraction bound vartheta W1(delta_x, proxy) e^{-rate t}.

        Args:
            mech, imm: Mechanisms (imm None means no immigration)
            x: Start state
            t_grid: Evaluation times
            replicas: Size of the proxy and of each transition sample (<= 2048)
            burn_in: Proxy burn-in (default_burn_in when omitted)

        Raises:
            PreconditionError: no stationary law or no ergodic rate for this mechanism
        """
        x = as_state(x)
        if replicas > ASSIGNMENT_LIMIT:
            raise DomainError(f"Sample size {replicas} exceeds the assignment limit {ASSIGNMENT_LIMIT}")
        rate = cls.ergodic_rate(mech)
        if burn_in is None:
            burn_in = cls.default_burn_in(mech)
        proxy = cls.stationary_sample(mech, imm, burn_in, replicas, dt, seed, workers).states
        start = np.array([x.as_tuple()], dtype=float)
        initial = float(_cost_matrix(start, proxy, metric).mean())

        rows = []
        sample = None
        for j, t in enumerate(float(t) for t in t_grid):
            sample = SimulationService.ensemble(mech, imm, x, t, dt, replicas, seed, workers,
                                                stream_prefix=(CONVERGENCE_ROLE, j)).states
            rows.append(StationaryConvergenceRow(
                t=t,
                empirical_w1=cls.wasserstein1_exact(sample, proxy, metric),
                bootstrap_se=cls.bootstrap_w1_se(sample, proxy, seed=seed, metric=metric),
                bound=rate.vartheta * initial * math.exp(-rate.rate * t),
            ))
            logger.debug("convergence t=%.3f W1=%.4f bound=%.4f", t, rows[-1].empirical_w1, rows[-1].bound)
        floor = cls.noise_floor(sample, proxy, seed=seed, metric=metric) if sample is not None else 0.0
        return StationaryConvergenceReport(
            rows=rows, initial_distance=initial, rate=rate.rate, vartheta=rate.vartheta,
            noise_floor=floor, burn_in=burn_in, metric=metric, replicas=replicas,
        )
