"""
Path: engine/app/services/oracle_service.py
Purpose: Independent brute-force verifiers used to certify the analytic and sampling code
Logic:
  - db_generator builds the truncated rate matrix of a discrete-state branching process,
    booking transitions beyond N-1 as leak instead of repairing them
  - ctmc_transition uniformizes the generator; the leaked mass is accumulated into a certified bound
  - riccati_closed_form solves the one-type continuous-state flow by separation of variables
  - w1_bruteforce enumerates every pairing of two tiny samples
"""

import itertools
import logging
import math
from typing import Sequence

import numpy as np
from scipy.stats import poisson

from ..errors import DomainError, NumericError
from ..models.oracle import TransitionRow, TruncatedGenerator
from .laplace_service import check_probability_vector

logger = logging.getLogger(__name__)

DEFAULT_TRUNCATION = 400
POISSON_TAIL = 1e-12
BRUTEFORCE_LIMIT = 7


class OracleService:
    """Brute-force oracles (test support)"""

    @staticmethod
    def db_generator(rate: float, offspring: Sequence[float], n: int = DEFAULT_TRUNCATION) -> TruncatedGenerator:
        """
        Truncated generator: state i jumps to i-1+j at rate i*a*p_j for j != 1.

        Args:
            rate: Branching rate a > 0
            offspring: Offspring law p_0, p_1, ...
            n: Number of retained states (>= 2)

        Returns:
            TruncatedGenerator with leak[i] the rate of jumps landing at or above n
        """
        probs = check_probability_vector(offspring)
        if n < 2:
            raise DomainError(f"Invalid truncation: {n}. Must be >= 2.")
        if not (rate > 0):
            raise DomainError(f"Invalid rate: {rate}. Must be > 0.")
        q = np.zeros((n, n))
        leak = np.zeros(n)
        for i in range(1, n):
            out = 0.0
            for j, p in enumerate(probs):
                if j == 1 or p == 0.0:
                    continue
                r = i * rate * p
                target = i - 1 + j
                if target < n:
                    q[i, target] += r
                else:
                    leak[i] += r
                out += r
            q[i, i] = -out
        q.flags.writeable = False
        leak.flags.writeable = False
        return TruncatedGenerator(q=q, n=n, leak=leak)

    @staticmethod
    def ctmc_transition(gen: TruncatedGenerator, i: int, t: float) -> TransitionRow:
        """Row i of the truncated transition matrix at time t, by uniformization."""
        if not (0 <= i < gen.n):
            raise DomainError(f"Invalid state: {i}. Must be in [0, {gen.n - 1}].")
        if t < 0:
            raise DomainError(f"Invalid time: {t}. Must be >= 0.")
        start = np.zeros(gen.n)
        start[i] = 1.0
        uniform_rate = float(np.max(-np.diag(gen.q)))
        if t == 0 or uniform_rate == 0.0:
            return TransitionRow(probabilities=start, leak_bound=0.0, poisson_terms=1)

        mean = uniform_rate * t
        terms = int(poisson.isf(POISSON_TAIL, mean)) + 2
        weights = poisson.pmf(np.arange(terms), mean)
        kernel = np.eye(gen.n) + np.asarray(gen.q) / uniform_rate
        leak_per_step = np.asarray(gen.leak) / uniform_rate

        v = start
        row = weights[0] * v
        leaked = 0.0
        for k in range(1, terms):
            leaked += float(v @ leak_per_step)
            v = v @ kernel
            row += weights[k] * v
        tail = max(0.0, 1.0 - float(weights.sum()))
        logger.debug("uniformization: rate=%.4g terms=%d leaked<=%.3g", uniform_rate, terms, leaked)
        row.flags.writeable = False
        return TransitionRow(probabilities=row, leak_bound=leaked + tail, poisson_terms=terms)

    @classmethod
    def ctmc_transition_row(cls, gen: TruncatedGenerator, i: int, t: float) -> np.ndarray:
        """Sub-stochastic probability vector Q_i.(t)."""
        return cls.ctmc_transition(gen, i, t).probabilities

    @staticmethod
    def riccati_closed_form(a11: float, alpha: float, lambda1: float, t: float) -> float:
        """
        V1(t) for dV/dt = -a11 V - alpha V^2, V(0) = lambda1.

        Raises:
            NumericError: the denominator vanishes before t (reports the blow-up time)
        """
        if a11 == 0:
            denom = 1.0 + alpha * lambda1 * t
            if denom <= 0:
                raise NumericError("Riccati solution blows up", time=-1.0 / (alpha * lambda1))
            return lambda1 / denom
        decay = math.exp(-a11 * t)
        denom = a11 + alpha * lambda1 * (1.0 - decay)
        if denom == 0 or (denom > 0) != (a11 > 0):
            blow_up = -math.log(1.0 + a11 / (alpha * lambda1)) / a11
            raise NumericError("Riccati solution blows up", time=blow_up)
        return a11 * lambda1 * decay / denom

    @staticmethod
    def w1_bruteforce(a, b, metric: str = "euclidean") -> float:
        """Minimum mean pairing cost over all n! permutations (n <= 7)."""
        a = np.asarray(a, dtype=float).reshape(-1, 2)
        b = np.asarray(b, dtype=float).reshape(-1, 2)
        if len(a) != len(b):
            raise DomainError(f"Sample sizes differ: {len(a)} vs {len(b)}")
        n = len(a)
        if n > BRUTEFORCE_LIMIT:
            raise DomainError(f"Brute force limited to n <= {BRUTEFORCE_LIMIT}, got {n}")
        if n == 0:
            raise DomainError("Empty samples")
        diff = a[:, None, :] - b[None, :, :]
        cost = np.abs(diff).sum(axis=2) if metric == "l1" else np.sqrt((diff ** 2).sum(axis=2))
        best = min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
        return float(best / n)
