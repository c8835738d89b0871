"""
Path: engine/app/services/gw_limit_service.py
Purpose: Rescaled Galton-Watson sequences converging to the continuous-time branching processes
Logic:
  - build_gw1: one-type offspring law p_{k,i} = p_i / k (i != 1), p_{k,1} = (p_1 - 1) / k + 1, gamma_k = a k
  - build_gw2: two-type mixtures; type-1 individuals carry mass 1/k, jumps of size z1 spawn round(k z1)
    type-1 offspring, atoms with z1 = 0 get dedicated components so every atom has a discrete counterpart
  - Chains are simulated for whole replica blocks at once: per generation and type one multinomial
    draw over the flattened offspring table
  - rescaled_laplace_gw / convergence_report compare Monte Carlo functionals with the ODE flows
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import DomainError, PreconditionError
from ..models.gw import (
    ConvergenceRow,
    GW1Spec,
    GW2Spec,
    GWChainPath,
    OffspringComponent,
    OffspringMixture,
)
from ..models.mechanism import BranchingMechanism
from .laplace_service import LaplaceService, as_state, check_probability_vector
from .mechanism_service import MechanismService, check_lambda
from .rng_streams import check_seed, stream_generators
from .simulation_service import REPLICA_BLOCK

logger = logging.getLogger(__name__)

POPULATION_CAP = 10 ** 9


def _horner(coeffs: Sequence[float], z: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * z + c
    return acc


def generations_for(gamma_k: float, t: float) -> int:
    """floor(gamma_k * t), tolerant to round-off just below an integer."""
    return int(math.floor(gamma_k * t + 1e-9))


class GWLimitService:
    """
    Galton-Watson approximations and convergence experiments.
    """

    # ===== ONE-TYPE (DISCRETE-STATE) SEQUENCES =====

    @staticmethod
    def build_gw1(rate: float, offspring: Sequence[float], k: int) -> GW1Spec:
        """
        Rescaled offspring law for the k-th approximating GW process.

        Args:
            rate: Branching rate a > 0
            offspring: Offspring law p_0, p_1, ...
            k: Sequence index (>= 1)

        Returns:
            GW1Spec with gamma_k = a k
        """
        if k < 1:
            raise DomainError(f"Invalid k: {k}. Must be >= 1.")
        if not (rate > 0):
            raise DomainError(f"Invalid rate: {rate}. Must be > 0.")
        probs = list(check_probability_vector(offspring))
        if len(probs) < 2:
            probs.append(0.0)
        rescaled = [p / k for p in probs]
        rescaled[1] = (probs[1] - 1.0) / k + 1.0
        if min(rescaled) < 0:
            raise DomainError(f"Rescaled offspring law is not a probability vector: {rescaled}")
        return GW1Spec(rate=rate, k=k, gamma_k=rate * k, offspring=tuple(rescaled))

    @staticmethod
    def gw1_generator(spec: GW1Spec, z: float) -> float:
        """U_k(z) = gamma_k (g_k(z) - z)."""
        return spec.gamma_k * (_horner(spec.offspring, z) - z)

    @staticmethod
    def gw1_limit_generator(rate: float, offspring: Sequence[float], z: float) -> float:
        """u(z) = a (g(z) - z)."""
        return rate * (_horner(check_probability_vector(offspring), z) - z)

    @staticmethod
    def gw1_lipschitz(rate: float, offspring: Sequence[float]) -> float:
        """k-independent Lipschitz constant of U_k on [0, 1]."""
        probs = check_probability_vector(offspring)
        # |u'| <= a (max offspring index + 1)
        return rate * len(probs)

    @staticmethod
    def gw1_composition(spec: GW1Spec, z: float, t: float) -> float:
        """F_k(z, t): floor(gamma_k t)-fold composition of g_k applied to z."""
        if not (0.0 <= z <= 1.0):
            raise DomainError(f"Invalid z: {z}. Must be in [0, 1].")
        value = z
        for _ in range(generations_for(spec.gamma_k, t)):
            value = _horner(spec.offspring, value)
        return min(max(value, 0.0), 1.0)

    # ===== TWO-TYPE (MIXED-STATE) SEQUENCES =====

    @staticmethod
    def build_gw2(mech: BranchingMechanism, k: int) -> GW2Spec:
        """
        Offspring mixtures of the k-th two-type approximating chain.

        Args:
            mech: Valid branching mechanism with a11 >= 0
            k: Mass scale (>= 1)

        Returns:
            GW2Spec whose mixtures both carry total weight gamma_k
        """
        if k < 1:
            raise DomainError(f"Invalid k: {k}. Must be >= 1.")
        report = MechanismService.validate_branching(mech)
        if not report.ok:
            raise DomainError("Invalid mechanism: " + "; ".join(report.violations))
        if mech.a11 < 0:
            raise PreconditionError(f"build_gw2 needs a11 >= 0 (mixture weight), got {mech.a11}")

        threshold = 1.0 / math.sqrt(k)
        alpha = mech.alpha

        tilde = [
            OffspringComponent(name="tilde_1", weight=mech.a11, outcomes=((0, 0, 1.0),)),
            OffspringComponent(
                name="tilde_2",
                weight=(2.0 * alpha + 1.0) * k,
                outcomes=tuple(o for o in (
                    (0, 0, alpha / (2.0 * alpha + 1.0)),
                    (1, 0, 1.0 / (2.0 * alpha + 1.0)),
                    (2, 0, alpha / (2.0 * alpha + 1.0)),
                ) if o[2] > 0),
            ),
        ]
        big1 = [(z1, z2, w) for z1, z2, w in mech.n1 if z1 > threshold]
        sigma = sum(w * (z1 - 1.0 / k) for z1, _, w in big1)
        mass1 = sum(w for _, _, w in big1)
        gamma3 = sigma + mass1 / k + 1.0
        outcomes3 = [(int(round(k * z1)), int(z2), (w / k) / gamma3) for z1, z2, w in big1]
        if sigma > 0:
            outcomes3.append((0, 0, sigma / gamma3))
        outcomes3.append((1, 0, 1.0 / gamma3))
        tilde.append(OffspringComponent(name="tilde_3", weight=gamma3, outcomes=tuple(outcomes3)))
        flat1 = [(z2, w) for z1, z2, w in mech.n1 if z1 == 0]
        if flat1:
            mass = sum(w for _, w in flat1)
            tilde.append(OffspringComponent(
                name="tilde_4", weight=mass / k,
                outcomes=tuple((1, int(z2), w / mass) for z2, w in flat1),
            ))

        bar = [OffspringComponent(name="bar_1", weight=mech.a21 * k, outcomes=((1, 1, 1.0),))]
        big2 = [(z1, z2, w) for z1, z2, w in mech.n2 if z1 > threshold]
        if big2:
            mass = sum(w for _, _, w in big2)
            bar.append(OffspringComponent(
                name="bar_2", weight=mass,
                outcomes=tuple((int(round(k * z1)), int(z2) + 1, w / mass) for z1, z2, w in big2),
            ))
        flat2 = [(z2, w) for z1, z2, w in mech.n2 if z1 == 0]
        if flat2:
            mass = sum(w for _, w in flat2)
            bar.append(OffspringComponent(
                name="bar_3", weight=mass,
                outcomes=tuple((0, int(z2) + 1, w / mass) for z2, w in flat2),
            ))

        gamma_tilde = sum(c.weight for c in tilde)
        gamma_bar = sum(c.weight for c in bar)
        g1 = OffspringMixture(components=tuple(tilde) + (
            OffspringComponent(name="type1_idle", weight=gamma_bar, outcomes=((1, 0, 1.0),)),
        ))
        g2 = OffspringMixture(components=tuple(bar) + (
            OffspringComponent(name="type2_idle", weight=gamma_tilde, outcomes=((0, 1, 1.0),)),
        ))
        logger.debug("build_gw2 k=%d gamma_k=%.6g", k, gamma_tilde + gamma_bar)
        return GW2Spec(k=k, gamma_k=gamma_tilde + gamma_bar, g1=g1, g2=g2)

    @staticmethod
    def simulate_gw2(spec: GW2Spec, x0: Tuple[int, int], steps: int, seed: int, stream: int = 0) -> GWChainPath:
        """
        One two-type chain, generation by generation.

        Args:
            spec: Offspring mixtures
            x0: Initial (type-1, type-2) counts
            steps: Generations to simulate (>= 0)
            seed: Base seed
            stream: Stream index; stream i reproduces row i of a one-replica block

        Returns:
            GWChainPath of shape (steps + 1, 2)
        """
        if steps < 0:
            raise DomainError(f"Invalid steps: {steps}. Must be >= 0.")
        rng, _ = stream_generators(seed, (stream,))
        sampler = _ChainSampler(spec)
        n1 = np.array([int(x0[0])], dtype=np.int64)
        n2 = np.array([int(x0[1])], dtype=np.int64)
        history = [(int(n1[0]), int(n2[0]))]
        frozen = np.zeros(1, dtype=bool)
        for _ in range(steps):
            n1, n2, frozen = sampler.advance(n1, n2, frozen, rng)
            history.append((int(n1[0]), int(n2[0])))
        if frozen[0]:
            logger.warning("GW chain hit the population cap %d; path frozen", POPULATION_CAP)
        generations = np.asarray(history, dtype=np.int64)
        generations.flags.writeable = False
        return GWChainPath(generations=generations, truncated=bool(frozen[0]))

    @classmethod
    def gw2_terminal(cls, spec: GW2Spec, x0: Tuple[int, int], steps: int, replicas: int, seed: int,
                     stream_prefix: Tuple[int, ...] = (), workers: int = 1) -> Tuple[np.ndarray, int]:
        """Generation-`steps` populations of independent chains: (replicas x 2 counts, truncated count)."""
        if replicas < 1:
            raise DomainError(f"Invalid replicas: {replicas}. Must be >= 1.")
        check_seed(seed)
        tasks = [
            _GWBlockTask(spec=spec, x0=(int(x0[0]), int(x0[1])), steps=steps,
                         count=min(REPLICA_BLOCK, replicas - start), seed=seed,
                         key=tuple(stream_prefix) + (block,))
            for block, start in enumerate(range(0, replicas, REPLICA_BLOCK))
        ]
        if workers <= 1 or len(tasks) == 1:
            results = [_run_gw_block(task) for task in tasks]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_gw_block, tasks))
        states = np.vstack([r[0] for r in results])
        truncated = sum(r[1] for r in results)
        if truncated:
            logger.warning("%d GW replicas hit the population cap", truncated)
        return states, truncated

    @classmethod
    def rescaled_laplace_gw(cls, spec: GW2Spec, x, lam: Sequence[float], t: float, replicas: int,
                            seed: int, stream_prefix: Tuple[int, ...] = (),
                            workers: int = 1) -> Tuple[float, float]:
        """
        Monte Carlo E exp{-lambda1 Y1/k - lambda2 Y2} at generation floor(gamma_k t).

        The chain starts from (floor(k x1), x2).
        """
        x = as_state(x)
        l1, l2 = check_lambda(lam)
        start = (int(math.floor(spec.k * x.y1 + 1e-9)), x.y2)
        states, _ = cls.gw2_terminal(spec, start, generations_for(spec.gamma_k, t), replicas, seed,
                                     stream_prefix, workers)
        values = np.exp(-(l1 * states[:, 0] / spec.k + l2 * states[:, 1]))
        if len(values) < 2:
            return float(values.mean()), 0.0
        return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))

    @classmethod
    def convergence_report(cls, mech: BranchingMechanism, x, lam: Sequence[float], t: float,
                           k_list: Sequence[int], replicas: int, seed: int,
                           workers: int = 1) -> List[ConvergenceRow]:
        """Table of |GW estimate - continuum value| over increasing k."""
        if list(k_list) != sorted(set(k_list)) or not k_list:
            raise DomainError(f"Invalid k_list: {list(k_list)}. Must be strictly increasing.")
        continuum = LaplaceService.transition_laplace(mech, x, lam, t)
        rows = []
        for index, k in enumerate(k_list):
            spec = cls.build_gw2(mech, int(k))
            estimate, se = cls.rescaled_laplace_gw(spec, x, lam, t, replicas, seed,
                                                   stream_prefix=(index,), workers=workers)
            logger.info("gw-converge k=%d estimate=%.6f continuum=%.6f se=%.2g", k, estimate, continuum, se)
            rows.append(ConvergenceRow(k=int(k), estimate=estimate, continuum=continuum,
                                       abs_error=abs(estimate - continuum), stderr=se))
        return rows


class _ChainSampler:
    """Multinomial offspring sampling for blocks of chains"""

    def __init__(self, spec: GW2Spec):
        self.pairs1, self.probs1 = spec.g1.table()
        self.pairs2, self.probs2 = spec.g2.table()

    def advance(self, n1: np.ndarray, n2: np.ndarray, frozen: np.ndarray,
                rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        live = ~frozen
        c1 = rng.multinomial(np.where(live, n1, 0), self.probs1)
        c2 = rng.multinomial(np.where(live, n2, 0), self.probs2)
        offspring = c1 @ self.pairs1 + c2 @ self.pairs2
        new1 = np.where(live, offspring[:, 0], n1)
        new2 = np.where(live, offspring[:, 1], n2)
        frozen = frozen | (new1 + new2 > POPULATION_CAP)
        return new1, new2, frozen


@dataclass(frozen=True)
class _GWBlockTask:
    spec: GW2Spec
    x0: Tuple[int, int]
    steps: int
    count: int
    seed: int
    key: Tuple[int, ...]


def _run_gw_block(task: _GWBlockTask) -> Tuple[np.ndarray, int]:
    rng, _ = stream_generators(task.seed, task.key)
    sampler = _ChainSampler(task.spec)
    n1 = np.full(task.count, task.x0[0], dtype=np.int64)
    n2 = np.full(task.count, task.x0[1], dtype=np.int64)
    frozen = np.zeros(task.count, dtype=bool)
    for _ in range(task.steps):
        n1, n2, frozen = sampler.advance(n1, n2, frozen, rng)
    return np.column_stack((n1, n2)).astype(float), int(frozen.sum())
