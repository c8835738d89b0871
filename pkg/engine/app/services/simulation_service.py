"""
Path: engine/app/services/simulation_service.py
Purpose: Tau-leaping simulation of the branching SDE system, with and without immigration
Logic:
  - TauLeapKernel advances a block of replicas at once: Euler drift (with the n1 compensator),
    Euler-Maruyama diffusion, per-atom Poisson jump counts at left-endpoint rates, clamp y1 >= 0
  - Jumps that would push y2 below 0 are dropped (z2 = -1 events only) and counted
  - Observers hook into each step: path recording, first-large-jump tracking, integrated functional
  - Ensembles run fixed-size replica blocks, one Philox stream per block, in any number of
    worker processes; results are reassembled in block order so they never depend on workers
"""

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DomainError, StepSizeError
from ..models.mechanism import BranchingMechanism, ImmigrationMechanism, JumpRegion, MixedState
from ..models.paths import EnsembleSample, JumpEvent, JumpSource, PathRecord
from .mechanism_service import check_lambda, in_region
from .ode_integrator import time_grid
from .rng_streams import check_seed, stream_generators

logger = logging.getLogger(__name__)

MAX_RATE_DT = 0.5
REPLICA_BLOCK = 4096
SCHEME = "tau-leap/euler-maruyama"

_SOURCES = (JumpSource.N1, JumpSource.N2, JumpSource.IMMIGRATION)


class TauLeapKernel:
    """Vectorized one-step update shared by single paths and ensembles"""

    def __init__(self, mech: BranchingMechanism, imm: Optional[ImmigrationMechanism] = None):
        atoms = [(z1, z2, w, 0) for z1, z2, w in mech.n1] + [(z1, z2, w, 1) for z1, z2, w in mech.n2]
        if imm is not None:
            atoms += [(z1, z2, w, 2) for z1, z2, w in imm.m]
        self.z1 = np.array([a[0] for a in atoms], dtype=float)
        self.z2 = np.array([a[1] for a in atoms], dtype=np.int64)
        self.w = np.array([a[2] for a in atoms], dtype=float)
        self.source = np.array([a[3] for a in atoms], dtype=np.int64)
        self.down_atoms = [i for i, a in enumerate(atoms) if a[1] == -1]
        self.a11 = mech.a11
        self.a21 = mech.a21
        self.alpha = mech.alpha
        self.b = imm.b if imm is not None else 0.0
        self.compensator = float(sum(w * z1 for z1, _, w in mech.n1))

    @property
    def n_atoms(self) -> int:
        return len(self.w)

    def step(self, y1: np.ndarray, y2: np.ndarray, t0: float, h: float,
             rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
        """
        Advance every replica by one leap of length h.

        Returns:
            (new y1, new y2, applied jump counts per replica and atom, rejected events)
        """
        n = len(y1)
        xi = rng.standard_normal(n)
        drivers = np.column_stack((y1, y2.astype(float), np.ones(n)))
        rates = drivers[:, self.source] * self.w
        load = rates.sum(axis=1).max(initial=0.0) * h
        if load > MAX_RATE_DT:
            raise StepSizeError(f"Jump rate * dt = {load:.3g} exceeds {MAX_RATE_DT}; shrink dt", time=t0)
        counts = rng.poisson(rates * h) if self.n_atoms else np.zeros((n, 0), dtype=np.int64)

        drift = -self.a11 * y1 + self.a21 * y2 - self.compensator * y1 + self.b
        new_y1 = y1 + drift * h + np.sqrt(2.0 * self.alpha * np.maximum(y1, 0.0) * h) * xi
        dy2 = counts @ self.z2
        rejected = 0
        short = np.nonzero(y2 + dy2 < 0)[0]
        for row in short:
            deficit = int(-(y2[row] + dy2[row]))
            for atom in self.down_atoms:
                take = min(int(counts[row, atom]), deficit)
                counts[row, atom] -= take
                deficit -= take
                rejected += take
                if deficit == 0:
                    break
        if len(short):
            dy2 = counts @ self.z2
        new_y1 = np.maximum(new_y1 + counts @ self.z1, 0.0)
        new_y2 = y2 + dy2
        return new_y1, new_y2, counts, rejected


class PathRecorder:
    """Observer building a PathRecord for a single replica"""

    def __init__(self, kernel: TauLeapKernel, x0: MixedState, timing: np.random.Generator):
        self.kernel = kernel
        self.timing = timing
        self.times = [0.0]
        self.y1 = [x0.y1]
        self.y2 = [x0.y2]
        self.events = ["step"]
        self.jumps: List[JumpEvent] = []

    def observe(self, t0, h, y1_old, y2_old, y1, y2, counts) -> None:
        k = self.kernel
        fired = []
        for atom in np.nonzero(counts[0])[0]:
            fired += [atom] * int(counts[0, atom])
        if fired:
            instants = np.sort(t0 + h * self.timing.random(len(fired)))
            level1, level2 = float(y1_old[0]), int(y2_old[0])
            for instant, atom in zip(instants, self._order(fired, level2)):
                source = _SOURCES[k.source[atom]]
                level1 += float(k.z1[atom])
                level2 += int(k.z2[atom])
                self.jumps.append(JumpEvent(time=float(instant), source=source,
                                            dy1=float(k.z1[atom]), dy2=int(k.z2[atom])))
                self.times.append(float(instant))
                self.y1.append(max(level1, 0.0))
                self.y2.append(level2)
                self.events.append(f"jump:{source.value}")
        self.times.append(t0 + h)
        self.y1.append(float(y1[0]))
        self.y2.append(int(y2[0]))
        self.events.append("step")

    def _order(self, fired: List[int], level2: int) -> List[int]:
        """Uniformly random order of the fired atoms, except that an upward move is pulled
        forward whenever the next one would take y2 below zero."""
        z2 = self.kernel.z2
        pending = [fired[i] for i in self.timing.permutation(len(fired))]
        ordered = []
        while pending:
            pick = 0
            if level2 + z2[pending[0]] < 0:
                pick = next((j for j, atom in enumerate(pending) if z2[atom] > 0), 0)
            atom = pending.pop(pick)
            level2 += int(z2[atom])
            ordered.append(atom)
        return ordered

    def record(self, rejected: int) -> PathRecord:
        return PathRecord(
            times=np.asarray(self.times),
            y1=np.asarray(self.y1, dtype=float),
            y2=np.asarray(self.y2, dtype=np.int64),
            events=self.events,
            jumps=self.jumps,
            rejected_jumps=rejected,
        )


class FirstJumpTracker:
    """Observer recording, per replica, the first jump inside the large-jump region"""

    def __init__(self, kernel: TauLeapKernel, n: int, r: Tuple[float, float],
                 region: JumpRegion, timing: np.random.Generator):
        self.large = np.array([in_region(z1, z2, r, region) for z1, z2 in zip(kernel.z1, kernel.z2)], dtype=bool)
        self.first = np.full(n, np.inf)
        self.timing = timing

    def observe(self, t0, h, y1_old, y2_old, y1, y2, counts) -> None:
        if not self.large.any():
            return
        big = counts[:, self.large]
        rows = np.nonzero((big.sum(axis=1) > 0) & np.isinf(self.first))[0]
        if len(rows) == 0:
            return
        c = big[rows]
        u = self.timing.random(c.shape)
        # earliest of c uniform instants in the step is 1 - U^(1/c)
        offsets = np.where(c > 0, 1.0 - u ** (1.0 / np.maximum(c, 1)), np.inf)
        self.first[rows] = t0 + h * offsets.min(axis=1)


class IntegralTracker:
    """Observer accumulating int <lambda, Y(s)> ds with the trapezoid rule"""

    def __init__(self, n: int, lam: Tuple[float, float]):
        self.lam = lam
        self.total = np.zeros(n)

    def observe(self, t0, h, y1_old, y2_old, y1, y2, counts) -> None:
        l1, l2 = self.lam
        self.total += 0.5 * h * (l1 * (y1_old + y1) + l2 * (y2_old + y2))


def _advance(kernel: TauLeapKernel, y1: np.ndarray, y2: np.ndarray, horizon: float, dt: float,
             rng: np.random.Generator, observers: Sequence = ()) -> Tuple[np.ndarray, np.ndarray, int]:
    times = time_grid(horizon, dt)
    rejected = 0
    for i in range(1, len(times)):
        t0, h = times[i - 1], times[i] - times[i - 1]
        new_y1, new_y2, counts, dropped = kernel.step(y1, y2, t0, h, rng)
        rejected += dropped
        for observer in observers:
            observer.observe(t0, h, y1, y2, new_y1, new_y2, counts)
        y1, y2 = new_y1, new_y2
    if rejected:
        logger.warning("Dropped %d z2=-1 jump events to keep y2 >= 0", rejected)
    return y1, y2, rejected


@dataclass(frozen=True)
class BlockTask:
    """One replica block: everything a worker process needs"""
    mech: BranchingMechanism
    imm: Optional[ImmigrationMechanism]
    x0: Tuple[float, int]
    horizon: float
    dt: float
    count: int
    seed: int
    key: Tuple[int, ...]
    jump_threshold: Optional[Tuple[float, float]] = None
    jump_region: JumpRegion = JumpRegion.EXCEEDANCE
    integral_lambda: Optional[Tuple[float, float]] = None


@dataclass
class BlockResult:
    states: np.ndarray
    rejected: int
    first_jumps: Optional[np.ndarray] = None
    integrals: Optional[np.ndarray] = None


def run_block(task: BlockTask) -> BlockResult:
    """Simulate one block of replicas (module-level so worker processes can import it)."""
    kernel = TauLeapKernel(task.mech, task.imm)
    dynamics, timing = stream_generators(task.seed, task.key)
    y1 = np.full(task.count, float(task.x0[0]))
    y2 = np.full(task.count, int(task.x0[1]), dtype=np.int64)
    observers = []
    tracker = integral = None
    if task.jump_threshold is not None:
        tracker = FirstJumpTracker(kernel, task.count, task.jump_threshold, task.jump_region, timing)
        observers.append(tracker)
    if task.integral_lambda is not None:
        integral = IntegralTracker(task.count, task.integral_lambda)
        observers.append(integral)
    y1, y2, rejected = _advance(kernel, y1, y2, task.horizon, task.dt, dynamics, observers)
    return BlockResult(
        states=np.column_stack((y1, y2.astype(float))),
        rejected=rejected,
        first_jumps=tracker.first if tracker is not None else None,
        integrals=integral.total if integral is not None else None,
    )


def config_digest(mech: BranchingMechanism, imm: Optional[ImmigrationMechanism], x0: MixedState,
                  t: float, dt: float) -> str:
    """sha256 over the mechanism and the scheme parameters."""
    payload = {
        "branching": mech.model_dump(mode="json"),
        "immigration": imm.model_dump(mode="json") if imm is not None else None,
        "x0": [x0.y1, x0.y2],
        "t": t,
        "dt": dt,
        "scheme": SCHEME,
        "block": REPLICA_BLOCK,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


class SimulationService:
    """
    Path and ensemble simulation of the branching SDE system.
    """

    @staticmethod
    def _check(x0, horizon: float, dt: float) -> MixedState:
        x0 = x0 if isinstance(x0, MixedState) else MixedState.of(x0)
        if not (dt > 0):
            raise DomainError(f"Invalid dt: {dt}. Must be > 0.")
        if not (horizon >= 0):
            raise DomainError(f"Invalid horizon: {horizon}. Must be >= 0.")
        return x0

    @classmethod
    def simulate_msbi(cls, mech: BranchingMechanism, imm: Optional[ImmigrationMechanism], x0,
                      horizon: float, dt: float, seed: int, stream: int = 0) -> PathRecord:
        """
        Simulate one path with immigration.

        Args:
            mech: Branching mechanism
            imm: Immigration mechanism (None for none)
            x0: Initial state
            horizon: Final time
            dt: Leap length
            seed: Base seed
            stream: Stream index; stream i reproduces row i of a one-replica ensemble

        Returns:
            PathRecord with step rows and jump rows
        """
        x0 = cls._check(x0, horizon, dt)
        kernel = TauLeapKernel(mech, imm)
        dynamics, timing = stream_generators(seed, (stream,))
        recorder = PathRecorder(kernel, x0, timing)
        y1 = np.array([x0.y1])
        y2 = np.array([x0.y2], dtype=np.int64)
        _, _, rejected = _advance(kernel, y1, y2, horizon, dt, dynamics, [recorder])
        return recorder.record(rejected)

    @classmethod
    def simulate_msb(cls, mech: BranchingMechanism, x0, horizon: float, dt: float,
                     seed: int, stream: int = 0) -> PathRecord:
        """Simulate one path without immigration."""
        return cls.simulate_msbi(mech, None, x0, horizon, dt, seed, stream)

    @staticmethod
    def _run_blocks(tasks: List[BlockTask], workers: int) -> List[BlockResult]:
        if workers <= 1 or len(tasks) == 1:
            return [run_block(task) for task in tasks]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_block, tasks))

    @classmethod
    def _tasks(cls, mech, imm, x0: MixedState, t: float, dt: float, replicas: int, base_seed: int,
               stream_prefix: Tuple[int, ...] = (), **options) -> List[BlockTask]:
        if replicas < 1:
            raise DomainError(f"Invalid replicas: {replicas}. Must be >= 1.")
        check_seed(base_seed)
        tasks = []
        for block, start in enumerate(range(0, replicas, REPLICA_BLOCK)):
            tasks.append(BlockTask(
                mech=mech, imm=imm, x0=(x0.y1, x0.y2), horizon=t, dt=dt,
                count=min(REPLICA_BLOCK, replicas - start), seed=base_seed,
                key=tuple(stream_prefix) + (block,), **options,
            ))
        logger.debug("%d replicas in %d blocks (seed=%d, prefix=%s)", replicas, len(tasks), base_seed, stream_prefix)
        return tasks

    @classmethod
    def ensemble(
        cls,
        mech: BranchingMechanism,
        imm: Optional[ImmigrationMechanism],
        x0,
        t: float,
        dt: float,
        replicas: int,
        base_seed: int,
        workers: int = 1,
        stream_prefix: Tuple[int, ...] = (),
    ) -> EnsembleSample:
        """
        Terminal states of independent replicas.

        Replica i belongs to block i // REPLICA_BLOCK whose stream is (base_seed, prefix + (block,)).
        """
        x0 = cls._check(x0, t, dt)
        tasks = cls._tasks(mech, imm, x0, t, dt, replicas, base_seed, stream_prefix)
        results = cls._run_blocks(tasks, workers)
        states = np.vstack([r.states for r in results])
        states.flags.writeable = False
        return EnsembleSample(
            states=states,
            seed=base_seed,
            t=t,
            dt=dt,
            config_digest=config_digest(mech, imm, x0, t, dt),
            rejected_jumps=sum(r.rejected for r in results),
        )

    @staticmethod
    def empirical_laplace(sample, lam: Sequence[float]) -> Tuple[float, float]:
        """
        Sample mean and standard error of exp{-<lambda, Y>}.

        Args:
            sample: EnsembleSample or an n x 2 array
            lam: Nonnegative pair
        """
        l1, l2 = check_lambda(lam)
        states = sample.states if isinstance(sample, EnsembleSample) else np.asarray(sample, dtype=float)
        if states.size == 0:
            raise DomainError("Empty sample")
        values = np.exp(-(l1 * states[:, 0] + l2 * states[:, 1]))
        return _mean_and_se(values)

    @staticmethod
    def first_large_jump(path: PathRecord, r: Sequence[float],
                         region: JumpRegion = JumpRegion.EXCEEDANCE) -> Optional[float]:
        """Earliest recorded jump with dy1 > r1 or dy2 > r2 (None if there is none)."""
        rr = check_lambda(r, name="r")
        for jump in sorted(path.jumps, key=lambda j: j.time):
            if in_region(jump.dy1, jump.dy2, rr, region):
                return jump.time
        return None

    @classmethod
    def first_jump_times(
        cls,
        mech: BranchingMechanism,
        x0,
        horizon: float,
        dt: float,
        replicas: int,
        base_seed: int,
        r: Sequence[float],
        region: JumpRegion = JumpRegion.EXCEEDANCE,
        workers: int = 1,
    ) -> np.ndarray:
        """First large-jump time per replica (inf when none occurs before the horizon)."""
        x0 = cls._check(x0, horizon, dt)
        rr = check_lambda(r, name="r")
        tasks = cls._tasks(mech, None, x0, horizon, dt, replicas, base_seed,
                           jump_threshold=rr, jump_region=region)
        return np.concatenate([res.first_jumps for res in cls._run_blocks(tasks, workers)])

    @staticmethod
    def empirical_survival(first_jumps: np.ndarray, t_grid: Sequence[float]) -> List[Tuple[float, float]]:
        """(fraction with tau > t, standard error) for each t."""
        n = len(first_jumps)
        out = []
        for t in t_grid:
            p = float(np.mean(first_jumps > t))
            out.append((p, math.sqrt(p * (1.0 - p) / n)))
        return out

    @classmethod
    def integrated_functional_sample(cls, mech: BranchingMechanism, y, lam: Sequence[float], t: float,
                                     dt: float, replicas: int, base_seed: int,
                                     workers: int = 1) -> Tuple[float, float]:
        """Monte Carlo estimate of E exp{-int_0^t <lambda, Y(s)> ds}."""
        y = cls._check(y, t, dt)
        tasks = cls._tasks(mech, None, y, t, dt, replicas, base_seed, integral_lambda=check_lambda(lam))
        totals = np.concatenate([res.integrals for res in cls._run_blocks(tasks, workers)])
        return _mean_and_se(np.exp(-totals))


def _mean_and_se(values: np.ndarray) -> Tuple[float, float]:
    n = len(values)
    mean = float(values.mean())
    if n < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(n))
