"""
Path: engine/app/routers/experiments.py
Purpose: Experiment-kind dispatch for the command-line front end
Logic:
  - ExperimentRouter maps each ExperimentKind to one handler, registered with @router.kind(...)
  - A handler receives an ExperimentContext and writes its result file(s); it returns extra meta fields
  - run() loads the mechanism, validates it, dispatches, then writes meta.json
  - Exceptions are mapped to exit codes here, like HTTP routers turn ValueError into status codes
"""

import hashlib
import json
import logging
import os
import platform
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pydantic
import scipy

from .. import __version__
from ..errors import EXIT_OK, EXIT_VALIDATION, BranchingError, ConfigError, exit_code_for
from ..models.experiment import ExperimentConfig, ExperimentKind
from ..models.mechanism import BranchingMechanism, ImmigrationMechanism, MechanismFile
from ..services import result_writer
from ..services.config_loader import config_digest, digest, load_mechanism
from ..services.ergodic_service import ASSIGNMENT_LIMIT, ErgodicService
from ..services.gw_limit_service import GWLimitService
from ..services.laplace_service import LaplaceService
from ..services.mechanism_service import MechanismService
from ..services.oracle_service import OracleService
from ..services.simulation_service import SimulationService

logger = logging.getLogger(__name__)

RESULT_CSV = "result.csv"
RESULT_JSON = "result.json"
SAMPLE_JSON = "sample.json"
CONVERGENCE_CSV = "convergence.csv"
PATH_CSV = "path.csv"
META_JSON = "meta.json"


@dataclass(frozen=True)
class ExperimentContext:
    """Everything a handler needs"""
    config: ExperimentConfig
    mechanism: Optional[MechanismFile]
    out_dir: str
    workers: int

    @property
    def branching(self) -> BranchingMechanism:
        return self.mechanism.branching

    @property
    def immigration(self) -> ImmigrationMechanism:
        if self.mechanism.immigration is None:
            return ImmigrationMechanism()
        return self.mechanism.immigration

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)


Handler = Callable[[ExperimentContext], Dict[str, Any]]


class ExperimentRouter:
    """Kind -> handler table"""

    def __init__(self):
        self._handlers: Dict[ExperimentKind, Handler] = {}

    def kind(self, kind: str):
        def register(handler: Handler) -> Handler:
            self._handlers[ExperimentKind(kind)] = handler
            return handler
        return register

    @property
    def kinds(self) -> List[ExperimentKind]:
        return list(self._handlers)

    def dispatch(self, context: ExperimentContext) -> Dict[str, Any]:
        handler = self._handlers.get(context.config.kind)
        if handler is None:
            raise ConfigError(f"Unsupported kind: {context.config.kind.value}")
        return handler(context)


router = ExperimentRouter()


# ===== Handlers =====

@router.kind("validate")
def validate(ctx: ExperimentContext) -> Dict[str, Any]:
    violations = list(MechanismService.validate_branching(ctx.branching).violations)
    if ctx.mechanism.immigration is not None:
        violations += MechanismService.validate_immigration(ctx.mechanism.immigration).violations
    stability = MechanismService.stability_report(ctx.branching)
    result_writer.write_csv(ctx.path(RESULT_CSV), ["violation"], [(v,) for v in violations])
    return {
        "violations": violations,
        "stability": stability.model_dump(mode="json"),
    }


@router.kind("solve-v")
def solve_v(ctx: ExperimentContext) -> Dict[str, Any]:
    cfg = ctx.config
    grid = LaplaceService.solve_v(ctx.branching, cfg.lambda_, cfg.t, cfg.step)
    result_writer.write_flow(ctx.path(RESULT_CSV), grid)
    return {"max_undershoot": grid.max_undershoot}


@router.kind("moments")
def moments(ctx: ExperimentContext) -> Dict[str, Any]:
    cfg = ctx.config
    mech = ctx.branching
    with_immigration = ctx.mechanism.immigration is not None
    rows = []
    worst = 0.0
    for t in cfg.t_grid:
        flow = LaplaceService.moment_flow(mech, cfg.lambda_, t, cfg.step)
        worst = max(worst, flow.max_difference)
        if with_immigration:
            mean = LaplaceService.first_moment_imm(mech, ctx.immigration, cfg.x, t)
        else:
            mean = LaplaceService.mean_state(mech, cfg.x, t)
        rows.append((float(t), flow.rk4[0], flow.rk4[1], mean[0], mean[1]))
    result_writer.write_csv(ctx.path(RESULT_CSV), ["t", "pi1", "pi2", "mean1", "mean2"], rows)
    return {"max_moment_difference": worst, "immigration": with_immigration}


@router.kind("simulate")
def simulate(ctx: ExperimentContext) -> Dict[str, Any]:
    cfg = ctx.config
    sample = SimulationService.ensemble(
        ctx.branching, ctx.mechanism.immigration, cfg.x, cfg.t, cfg.dt,
        cfg.replicas, cfg.seed, workers=ctx.workers,
    )
    result_writer.write_ensemble(ctx.path(RESULT_CSV), ctx.path(SAMPLE_JSON), sample)
    extra = {"rejected_jumps": sample.rejected_jumps, "sample_digest": sample.config_digest}
    if cfg.path:
        record = SimulationService.simulate_msbi(
            ctx.branching, ctx.mechanism.immigration, cfg.x, cfg.t, cfg.dt, cfg.seed, stream=0,
        )
        result_writer.write_path(ctx.path(PATH_CSV), record)
        extra["path_jumps"] = len(record.jumps)
    return extra


@router.kind("gw-converge")
def gw_converge(ctx: ExperimentContext) -> Dict[str, Any]:
    cfg = ctx.config
    report = GWLimitService.convergence_report(
        ctx.branching, cfg.x, cfg.lambda_, cfg.t, cfg.k_list, cfg.replicas, cfg.seed, workers=ctx.workers,
    )
    rows = [(r.k, r.estimate, r.continuum, r.abs_error, r.stderr) for r in report]
    result_writer.write_csv(ctx.path(RESULT_CSV), ["k", "estimate", "continuum", "abs_error", "stderr"], rows)
    return {}


@router.kind("tau-dist")
def tau_dist(ctx: ExperimentContext) -> Dict[str, Any]:
    cfg = ctx.config
    mech = ctx.branching
    t_grid = [float(t) for t in cfg.t_grid]
    analytic = [
        float(LaplaceService.survival_tau(mech, cfg.x, cfg.r, t, cfg.step, region=cfg.region).final)
        for t in t_grid
    ]
    first_jumps = SimulationService.first_jump_times(
        mech, cfg.x, max(t_grid), cfg.dt, cfg.replicas, cfg.seed, cfg.r,
        region=cfg.region, workers=ctx.workers,
    )
    empirical = SimulationService.empirical_survival(first_jumps, t_grid)
    rows = [(t, a, p, se) for t, a, (p, se) in zip(t_grid, analytic, empirical)]
    result_writer.write_csv(ctx.path(RESULT_CSV), ["t", "analytic", "empirical", "stderr"], rows)
    return {"region": cfg.region.value}


@router.kind("wasserstein")
def wasserstein(ctx: ExperimentContext) -> Dict[str, Any]:
    cfg = ctx.config
    report = ErgodicService.w1_report(
        ctx.branching, cfg.x, cfg.y, cfg.t, cfg.replicas, cfg.dt, cfg.seed,
        metric=cfg.metric, workers=ctx.workers, imm=ctx.mechanism.immigration,
    )
    result_writer.write_json(ctx.path(RESULT_JSON), report.model_dump(mode="json"))
    return {"metric": cfg.metric}


@router.kind("stationary")
def stationary(ctx: ExperimentContext) -> Dict[str, Any]:
    cfg = ctx.config
    mech, imm = ctx.branching, ctx.immigration
    lambdas = list(cfg.lambdas or [cfg.lambda_])
    burn_in = cfg.burn_in if cfg.burn_in is not None else ErgodicService.default_burn_in(mech)
    sample = ErgodicService.stationary_sample(
        mech, imm, burn_in=burn_in, replicas=cfg.replicas, dt=cfg.dt, seed=cfg.seed, workers=ctx.workers,
    )
    rows = []
    for lam in lambdas:
        analytic = LaplaceService.stationary_laplace(mech, imm, lam)
        empirical, se = SimulationService.empirical_laplace(sample, lam)
        rows.append((float(lam[0]), float(lam[1]), analytic, empirical, se))
    result_writer.write_csv(
        ctx.path(RESULT_CSV), ["lambda1", "lambda2", "analytic", "empirical", "stderr"], rows,
    )
    extra = {"burn_in": burn_in, "rejected_jumps": sample.rejected_jumps}
    if cfg.x is not None and cfg.t_grid:
        report = ErgodicService.stationary_convergence_report(
            mech, imm, cfg.x, cfg.t_grid, replicas=min(cfg.replicas, ASSIGNMENT_LIMIT), dt=cfg.dt,
            seed=cfg.seed, burn_in=burn_in, metric=cfg.metric, workers=ctx.workers,
        )
        result_writer.write_csv(
            ctx.path(CONVERGENCE_CSV), ["t", "empirical_w1", "bootstrap_se", "bound"],
            [(r.t, r.empirical_w1, r.bootstrap_se, r.bound) for r in report.rows],
        )
        extra.update(initial_distance=report.initial_distance, noise_floor=report.noise_floor)
    return extra


@router.kind("oracle-row")
def oracle_row(ctx: ExperimentContext) -> Dict[str, Any]:
    cfg = ctx.config
    gen = OracleService.db_generator(cfg.rate, cfg.offspring, cfg.truncation)
    row = OracleService.ctmc_transition(gen, cfg.state, cfg.t)
    rows = [(j, float(p)) for j, p in enumerate(row.probabilities)]
    result_writer.write_csv(ctx.path(RESULT_CSV), ["state", "prob"], rows)
    return {"leak_bound": row.leak_bound, "poisson_terms": row.poisson_terms}


# ===== Entry =====

def versions() -> Dict[str, str]:
    return {
        "engine": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }


def _inputs_digest(config_hash: str, mechanism_hash: Optional[str], seed: int) -> str:
    payload = json.dumps({"config": config_hash, "mechanism": mechanism_hash, "seed": seed}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def run(config: ExperimentConfig, out_dir: str, workers: int = 1) -> int:
    """
    Run one experiment and write its result files plus meta.json.

    Args:
        config: Validated experiment config
        out_dir: Result directory (created if missing)
        workers: Worker processes for replica loops

    Returns:
        Exit status: 0 success, 1 validation error, 2 numeric error
    """
    started = time.perf_counter()
    try:
        mechanism = load_mechanism(config.mechanism) if config.mechanism else None
        if mechanism is not None and config.kind != ExperimentKind.VALIDATE:
            report = MechanismService.validate_branching(mechanism.branching)
            violations = list(report.violations)
            if mechanism.immigration is not None:
                violations += MechanismService.validate_immigration(mechanism.immigration).violations
            if violations:
                raise ConfigError(f"Invalid mechanism {config.mechanism}: " + "; ".join(violations))

        os.makedirs(out_dir, exist_ok=True)
        logger.info("Running %s (seed=%d, workers=%d)", config.kind.value, config.seed, workers)
        context = ExperimentContext(config=config, mechanism=mechanism, out_dir=out_dir, workers=workers)
        extra = router.dispatch(context)
    except (BranchingError, ValueError, ArithmeticError) as exc:
        logger.error("%s failed: %s", config.kind.value, exc)
        return exit_code_for(exc)

    config_hash = config_digest(config)
    mechanism_hash = digest(mechanism) if mechanism is not None else None
    meta = {
        "kind": config.kind.value,
        "seed": config.seed,
        "config_digest": config_hash,
        "mechanism_digest": mechanism_hash,
        "inputs_digest": _inputs_digest(config_hash, mechanism_hash, config.seed),
        "versions": versions(),
        "wall_time": time.perf_counter() - started,
        **extra,
    }
    result_writer.write_json(os.path.join(out_dir, META_JSON), meta)
    if config.kind == ExperimentKind.VALIDATE and extra["violations"]:
        for violation in extra["violations"]:
            logger.error("violation: %s", violation)
        return EXIT_VALIDATION
    logger.info("Wrote results to %s", out_dir)
    return EXIT_OK
