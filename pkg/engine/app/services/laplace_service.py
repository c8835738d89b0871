"""
Path: engine/app/services/laplace_service.py
Purpose: Deterministic analytics built on the Laplace-exponent ODE flows
Logic:
  - solve_v integrates dV/dt = (Phi1(V), Phi2(V)) with the shared RK4 integrator
  - transition_laplace(_imm) exponentiate <x, V> (plus the Simpson integral of Psi along V)
  - moment_flow / mean_state / matrix_exponential cover the first-moment semigroup e^{tH}
  - survival_tau / tau_asymptotic give the law of the first large jump
  - integrated_functional, stationary_laplace, decay_envelope and db_flow complete the toolbox
"""

import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson

from ..errors import ConsistencyError, DomainError, PreconditionError
from ..models.flows import DecayEnvelope, FlowGrid, MomentFlow
from ..models.mechanism import (
    BranchingMechanism,
    ImmigrationMechanism,
    JumpRegion,
    MixedState,
)
from . import ode_integrator
from .mechanism_service import (
    BranchingField,
    ImmigrationField,
    MechanismService,
    TruncatedField,
    check_lambda,
)

logger = logging.getLogger(__name__)

DEFAULT_STEP = ode_integrator.DEFAULT_STEP
STATIONARY_STEP = 1e-2
STATIONARY_TAIL_TOL = 1e-10
DEFECTIVE_DISC = 1e-10
ENVELOPE_MARGIN = 1e-6
MOMENT_TOLERANCE = 1e-6
SERIES_ORDER = 13


def as_state(x) -> MixedState:
    return x if isinstance(x, MixedState) else MixedState.of(x)


def _integral(values: np.ndarray, times: np.ndarray) -> float:
    if len(times) < 2:
        return 0.0
    return float(simpson(values, x=times))


class LaplaceService:
    """
    Laplace-exponent flows and everything derived from them.
    Stateless; every method is a static/class method over frozen inputs.
    """

    @staticmethod
    def solve_v(
        mech: BranchingMechanism,
        lam: Sequence[float],
        horizon: float,
        step: float = DEFAULT_STEP,
    ) -> FlowGrid:
        """
        Integrate the Laplace-exponent flow.

        Args:
            mech: Branching mechanism
            lam: Initial value V(0) = lambda (componentwise >= 0)
            horizon: Final time
            step: RK4 step

        Returns:
            FlowGrid of V(t, lambda) on [0, horizon]
        """
        l1, l2 = check_lambda(lam)
        times, values, undershoot = ode_integrator.integrate(
            BranchingField(mech), (l1, l2), horizon, step, floor=0.0
        )
        return FlowGrid(times=times, values=values, step=step, max_undershoot=undershoot)

    @classmethod
    def transition_laplace(cls, mech: BranchingMechanism, x, lam: Sequence[float], t: float,
                           step: float = DEFAULT_STEP) -> float:
        """E_x exp{-<lambda, Y(t)>} = exp{-<x, V(t, lambda)>}."""
        x = as_state(x)
        v1, v2 = cls.solve_v(mech, lam, t, step).final
        return math.exp(-(x.y1 * v1 + x.y2 * v2))

    @classmethod
    def transition_laplace_imm(cls, mech: BranchingMechanism, imm: ImmigrationMechanism, x,
                               lam: Sequence[float], t: float, step: float = DEFAULT_STEP) -> float:
        """Laplace functional of the process with immigration."""
        x = as_state(x)
        grid = cls.solve_v(mech, lam, t, step)
        psi = ImmigrationField(imm)
        psi_values = np.array([psi(v1, v2) for v1, v2 in grid.values])
        v1, v2 = grid.final
        return math.exp(-(x.y1 * v1 + x.y2 * v2) - _integral(psi_values, grid.times))

    @staticmethod
    def matrix_exponential(h, t: float = 1.0) -> np.ndarray:
        """
        e^{tH} for a 2x2 real matrix.

        Uses the closed spectral formula unless the discriminant of H is
        within 1e-10 of zero, then scaling-and-squaring of the order-13 series.
        """
        hm = np.asarray(h, dtype=float)
        if hm.shape != (2, 2) or not np.all(np.isfinite(hm)):
            raise DomainError(f"Invalid matrix: {h}. Must be a finite 2x2 array.")
        if t == 0:
            return np.eye(2)
        m = hm * t
        disc = (hm[0, 0] - hm[1, 1]) ** 2 + 4.0 * hm[0, 1] * hm[1, 0]
        if abs(disc) > DEFECTIVE_DISC:
            mu = 0.5 * (m[0, 0] + m[1, 1])
            shifted = m - mu * np.eye(2)
            if disc > 0:
                delta = 0.5 * abs(t) * math.sqrt(disc)
                ep, em = math.exp(mu + delta), math.exp(mu - delta)
                return 0.5 * (ep + em) * np.eye(2) + (ep - em) / (2.0 * delta) * shifted
            omega = 0.5 * abs(t) * math.sqrt(-disc)
            scale = math.exp(mu)
            return scale * (math.cos(omega) * np.eye(2) + math.sin(omega) / omega * shifted)

        norm = np.abs(m).sum(axis=0).max()
        squarings = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
        a = m / (2.0 ** squarings)
        result = np.eye(2)
        term = np.eye(2)
        for k in range(1, SERIES_ORDER + 1):
            term = term @ a / k
            result = result + term
        for _ in range(squarings):
            result = result @ result
        return result

    @classmethod
    def moment_flow(cls, mech: BranchingMechanism, lam: Sequence[float], t: float,
                    step: float = DEFAULT_STEP) -> MomentFlow:
        """pi(t, lambda) = e^{tH} lambda, integrated and in closed form."""
        l1, l2 = check_lambda(lam)
        h = MechanismService.moment_matrix(mech).h
        (h11, h12), (h21, h22) = h

        def rhs(p):
            return h11 * p[0] + h12 * p[1], h21 * p[0] + h22 * p[1]

        _, values, _ = ode_integrator.integrate(rhs, (l1, l2), t, step)
        closed = cls.matrix_exponential(h, t) @ np.array([l1, l2])
        diff = float(np.max(np.abs(values[-1] - closed)))
        if diff > MOMENT_TOLERANCE:
            raise ConsistencyError(f"Moment flow RK4 and e^(tH) disagree by {diff:.3g}", time=t)
        return MomentFlow(
            rk4=(float(values[-1][0]), float(values[-1][1])),
            closed_form=(float(closed[0]), float(closed[1])),
            max_difference=diff,
        )

    @classmethod
    def mean_state(cls, mech: BranchingMechanism, x, t: float) -> Tuple[float, float]:
        """(E Y1(t), E Y2(t)) = e^{tH^T} x."""
        x = as_state(x)
        h = MechanismService.moment_matrix(mech).h
        mean = cls.matrix_exponential(h, t).T @ np.array([x.y1, float(x.y2)])
        return float(mean[0]), float(mean[1])

    @classmethod
    def integral_of_exponential(cls, h, t: float) -> np.ndarray:
        """int_0^t e^{sH} ds, via H^{-1}(e^{tH} - I) when H is invertible."""
        hm = np.asarray(h, dtype=float)
        if abs(np.linalg.det(hm)) > 1e-12:
            return np.linalg.solve(hm, cls.matrix_exponential(hm, t) - np.eye(2))
        grid = np.linspace(0.0, t, 2001)
        samples = np.array([cls.matrix_exponential(hm, s) for s in grid])
        return simpson(samples, x=grid, axis=0)

    @classmethod
    def first_moment_imm(cls, mech: BranchingMechanism, imm: ImmigrationMechanism, x,
                         t: float) -> Tuple[float, float]:
        """Mean state of the process with immigration started at x."""
        x = as_state(x)
        h = np.asarray(MechanismService.moment_matrix(mech).h)
        inflow = np.array([
            imm.b + sum(w * z1 for z1, _, w in imm.m),
            float(sum(w * z2 for _, z2, w in imm.m)),
        ])
        mean = cls.matrix_exponential(h, t).T @ np.array([x.y1, float(x.y2)])
        mean = mean + cls.integral_of_exponential(h.T, t) @ inflow
        return float(mean[0]), float(mean[1])

    @staticmethod
    def _excess(mech: BranchingMechanism, r: Sequence[float], region: JumpRegion,
                excess: Optional[Sequence[float]]):
        tm, masses = MechanismService.truncate_mechanism(mech, r, region)
        if excess is not None:
            masses = check_lambda(excess, name="excess")
        return tm, masses

    @classmethod
    def survival_tau(
        cls,
        mech: BranchingMechanism,
        y,
        r: Sequence[float],
        horizon: float,
        step: float = DEFAULT_STEP,
        region: JumpRegion = JumpRegion.EXCEEDANCE,
        excess: Optional[Sequence[float]] = None,
    ) -> FlowGrid:
        """
        Survival function t -> P_y(tau_r > t) of the first large jump.

        Args:
            mech: Branching mechanism
            y: Initial state
            r: Jump threshold
            horizon: Final time of the grid
            step: RK4 step
            region: Large-jump set (EXCEEDANCE matches the first-jump-time definition)
            excess: Optional override of (n1(A_r), n2(A_r))

        Returns:
            FlowGrid with scalar survival probabilities
        """
        y = as_state(y)
        tm, (e1, e2) = cls._excess(mech, r, region, excess)
        field = TruncatedField(tm)

        def rhs(v):
            f1, f2 = field(v)
            return f1 + e1, f2 + e2

        times, values, undershoot = ode_integrator.integrate(rhs, (0.0, 0.0), horizon, step, floor=0.0)
        survival = np.exp(-(y.y1 * values[:, 0] + y.y2 * values[:, 1]))
        survival.flags.writeable = False
        return FlowGrid(times=times, values=survival, step=step, max_undershoot=undershoot)

    @classmethod
    def tau_asymptotic(
        cls,
        mech: BranchingMechanism,
        y,
        r: Sequence[float],
        t: float,
        region: JumpRegion = JumpRegion.EXCEEDANCE,
        excess: Optional[Sequence[float]] = None,
    ) -> float:
        """Small-mass approximation y^T (int_0^t e^{sH} ds) n(A_r) of P_y(tau_r <= t)."""
        y = as_state(y)
        _, masses = cls._excess(mech, r, region, excess)
        if t == 0 or masses == (0.0, 0.0):
            return 0.0
        h = MechanismService.moment_matrix(mech).h
        integral = cls.integral_of_exponential(h, t)
        return float(np.array([y.y1, float(y.y2)]) @ integral @ np.array(masses))

    @staticmethod
    def integrated_functional(mech: BranchingMechanism, y, lam: Sequence[float], t: float,
                              step: float = DEFAULT_STEP) -> float:
        """E_y exp{-int_0^t <lambda, Y(s)> ds}."""
        y = as_state(y)
        l1, l2 = check_lambda(lam)
        field = BranchingField(mech)

        def rhs(v):
            f1, f2 = field(v)
            return f1 + l1, f2 + l2

        _, values, _ = ode_integrator.integrate(rhs, (0.0, 0.0), t, step, floor=0.0)
        v1, v2 = values[-1]
        return math.exp(-(y.y1 * v1 + y.y2 * v2))

    @classmethod
    def decay_envelope(cls, mech: BranchingMechanism, lam: Sequence[float]) -> DecayEnvelope:
        """
        Constants of the exponential upper and lower envelopes of V(t, lambda).

        Raises:
            PreconditionError: H has an eigenvalue with non-negative real part
        """
        l1, l2 = check_lambda(lam)
        hm = MechanismService.moment_matrix(mech)
        report = MechanismService.stability_report_from_matrix(hm)
        if not report.negative_real_parts:
            raise PreconditionError(
                f"Decay envelope needs eigenvalues with negative real parts, got {report.eigenvalues}"
            )
        h = np.asarray(hm.h)
        leading = -report.eigenvalues[0][0]
        c2 = leading * (1.0 - ENVELOPE_MARGIN)

        if abs(report.discriminant) > DEFECTIVE_DISC:
            _, vectors = np.linalg.eig(h)
            c = float(np.linalg.norm(vectors, 2) * np.linalg.norm(np.linalg.inv(vectors), 2))
        else:
            logger.warning("Near-defective moment matrix (disc=%.3g); using grid bound", report.discriminant)
            # (1 + t|N|) e^{-margin * leading * t} peaks near t = 1 / (margin * leading)
            peak = 1.0 / (ENVELOPE_MARGIN * leading)
            grid = np.concatenate([np.linspace(0.0, 10.0 / leading, 2001), np.geomspace(1e-3, 10.0 * peak, 2000)])
            c = 1.01 * max(
                np.linalg.norm(cls.matrix_exponential(h, s), 2) * math.exp(c2 * s) for s in grid
            )
        c = max(c, 1.0)

        c1 = math.hypot(l1, l2) * c
        kappa = float(sum(w * min(z1, z1 * z1) for z1, _, w in mech.n1))
        theta = float(sum(w for _, z2, w in mech.n2 if z2 == -1))
        a_exp = abs(h[0, 0] - kappa - (mech.alpha + kappa / 2.0) * c1)
        try:
            b_exp = 2.0 * theta * math.exp(c1)
        except OverflowError:
            b_exp = math.inf
        return DecayEnvelope(c=c, c1=c1, c2=c2, A=a_exp, B=b_exp, kappa=kappa, theta=theta)

    @classmethod
    def stationary_laplace(cls, mech: BranchingMechanism, imm: ImmigrationMechanism,
                           lam: Sequence[float], step: float = STATIONARY_STEP) -> float:
        """
        Laplace functional of the stationary law, exp{-int_0^inf Psi(V(s, lambda)) ds}.

        The quadrature horizon is chosen from the decay envelope so the neglected
        tail is below 1e-10; the linearized tail beyond it is added analytically.
        """
        l1, l2 = check_lambda(lam)
        report = MechanismService.stability_report(mech)
        if not report.negative_real_parts:
            raise PreconditionError("No stationary law: H has an eigenvalue with non-negative real part")
        psi = ImmigrationField(imm)
        if psi.trivial or (l1 == 0 and l2 == 0):
            return 1.0

        envelope = cls.decay_envelope(mech, (l1, l2))
        g = np.array([
            psi.b + sum(w * z1 for z1, _, w in psi.m),
            float(sum(w * z2 for _, z2, w in psi.m)),
        ])
        lipschitz = float(np.hypot(*g))
        ratio = lipschitz * envelope.c1 / (envelope.c2 * STATIONARY_TAIL_TOL)
        horizon = max(0.0, math.log(ratio) / envelope.c2) if ratio > 1 else 0.0
        logger.debug("stationary_laplace horizon T*=%.3f (c1=%.4g, c2=%.4g)", horizon, envelope.c1, envelope.c2)

        grid = cls.solve_v(mech, (l1, l2), horizon, step)
        psi_values = np.array([psi(v1, v2) for v1, v2 in grid.values])
        h = np.asarray(MechanismService.moment_matrix(mech).h)
        tail = float(g @ np.linalg.solve(-h, np.asarray(grid.final)))
        return math.exp(-(_integral(psi_values, grid.times) + tail))

    @staticmethod
    def db_flow(rate: float, offspring: Sequence[float], z: float, horizon: float,
                step: float = DEFAULT_STEP) -> FlowGrid:
        """
        Compound semigroup F(z, t) of a continuous-time discrete-state branching process.

        Args:
            rate: Branching rate a > 0
            offspring: Offspring probabilities p_0, p_1, ...
            z: Generating-function argument in [0, 1]
            horizon: Final time
            step: RK4 step

        Returns:
            Scalar FlowGrid of F(z, t)
        """
        probs = check_probability_vector(offspring)
        if not (rate > 0):
            raise DomainError(f"Invalid rate: {rate}. Must be > 0.")
        if not (0.0 <= z <= 1.0):
            raise DomainError(f"Invalid z: {z}. Must be in [0, 1].")
        coeffs = tuple(reversed(probs))

        def rhs(f):
            g = 0.0
            for c in coeffs:
                g = g * f[0] + c
            return (rate * (g - f[0]),)

        times, values, _ = ode_integrator.integrate(rhs, (z,), horizon, step, clip=(0.0, 1.0))
        flat = values[:, 0].copy()
        flat.flags.writeable = False
        return FlowGrid(times=times, values=flat, step=step)


def check_probability_vector(p: Sequence[float], tol: float = 1e-9) -> Tuple[float, ...]:
    """Validate a finite probability vector on {0, 1, ...}."""
    probs = tuple(float(v) for v in p)
    if not probs or any(not (v >= 0) or not math.isfinite(v) for v in probs):
        raise DomainError(f"Invalid probability vector: {list(p)}. Entries must be finite and >= 0.")
    if abs(sum(probs) - 1.0) > tol:
        raise DomainError(f"Invalid probability vector: sums to {sum(probs)}, not 1.")
    return probs
