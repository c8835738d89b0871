"""
Path: engine/app/services/mechanism_service.py
Purpose: Evaluation and admissibility checks for branching and immigration mechanisms
Logic:
  - validate_branching / validate_immigration report every violated invariant (never raise)
  - phi1 / phi2 / psi are exact finite sums over the atoms (expm1 keeps small-lambda accuracy)
  - vector_field() precomputes a fast (Phi1, Phi2) callable used inside the RK4 loops
  - moment_matrix / stability_report give H and its quadratic-formula spectrum
  - truncate_mechanism splits the measures into large-jump mass and a generalized small-jump mechanism
"""

import cmath
import math
from typing import Callable, List, Optional, Sequence, Tuple

from ..errors import DomainError
from ..models.mechanism import (
    BranchingMechanism,
    ImmigrationMechanism,
    JumpRegion,
    LevyAtomMeasure,
    MomentMatrix,
    StabilityReport,
    TruncatedMechanism,
    ValidationReport,
)

Pair = Tuple[float, float]


def check_lambda(lam: Sequence[float], name: str = "lambda") -> Pair:
    """Return lam as a float pair, raising DomainError unless both components are >= 0."""
    if len(lam) != 2:
        raise DomainError(f"Invalid {name}: {lam}. Must have two components.")
    l1, l2 = float(lam[0]), float(lam[1])
    if not (l1 >= 0 and l2 >= 0):
        raise DomainError(f"Invalid {name}: ({l1}, {l2}). Components must be >= 0.")
    return l1, l2


def in_region(z1: float, z2: float, r: Pair, region: JumpRegion) -> bool:
    """Whether the jump (z1, z2) is large for threshold r."""
    if region == JumpRegion.PRODUCT:
        return z1 > r[0] and z2 > r[1]
    return z1 > r[0] or z2 > r[1]


class BranchingField:
    """(Phi1, Phi2) of a branching mechanism as a fast callable on raw float pairs"""

    def __init__(self, mech: BranchingMechanism):
        self.a11 = mech.a11
        self.a21 = mech.a21
        self.alpha = mech.alpha
        self.n1 = tuple((float(z1), float(z2), float(w)) for z1, z2, w in mech.n1)
        self.n2 = tuple((float(z1), float(z2), float(w)) for z1, z2, w in mech.n2)

    def phi1(self, l1: float, l2: float) -> float:
        s = 0.0
        for z1, z2, w in self.n1:
            s += w * (math.expm1(-(l1 * z1 + l2 * z2)) + l1 * z1)
        return -self.a11 * l1 - self.alpha * l1 * l1 - s

    def phi2(self, l1: float, l2: float) -> float:
        s = 0.0
        for z1, z2, w in self.n2:
            s -= w * math.expm1(-(l1 * z1 + l2 * z2))
        return self.a21 * l1 + s

    def __call__(self, v: Sequence[float]) -> Pair:
        return self.phi1(v[0], v[1]), self.phi2(v[0], v[1])


class TruncatedField(BranchingField):
    """Small-jump flow field of a TruncatedMechanism"""

    def __init__(self, tm: TruncatedMechanism):
        self.a11 = tm.a11
        self.a21 = tm.a21
        self.b11 = tm.b11
        self.b21 = tm.b21
        self.alpha = tm.alpha
        self.n1 = tuple((float(z1), float(z2), float(w)) for z1, z2, w in tm.n1)
        self.n2 = tuple((float(z1), float(z2), float(w)) for z1, z2, w in tm.n2)

    @staticmethod
    def _compensated(atoms, l1: float, l2: float) -> float:
        s = 0.0
        for z1, z2, w in atoms:
            x = l1 * z1 + l2 * z2
            s += w * (math.expm1(-x) + x)
        return s

    def phi1(self, l1: float, l2: float) -> float:
        return (-self.a11 * l1 + self.b11 * l2 - self.alpha * l1 * l1
                - self._compensated(self.n1, l1, l2))

    def phi2(self, l1: float, l2: float) -> float:
        return self.a21 * l1 + self.b21 * l2 - self._compensated(self.n2, l1, l2)


class ImmigrationField:
    """Psi as a fast callable"""

    def __init__(self, imm: Optional[ImmigrationMechanism]):
        self.b = imm.b if imm is not None else 0.0
        self.m = tuple((float(z1), float(z2), float(w)) for z1, z2, w in imm.m) if imm is not None else ()

    @property
    def trivial(self) -> bool:
        return self.b == 0.0 and not self.m

    def __call__(self, l1: float, l2: float) -> float:
        s = self.b * l1
        for z1, z2, w in self.m:
            s -= w * math.expm1(-(l1 * z1 + l2 * z2))
        return s


class MechanismService:
    """
    Mechanism evaluation, validation and spectral reports.
    All methods are pure; the mechanism models are frozen.
    """

    @staticmethod
    def _measure_violations(name: str, measure: LevyAtomMeasure, min_z2: int) -> List[str]:
        violations = []
        for i, (z1, z2, w) in enumerate(measure):
            label = f"{name} atom {i} ({z1}, {z2}, w={w})"
            if not (math.isfinite(w) and w > 0):
                violations.append(f"non-positive or non-finite weight in {name}: {label}")
            if not math.isfinite(z1):
                violations.append(f"non-finite z1 in {name}: {label}")
            elif z1 < 0:
                violations.append(f"z1 < 0 in {name}: {label}")
            if z2 < min_z2:
                violations.append(f"z2 < {min_z2} in {name}: {label}")
            if z1 == 0 and z2 == 0:
                violations.append(f"origin atom in {name}: {label}")
        return violations

    @classmethod
    def validate_branching(cls, mech: BranchingMechanism) -> ValidationReport:
        """
        Check every admissibility condition of a branching mechanism.

        Returns:
            ValidationReport whose violations name the offending field or atom
        """
        violations = []
        if not math.isfinite(mech.a11):
            violations.append(f"a11 must be finite, got {mech.a11}")
        if not (math.isfinite(mech.a21) and mech.a21 >= 0):
            violations.append(f"a21 must be finite and >= 0, got {mech.a21}")
        if not (math.isfinite(mech.alpha) and mech.alpha >= 0):
            violations.append(f"alpha must be finite and >= 0, got {mech.alpha}")
        violations += cls._measure_violations("n1", mech.n1, 0)
        violations += cls._measure_violations("n2", mech.n2, -1)
        return ValidationReport(violations=violations)

    @classmethod
    def validate_immigration(cls, imm: ImmigrationMechanism) -> ValidationReport:
        violations = []
        if not (math.isfinite(imm.b) and imm.b >= 0):
            violations.append(f"b must be finite and >= 0, got {imm.b}")
        violations += cls._measure_violations("m", imm.m, 0)
        return ValidationReport(violations=violations)

    @staticmethod
    def phi1(mech: BranchingMechanism, lam: Sequence[float]) -> float:
        """Phi1(lambda) as an exact finite sum."""
        l1, l2 = check_lambda(lam)
        return BranchingField(mech).phi1(l1, l2)

    @staticmethod
    def phi2(mech: BranchingMechanism, lam: Sequence[float]) -> float:
        """Phi2(lambda) as an exact finite sum (no sign guarantee when n2 has z2 = -1 atoms)."""
        l1, l2 = check_lambda(lam)
        return BranchingField(mech).phi2(l1, l2)

    @staticmethod
    def psi(imm: ImmigrationMechanism, lam: Sequence[float]) -> float:
        """Immigration mechanism Psi(lambda)."""
        l1, l2 = check_lambda(lam)
        return ImmigrationField(imm)(l1, l2)

    @staticmethod
    def vector_field(mech: BranchingMechanism) -> Callable[[Sequence[float]], Pair]:
        return BranchingField(mech)

    @staticmethod
    def moment_matrix(mech: BranchingMechanism) -> MomentMatrix:
        """First-moment matrix H of the mechanism."""
        h12 = sum(w * z2 for _, z2, w in mech.n1)
        h21 = mech.a21 + sum(w * z1 for z1, _, w in mech.n2)
        h22 = sum(w * z2 for _, z2, w in mech.n2)
        return MomentMatrix(h=((-mech.a11, float(h12)), (float(h21), float(h22))))

    @staticmethod
    def stability_report_from_matrix(hm: MomentMatrix) -> StabilityReport:
        (h11, h12), (h21, h22) = hm.h
        trace, det = hm.trace, hm.det
        disc = (h11 - h22) ** 2 + 4.0 * h12 * h21
        root = cmath.sqrt(disc)
        ev1 = (trace + root) / 2.0
        ev2 = (trace - root) / 2.0
        if ev2.real > ev1.real:
            ev1, ev2 = ev2, ev1
        return StabilityReport(
            eigenvalues=((ev1.real, ev1.imag), (ev2.real, ev2.imag)),
            trace=trace,
            det=det,
            discriminant=disc,
            ergodic_hypothesis=det > 0 and trace < 0,
            negative_real_parts=ev1.real < 0 and ev2.real < 0,
        )

    @classmethod
    def stability_report(cls, mech: BranchingMechanism) -> StabilityReport:
        """Eigenvalues of H plus the ergodicity / stationarity hypothesis flags."""
        return cls.stability_report_from_matrix(cls.moment_matrix(mech))

    @staticmethod
    def truncate_mechanism(
        mech: BranchingMechanism,
        r: Sequence[float],
        region: JumpRegion = JumpRegion.PRODUCT,
    ) -> Tuple[TruncatedMechanism, Pair]:
        """
        Split off the large jumps of n1 and n2.

        Args:
            mech: Branching mechanism
            r: Jump-size threshold (r1, r2), both >= 0
            region: Definition of the large-jump set

        Returns:
            (truncated mechanism, (n1(A_r), n2(A_r)))
        """
        rr = check_lambda(r, name="r")
        large1 = [a for a in mech.n1 if in_region(a[0], a[1], rr, region)]
        small1 = [a for a in mech.n1 if not in_region(a[0], a[1], rr, region)]
        large2 = [a for a in mech.n2 if in_region(a[0], a[1], rr, region)]
        small2 = [a for a in mech.n2 if not in_region(a[0], a[1], rr, region)]

        truncated = TruncatedMechanism(
            a11=mech.a11 + sum(w * z1 for z1, _, w in large1),
            a21=mech.a21 + sum(w * z1 for z1, _, w in small2),
            b11=float(sum(w * z2 for _, z2, w in small1)),
            b21=float(sum(w * z2 for _, z2, w in small2)),
            alpha=mech.alpha,
            n1=LevyAtomMeasure(tuple(small1)),
            n2=LevyAtomMeasure(tuple(small2)),
            r=rr,
            region=region,
        )
        excess = (float(sum(w for _, _, w in large1)), float(sum(w for _, _, w in large2)))
        return truncated, excess

    @staticmethod
    def truncated_phi(tm: TruncatedMechanism, lam: Sequence[float]) -> Pair:
        """(Phi1^r, Phi2^r) of a truncated mechanism."""
        l1, l2 = check_lambda(lam)
        return TruncatedField(tm)((l1, l2))
