"""
Path: engine/tests/test_mechanism_service.py
Purpose: Unit tests for mechanism evaluation, validation and spectral reports
Logic:
  - Hand-evaluated Phi / Psi values for the reference mechanism
  - Moment matrix entries vs central finite differences of the vector field
  - Truncation: atom membership, full-compensation identity, direct formula check
"""

import math
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np
import pytest

from app.data.reference_mechanisms import IMM0, MECH0
from app.errors import DomainError
from app.models.mechanism import BranchingMechanism, ImmigrationMechanism, JumpRegion, LevyAtomMeasure
from app.services.mechanism_service import MechanismService


def _random_mechanism(rng) -> BranchingMechanism:
    n1 = tuple((float(rng.uniform(0.1, 2.0)), int(rng.integers(0, 3)), float(rng.uniform(0.1, 1.0)))
               for _ in range(rng.integers(0, 3)))
    n2 = tuple((float(rng.uniform(0.0, 2.0)), int(rng.integers(-1, 3)), float(rng.uniform(0.1, 1.0)))
               for _ in range(rng.integers(0, 3)))
    n2 = tuple(a for a in n2 if not (a[0] == 0 and a[1] == 0))
    return BranchingMechanism(
        a11=float(rng.uniform(-0.5, 1.0)), a21=float(rng.uniform(0, 1.0)), alpha=float(rng.uniform(0, 1.0)),
        n1=LevyAtomMeasure(n1), n2=LevyAtomMeasure(n2),
    )


def test_phi_reference_values():
    """Test Phi1, Phi2 and Psi against hand-evaluated finite sums"""
    assert MechanismService.phi1(MECH0, (1, 1)) == pytest.approx(-0.8 - 0.4 * math.exp(-2), abs=1e-12)
    assert MechanismService.phi1(MECH0, (1, 1)) == pytest.approx(-0.854134, abs=1e-6)
    expected_phi2 = 0.2 + (1 - math.exp(0.5)) + 0.2 * (1 - math.exp(-1))
    assert MechanismService.phi2(MECH0, (1, 1)) == pytest.approx(expected_phi2, abs=1e-12)
    assert MechanismService.psi(IMM0, (1, 1)) == pytest.approx(0.532332, abs=1e-6)

    print("✓ Reference Phi/Psi values test passed")


def test_mechanisms_vanish_at_origin():
    """Test Phi1(0) = Phi2(0) = Psi(0) = 0 on random mechanisms"""
    rng = np.random.default_rng(1)
    for _ in range(50):
        mech = _random_mechanism(rng)
        assert MechanismService.phi1(mech, (0, 0)) == 0.0
        assert MechanismService.phi2(mech, (0, 0)) == 0.0
    assert MechanismService.psi(IMM0, (0, 0)) == 0.0

    print("✓ Zero-at-origin test passed")


def test_negative_lambda_rejected():
    """Test that negative Laplace arguments are a domain error"""
    with pytest.raises(DomainError):
        MechanismService.phi1(MECH0, (-1, 0))
    with pytest.raises(DomainError):
        MechanismService.psi(IMM0, (0, -0.5))

    print("✓ Negative lambda rejection test passed")


def test_phi1_concave_and_psi_monotone():
    """Test concavity of Phi1 along lambda2 slices and monotonicity of Psi"""
    rng = np.random.default_rng(2)
    for _ in range(100):
        mech = _random_mechanism(rng)
        l2 = float(rng.uniform(0, 3))
        a, b = rng.uniform(0, 3, size=2)
        mid = MechanismService.phi1(mech, ((a + b) / 2, l2))
        chord = (MechanismService.phi1(mech, (a, l2)) + MechanismService.phi1(mech, (b, l2))) / 2
        assert mid >= chord - 1e-12

        lo = rng.uniform(0, 2, size=2)
        hi = lo + rng.uniform(0, 1, size=2)
        assert MechanismService.psi(IMM0, hi) >= MechanismService.psi(IMM0, lo) - 1e-15

    print("✓ Concavity / monotonicity test passed")


def test_moment_matrix_reference():
    """Test H, trace and determinant of the reference mechanism"""
    hm = MechanismService.moment_matrix(MECH0)
    assert np.allclose(hm.h, [[-0.5, 0.4], [0.7, -0.8]], atol=1e-15)
    assert hm.trace == pytest.approx(-1.3, abs=1e-12)
    assert hm.det == pytest.approx(0.12, abs=1e-12)

    empty = BranchingMechanism(a11=0.7)
    assert MechanismService.moment_matrix(empty).h == ((-0.7, 0.0), (0.0, 0.0))

    print("✓ Moment matrix test passed")


def test_moment_matrix_is_gradient_at_zero():
    """Test H against central finite differences of (Phi1, Phi2) at the origin"""
    rng = np.random.default_rng(3)
    eps = 1e-5
    for mech in [MECH0] + [_random_mechanism(rng) for _ in range(20)]:
        field = MechanismService.vector_field(mech)
        h = MechanismService.moment_matrix(mech).h
        for j, direction in enumerate(((1.0, 0.0), (0.0, 1.0))):
            plus = field((eps * direction[0], eps * direction[1]))
            minus = field((-eps * direction[0], -eps * direction[1]))
            for i in range(2):
                assert abs((plus[i] - minus[i]) / (2 * eps) - h[i][j]) < 1e-6

    print("✓ Finite-difference gradient test passed")


def test_stability_reports():
    """Test eigenvalues and hypothesis flags"""
    report = MechanismService.stability_report(MECH0)
    assert report.discriminant == pytest.approx(1.21, abs=1e-12)
    assert report.eigenvalues[0][0] == pytest.approx(-0.1, abs=1e-12)
    assert report.eigenvalues[1][0] == pytest.approx(-1.2, abs=1e-12)
    assert report.ergodic_hypothesis and report.negative_real_parts

    diag = BranchingMechanism(a11=1.0, n2=LevyAtomMeasure(((0.0, -1, 2.0),)))
    report = MechanismService.stability_report(diag)
    assert [ev[0] for ev in report.eigenvalues] == pytest.approx([-1.0, -2.0])
    assert report.negative_real_parts

    unstable = BranchingMechanism(a11=-1.0, n2=LevyAtomMeasure(((0.0, -1, 2.0),)))
    assert not MechanismService.stability_report(unstable).negative_real_parts

    print("✓ Stability report test passed")


def test_validation_lists_violations():
    """Test that every violated admissibility condition is reported"""
    assert MechanismService.validate_branching(MECH0).ok
    assert MechanismService.validate_immigration(IMM0).ok

    bad = BranchingMechanism(
        a11=0.5, a21=-0.1, alpha=-1.0,
        n1=LevyAtomMeasure(((0.0, 0, 1.0), (1.0, -1, 0.5))),
        n2=LevyAtomMeasure(((-0.5, 1, 1.0), (1.0, -2, 0.0))),
    )
    violations = MechanismService.validate_branching(bad).violations
    text = "\n".join(violations)
    assert "a21" in text and "alpha" in text
    assert "origin atom in n1" in text
    assert "z2 < 0 in n1" in text
    assert "z1 < 0 in n2" in text
    assert "z2 < -1 in n2" in text
    assert "non-positive or non-finite weight in n2" in text

    bad_imm = ImmigrationMechanism(b=-1.0, m=LevyAtomMeasure(((1.0, -1, 1.0),)))
    assert len(MechanismService.validate_immigration(bad_imm).violations) == 2

    print(f"✓ Validation test passed ({len(violations)} violations)")


def test_truncation_atom_membership():
    """Test the product-region large-jump masses of the reference mechanism"""
    tm, excess = MechanismService.truncate_mechanism(MECH0, (0.6, 0.0))
    assert excess == (0.4, 0.0)
    assert len(tm.n1) == 0 and len(tm.n2) == 2
    assert tm.a11 == pytest.approx(0.9)

    _, excess = MechanismService.truncate_mechanism(MECH0, (0.6, 0.0), JumpRegion.EXCEEDANCE)
    assert excess == (0.4, 0.2)

    positive = BranchingMechanism(a11=0.1, n1=LevyAtomMeasure(((1.0, 1, 0.3),)),
                                  n2=LevyAtomMeasure(((2.0, 2, 0.7),)))
    tm, excess = MechanismService.truncate_mechanism(positive, (0.0, 0.0))
    assert excess == (0.3, 0.7)
    assert len(tm.n1) == 0 and len(tm.n2) == 0

    print("✓ Truncation membership test passed")


def test_truncation_without_large_jumps_reproduces_phi():
    """Test that an empty large-jump set gives back Phi1 and Phi2"""
    rng = np.random.default_rng(4)
    for mech in [MECH0] + [_random_mechanism(rng) for _ in range(20)]:
        tm, excess = MechanismService.truncate_mechanism(mech, (10.0, 10.0))
        assert excess == (0.0, 0.0)
        for _ in range(5):
            lam = tuple(rng.uniform(0, 3, size=2))
            p1, p2 = MechanismService.truncated_phi(tm, lam)
            assert p1 == pytest.approx(MechanismService.phi1(mech, lam), abs=1e-12)
            assert p2 == pytest.approx(MechanismService.phi2(mech, lam), abs=1e-12)

    print("✓ Full-compensation identity test passed")


def test_truncated_phi_direct_formula():
    """Test truncated_phi against a direct evaluation of the small-jump mechanism"""
    rng = np.random.default_rng(5)
    for _ in range(30):
        mech = _random_mechanism(rng)
        r = (float(rng.uniform(0, 2)), float(rng.integers(0, 2)))
        tm, _ = MechanismService.truncate_mechanism(mech, r)
        l1, l2 = rng.uniform(0, 2, size=2)
        large1 = [a for a in mech.n1 if a[0] > r[0] and a[1] > r[1]]
        small1 = [a for a in mech.n1 if a not in large1]
        large2 = [a for a in mech.n2 if a[0] > r[0] and a[1] > r[1]]
        small2 = [a for a in mech.n2 if a not in large2]

        def comp(atoms):
            return sum(w * (math.exp(-(l1 * z1 + l2 * z2)) - 1 + l1 * z1 + l2 * z2) for z1, z2, w in atoms)

        phi1 = (-(mech.a11 + sum(w * z1 for z1, _, w in large1)) * l1
                + sum(w * z2 for _, z2, w in small1) * l2 - mech.alpha * l1 ** 2 - comp(small1))
        phi2 = ((mech.a21 + sum(w * z1 for z1, _, w in small2)) * l1
                + sum(w * z2 for _, z2, w in small2) * l2 - comp(small2))
        p1, p2 = MechanismService.truncated_phi(tm, (l1, l2))
        assert p1 == pytest.approx(phi1, abs=1e-10)
        assert p2 == pytest.approx(phi2, abs=1e-10)

    print("✓ Truncated mechanism direct-formula test passed")


if __name__ == "__main__":
    test_phi_reference_values()
    test_mechanisms_vanish_at_origin()
    test_negative_lambda_rejected()
    test_phi1_concave_and_psi_monotone()
    test_moment_matrix_reference()
    test_moment_matrix_is_gradient_at_zero()
    test_stability_reports()
    test_validation_lists_violations()
    test_truncation_atom_membership()
    test_truncation_without_large_jumps_reproduces_phi()
    test_truncated_phi_direct_formula()
    print("\n✅ All mechanism service tests passed!")
