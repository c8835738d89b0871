"""
Path: engine/tests/test_gw_limit_service.py
Purpose: Unit tests for the rescaled Galton-Watson approximations
Logic:
  - One-type: offspring rescaling rule, generator identity, Lipschitz bound, deterministic composition error
  - Two-type: mixture weights, normalization, degenerate chains, mean and Laplace functional vs the continuum
"""

import math
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np
import pytest

from app.data.reference_mechanisms import BINARY_OFFSPRING, BINARY_RATE, MECH0
from app.errors import DomainError, PreconditionError
from app.models.gw import GW2Spec, OffspringComponent, OffspringMixture
from app.models.mechanism import BranchingMechanism
from app.services.gw_limit_service import GWLimitService, generations_for
from app.services.laplace_service import LaplaceService


def test_build_gw1_rescaling():
    """Test gamma_k = a k and the rescaled offspring vector"""
    spec = GWLimitService.build_gw1(BINARY_RATE, BINARY_OFFSPRING, 10)
    assert spec.gamma_k == 20.0
    assert spec.offspring == pytest.approx((0.05, 0.9, 0.05), abs=1e-15)
    assert GWLimitService.build_gw1(BINARY_RATE, BINARY_OFFSPRING, 1).offspring == pytest.approx(BINARY_OFFSPRING)
    with pytest.raises(DomainError):
        GWLimitService.build_gw1(BINARY_RATE, BINARY_OFFSPRING, 0)

    print("✓ GW1 rescaling test passed")


def test_gw1_generator_equals_limit():
    """Test U_k(z) = a (g(z) - z) for every k"""
    limit = GWLimitService.gw1_limit_generator(BINARY_RATE, BINARY_OFFSPRING, 0.5)
    assert limit == pytest.approx(0.25)
    for k in (10, 100, 1000):
        spec = GWLimitService.build_gw1(BINARY_RATE, BINARY_OFFSPRING, k)
        assert abs(GWLimitService.gw1_generator(spec, 0.5) - limit) <= 1e-12

    print("✓ GW1 generator test passed")


def test_gw1_lipschitz_uniform_in_k():
    """Test |U_k(z) - U_k(z')| <= C |z - z'| with C independent of k"""
    c = GWLimitService.gw1_lipschitz(BINARY_RATE, BINARY_OFFSPRING)
    rng = np.random.default_rng(41)
    for k in (1, 10, 1000):
        spec = GWLimitService.build_gw1(BINARY_RATE, BINARY_OFFSPRING, k)
        for z, w in rng.uniform(0, 1, size=(100, 2)):
            gap = abs(GWLimitService.gw1_generator(spec, z) - GWLimitService.gw1_generator(spec, w))
            assert gap <= c * abs(z - w) + 1e-12

    print(f"✓ Lipschitz test passed (C={c})")


def test_gw1_composition_converges():
    """Test |F_k(z, t) - F(z, t)| strictly decreasing over k at (0.3, 1)"""
    flow = LaplaceService.db_flow(BINARY_RATE, BINARY_OFFSPRING, 0.3, 1.0, step=1e-4).final
    errors = []
    for k in (10, 100, 1000):
        spec = GWLimitService.build_gw1(BINARY_RATE, BINARY_OFFSPRING, k)
        errors.append(abs(GWLimitService.gw1_composition(spec, 0.3, 1.0) - flow))
    assert errors[0] > errors[1] > errors[2]

    spec = GWLimitService.build_gw1(BINARY_RATE, BINARY_OFFSPRING, 10)
    values = [GWLimitService.gw1_composition(spec, z, 1.0) for z in np.linspace(0, 1, 21)]
    assert all(0.0 <= v <= 1.0 for v in values)
    assert all(b >= a for a, b in zip(values, values[1:]))

    print(f"✓ Composition convergence test passed (errors: {errors})")


def test_build_gw2_weights():
    """Test the mixture weights of the reference mechanism at k = 100"""
    spec = GWLimitService.build_gw2(MECH0, 100)
    assert spec.weight("bar_1") == pytest.approx(20.0)
    assert spec.weight("bar_2") == pytest.approx(1.0)
    assert spec.weight("bar_3") == pytest.approx(0.2)
    assert spec.weight("tilde_1") == pytest.approx(0.5)
    assert spec.weight("tilde_2") == pytest.approx(160.0)
    assert spec.weight("tilde_3") == pytest.approx(0.4 * 0.99 + 0.004 + 1.0)
    assert spec.g1.total_weight == pytest.approx(spec.gamma_k, abs=1e-12)
    assert spec.g2.total_weight == pytest.approx(spec.gamma_k, abs=1e-12)
    for mixture in (spec.g1, spec.g2):
        assert sum(mixture.normalized_weights().values()) == pytest.approx(1.0, abs=1e-12)
        pairs, probs = mixture.table()
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(pairs >= 0)

    print(f"✓ GW2 weight test passed (gamma_k={spec.gamma_k:.2f})")


def test_build_gw2_preconditions():
    """Test k = 0 and negative a11 rejection"""
    with pytest.raises(DomainError):
        GWLimitService.build_gw2(MECH0, 0)
    with pytest.raises(PreconditionError):
        GWLimitService.build_gw2(BranchingMechanism(a11=-0.5), 10)

    print("✓ GW2 precondition test passed")


def test_degenerate_chains():
    """Test the absorbing empty chain and a unit-offspring chain"""
    spec = GWLimitService.build_gw2(MECH0, 10)
    path = GWLimitService.simulate_gw2(spec, (0, 0), 25, seed=1)
    assert np.all(path.generations == 0) and not path.truncated

    unit = GW2Spec(
        k=1, gamma_k=1.0,
        g1=OffspringMixture(components=(OffspringComponent(name="one", weight=1.0, outcomes=((1, 0, 1.0),)),)),
        g2=OffspringMixture(components=(OffspringComponent(name="two", weight=1.0, outcomes=((0, 1, 1.0),)),)),
    )
    path = GWLimitService.simulate_gw2(unit, (4, 7), 30, seed=2)
    assert path.generations.shape == (31, 2)
    assert np.all(path.generations == [4, 7])

    print("✓ Degenerate chain test passed")


def test_gw2_mean_matches_continuum():
    """Test the rescaled generation mean against mean_state at k = 100, t = 0.5"""
    k, t = 100, 0.5
    spec = GWLimitService.build_gw2(MECH0, k)
    steps = generations_for(spec.gamma_k, t)
    states, truncated = GWLimitService.gw2_terminal(spec, (k, 1), steps, 10_000, seed=61)
    assert truncated == 0
    scaled = states / np.array([k, 1.0])
    expected = LaplaceService.mean_state(MECH0, (1, 1), t)
    for i in range(2):
        se = scaled[:, i].std(ddof=1) / math.sqrt(len(scaled))
        assert abs(scaled[:, i].mean() - expected[i]) <= 3 * se + 2.0 / k

    print(f"✓ GW2 mean test passed ({steps} generations)")


def test_rescaled_laplace_trivial_cases():
    """Test lambda = 0 and t = 0"""
    spec = GWLimitService.build_gw2(MECH0, 10)
    estimate, se = GWLimitService.rescaled_laplace_gw(spec, (1, 1), (0, 0), 1.0, 100, seed=3)
    assert estimate == 1.0 and se == 0.0
    estimate, se = GWLimitService.rescaled_laplace_gw(spec, (0.55, 2), (1, 1), 0.0, 100, seed=3)
    assert estimate == pytest.approx(math.exp(-5 / 10 - 2)) and se == pytest.approx(0.0, abs=1e-15)

    print("✓ Rescaled Laplace trivial test passed")


def test_convergence_report_critical_linear():
    """Test zero error for the critical linear mechanism"""
    rows = GWLimitService.convergence_report(BranchingMechanism(a11=0.0), (1, 1), (1, 1), 0.5, [10, 100],
                                             500, seed=4)
    assert [r.k for r in rows] == [10, 100]
    for row in rows:
        assert row.abs_error <= 1e-12 and row.stderr <= 1e-12
    with pytest.raises(DomainError):
        GWLimitService.convergence_report(MECH0, (1, 1), (1, 1), 0.5, [100, 10], 10, seed=4)

    print("✓ Critical linear convergence test passed")


def test_convergence_report_reference_mechanism():
    """Test the error column is weakly decreasing within 2 SE for the reference mechanism"""
    rows = GWLimitService.convergence_report(MECH0, (1, 1), (1, 1), 0.5, [10, 100, 1000], 10_000, seed=5)
    for row in rows:
        assert row.abs_error == pytest.approx(abs(row.estimate - row.continuum))
    for prev, nxt in zip(rows, rows[1:]):
        assert nxt.abs_error <= prev.abs_error + 2 * (prev.stderr + nxt.stderr)
    assert rows[-1].abs_error <= 3 * rows[-1].stderr + 1.0 / math.sqrt(1000)

    print(f"✓ Reference convergence test passed ({[round(r.abs_error, 4) for r in rows]})")


if __name__ == "__main__":
    test_build_gw1_rescaling()
    test_gw1_generator_equals_limit()
    test_gw1_lipschitz_uniform_in_k()
    test_gw1_composition_converges()
    test_build_gw2_weights()
    test_build_gw2_preconditions()
    test_degenerate_chains()
    test_gw2_mean_matches_continuum()
    test_rescaled_laplace_trivial_cases()
    test_convergence_report_critical_linear()
    test_convergence_report_reference_mechanism()
    print("\n✅ All GW limit service tests passed!")
