"""
Path: engine/app/data/reference_mechanisms.py
Purpose: Reference mechanisms and offspring laws used by tests, sample configs and docs
"""

from ..models.mechanism import BranchingMechanism, ImmigrationMechanism, LevyAtomMeasure

# Subcritical two-type mechanism with a type-2 death atom; H = [[-0.5, 0.4], [0.7, -0.8]]
MECH0 = BranchingMechanism(
    a11=0.5,
    a21=0.2,
    alpha=0.3,
    n1=LevyAtomMeasure(((1.0, 1, 0.4),)),
    n2=LevyAtomMeasure(((0.5, -1, 1.0), (0.0, 1, 0.2))),
)

IMM0 = ImmigrationMechanism(b=0.1, m=LevyAtomMeasure(((1.0, 1, 0.5),)))

# Continuous-state special case with a closed-form flow
CB_MECH = BranchingMechanism(a11=0.5, alpha=0.3)

NO_IMMIGRATION = ImmigrationMechanism()

BINARY_RATE = 2.0
BINARY_OFFSPRING = (0.5, 0.0, 0.5)
