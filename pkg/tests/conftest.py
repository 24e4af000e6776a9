import math

import pytest

from ptlab.potential import StepFamilySpec, make_square_well, make_steps

A_FIG = math.pi / 4
EPS_FIG = (0.2, A_FIG - 0.7, 0.5)


@pytest.fixture(scope="session")
def square_well():
    """Square well with a=2, depth 1 (the explicitly solvable model)."""
    return make_square_well(2.0, 1.0)


@pytest.fixture(scope="session")
def fig2_steps():
    """Three-band even step potential, band strengths (-90, 0, -100).

    Resolved band heights are (-450, 0, -200): inner well on |x| <= 0.2,
    zero gap, endpoint wells of height -200 on a-0.5 <= |x| <= a.
    """
    return make_steps(StepFamilySpec(A_FIG, EPS_FIG, (-90.0, 0.0, -100.0)))


def fig3_family(theta: float):
    """Step family swept by the inner-band height (integrated strength 0.2*theta).

    With the endpoint bands fixed at height -200, sweeping the inner height
    through [-200, -80] drives two perfect-transmission pairs into merges
    near theta = -140 (at energies near 186 and 448).
    """
    return make_steps(StepFamilySpec(A_FIG, EPS_FIG, (0.2 * theta, 0.0, -100.0)))
