import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from superhess.capacity import (CapacityProblem, cap_mu, capacity_oracle, flux_oracle, largest_admissible_shift,
                                maximality_audit, radial_extremal, relative_extremal, weighted_extremal)
from superhess.grid import Grid, ScalarField
from superhess.mconvex import principal_minor_sum


@pytest.fixture(scope="module")
def ball_in_ball():
    g = Grid.centered(3, 32, 1.0)
    rho = g.radius((0, 0, 0))
    return g, rho < 1.0, rho <= 0.5


def test_oracles_agree_for_newtonian_case():
    assert capacity_oracle(3, 1, 0.5, 1.0) == pytest.approx(2 * flux_oracle(3, 0.5, 1.0), rel=1e-14)
    assert flux_oracle(3, 0.5, 1.0) == pytest.approx(4 * math.pi / (2 - 1), rel=1e-14)


def test_radial_solution(ball_in_ball):
    g, om, E = ball_in_ball
    sol = relative_extremal(g, E, om, 1)
    ex = radial_extremal(g, (0, 0, 0), 0.5, 1.0, 1)
    assert np.max(np.abs(ex - sol.field.values)) <= 5 * g.h
    assert np.all(sol.field.values[E] == -1.0)


def test_extremal_is_maximal_off_E(ball_in_ball):
    g, om, E = ball_in_ball
    sol = relative_extremal(g, E, om, 1, tol=1e-10)
    free = om & ~E & (g.radius((0, 0, 0)) > 0.5 + 2 * g.h) & (g.radius((0, 0, 0)) < 1 - 2 * g.h)
    assert maximality_audit(sol.field, free, 1, tol=1e-5).passed


def test_capacity_scales_with_weight(ball_in_ball):
    g, om, E = ball_in_ball
    rho = g.radius((0, 0, 0))
    u = np.minimum(rho ** 2 / 2 - 1.5, 0.0)
    c1 = cap_mu(CapacityProblem(g, om, E, 1, u=ScalarField(g, u))).cap
    c2 = cap_mu(CapacityProblem(g, om, E, 1, u=ScalarField(g, 2 * u))).cap
    assert c2 == pytest.approx(2 * c1, rel=1e-6)


def test_problem_validation(ball_in_ball):
    g, om, E = ball_in_ball
    with pytest.raises(ValueError):
        CapacityProblem(g, E, om, 1)
    with pytest.raises(ValueError):
        CapacityProblem(g, om, np.zeros(g.shape, bool), 1)
    with pytest.raises(ValueError):
        CapacityProblem(g, om, E, 1, u=ScalarField(g, np.ones(g.shape)))


def test_solutions_decrease_with_obstacle(ball_in_ball):
    g, om, E = ball_in_ball
    rho = g.radius((0, 0, 0))
    u = rho ** 2 / 2 - 1.5
    a = weighted_extremal(CapacityProblem(g, om, E, 1, u=ScalarField(g, np.minimum(u + 0.5, 0))), 400).field.values
    b = weighted_extremal(CapacityProblem(g, om, E, 1, u=ScalarField(g, np.minimum(u + 0.25, 0))), 400).field.values
    assert np.all(b <= a)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-3, 3, allow_nan=False)), st.integers(1, 4))
def test_admissible_shift_lands_on_cone_boundary(B, m):
    A = B + B.T
    tau = float(largest_admissible_shift(A, m))
    S = A - tau * np.eye(4)
    sig = [float(principal_minor_sum(S[None], j)[0]) for j in range(1, m + 1)]
    scale = (1 + np.abs(A).max()) ** np.arange(1, m + 1)
    assert all(s >= -1e-8 * c for s, c in zip(sig, scale))
    # any larger shift leaves the cone
    S2 = A - (tau + 1e-6 * (1 + abs(tau))) * np.eye(4)
    sig2 = [float(principal_minor_sum(S2[None], j)[0]) for j in range(1, m + 1)]
    assert min(sig2) < 1e-8 * scale.max()
