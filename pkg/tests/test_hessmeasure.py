import math

import numpy as np
import pytest

from superhess.grid import Grid, MollifierSpec, ScalarField, integrate
from superhess.hessmeasure import Current, cln_audit, convergence_harness, hessian_measure
from superhess.mconvex import WeightSpec, weight_field
from superhess.superalgebra import beta_power


def test_dirac_identity_in_the_plane():
    h = 1 / 32
    g = Grid.around((0.0, 0.0), h, 32)
    phi = weight_field(WeightSpec(1, 2, (0.0, 0.0)), g)
    mu = hessian_measure(Current.unit(g), 1, [phi], scheme="inductive", mollifier=MollifierSpec(1, 3 * h))
    for k in (12, 16, 24):
        assert integrate(mu, g.radius((0, 0)) < k * h) == pytest.approx(2 * math.pi, rel=0.03)


def test_poles_need_a_mollifier():
    g = Grid.around((0.0, 0.0), 1 / 8, 8)
    phi = weight_field(WeightSpec(1, 2, (0.0, 0.0)), g)
    with pytest.raises(ValueError):
        hessian_measure(Current.unit(g), 1, [phi])


@pytest.mark.parametrize("n", [2, 3])
def test_quadratic_masses(n):
    g = Grid.centered(n, 15, 1.0)
    u = ScalarField(g, sum(x ** 2 for x in g.coords()) / 2)
    mu = hessian_measure(Current.unit(g), n, [u] * n)
    # (dd# |x|^2/2)^n = beta^n: density n! on every valid node
    assert np.allclose(mu.density[mu.mask], math.factorial(n))


def test_smooth_ladder_masses_constant():
    g = Grid.centered(3, 17, 1.0)
    r2 = sum(x ** 2 for x in g.coords())
    lad = [ScalarField(g, r2 / 2 + 1.0 / j) for j in (1, 2, 4, 8)]
    rep = convergence_harness(Current.unit(g), 1, [lad], [r2 < 0.25])
    assert rep.cauchy_gap < 1e-12


def test_current_must_be_symmetric():
    g = Grid.centered(3, 7, 1.0)
    with pytest.raises(ValueError):
        Current(g, 2, {((0,), (1,)): 1.0})


def test_cln_ratio_is_scale_invariant():
    g = Grid.centered(3, 17, 1.0)
    r2 = sum(x ** 2 for x in g.coords())
    u = ScalarField(g, r2 / 2 + 0.1)
    K = r2 < 0.25
    L = r2 < 0.64
    rep = cln_audit(Current.from_form(g, beta_power(3, 1)), 2, [u], K, L)
    assert math.isfinite(rep.ratio) and rep.scale_invariant
