import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from superhess.grid import Grid, ScalarField
from superhess.mconvex import (ClassCertificate, WeightSpec, check_certificate, is_m_convex, max_combine,
                               weight_field, weight_sigma_identity_check)
from superhess.superalgebra import sigma_pairing


def test_saddle_is_subharmonic_not_convex():
    g = Grid.centered(2, 11, 1.0)
    X = g.coords()
    u = ScalarField(g, X[0] ** 2 - X[1] ** 2)
    assert is_m_convex(u, 1)
    assert not is_m_convex(u, 2)


def test_log_weight_is_2_convex_off_pole():
    g = Grid.centered(4, 9, 1.0)
    phi = weight_field(WeightSpec(2, 4, (0.0,) * 4), g)
    assert is_m_convex(phi, 2, rel_tol=0.25)


def test_weight_values():
    w = WeightSpec(2, 4, (0.0,) * 4)
    assert w.regime == "log" and w.value((1.0, 0, 0, 0)) == pytest.approx(0.0)
    w1 = WeightSpec(1, 4, (0.0,) * 4)
    x = (0.3, 0.4, 0.0, 1.2)
    assert w1.value(x) == pytest.approx(-1 / (2 * sum(c * c for c in x)))
    wq = WeightSpec(2, 2, (0.0, 0.0))
    assert wq.regime == "quad" and wq.value((0.3, 0.4)) == pytest.approx(0.25)


def test_closed_form_special_values():
    w = WeightSpec(2, 4, (0.0,) * 4)
    assert w.sigma_closed_form((1.0, 0, 0, 0), 2) == pytest.approx(0.0)
    assert w.sigma_closed_form((1.0, 0, 0, 0), 1) == pytest.approx(0.5)
    w = WeightSpec(1, 3, (0.0,) * 3)
    assert w.sigma_closed_form((0.5, 0, 0), 1) == 0.0


def test_identity_check_with_grid():
    w = WeightSpec(1, 3, (0.0, 0.0, 0.0))
    g = Grid.centered(3, 41, 1.0)
    rep = weight_sigma_identity_check(w, 1, [(0.5, 0.25, 0.0), (-0.6, 0.1, 0.3)], grid=g)
    assert rep.ok and rep.max_err_analytic < 1e-12


def test_truncated_weight_stays_convex():
    g = Grid.centered(3, 21, 1.0)
    phi = weight_field(WeightSpec(1, 3, (0.0,) * 3), g)
    c = ScalarField(g, np.full(g.shape, -3.0))
    assert is_m_convex(max_combine(phi, c), 1, rel_tol=0.25)


def test_e0m_certificate_for_quadratic():
    g = Grid.centered(3, 17, 1.0)
    r2 = sum(x ** 2 for x in g.coords())
    u = ScalarField(g, (r2 - 1.0) / 2)
    rep = check_certificate(ClassCertificate("E0m", [u], mass_bound=1e3), u, 1)
    assert rep.valid, rep.reasons


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([(1, 3), (1, 4), (2, 4), (1, 2)]), st.lists(st.floats(-1, 1), min_size=4, max_size=4),
       st.data())
def test_closed_form_matches_hessian(mn, x, data):
    m, n = mn
    x = x[:n]
    if math.hypot(*x) < 0.05:
        return
    s = data.draw(st.integers(0, m))
    w = WeightSpec(m, n, (0.0,) * n)
    val = 1.0 if s == 0 else sigma_pairing(w.hessian(x), s)
    ref = w.sigma_closed_form(x, s)
    scale = math.hypot(*x) ** (-n * s / m)
    assert abs(val - ref) <= 1e-9 * scale
