import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from superhess.grid import Grid, MollifierSpec, ScalarField
from superhess.hessmeasure import Current
from superhess.lelong import (LelongLadder, adjoint_check, base_grid, compare_weights, extrapolate, m_lelong_point,
                              nu_classic, nu_m_ladder, reweight_check, scaling_check)
from superhess.mconvex import WeightSpec, weight_field
from superhess.superalgebra import dx, dxi, wedge


@pytest.mark.parametrize("n", [2, 3])
def test_classic_number_of_unit_current(n):
    g = Grid.centered(n, 61 if n == 2 else 31, 1.0)
    T = Current.unit(g)
    target = math.factorial(n) * math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    for r in (0.5, 0.7):
        assert nu_classic(T, (0.0,) * n, r, quadrature="volume") == pytest.approx(target, rel=1e-9)


def test_point_ladder_of_unit_current_is_constant():
    g = Grid.centered(2, 81, 1.0)
    lad = m_lelong_point(Current.unit(g), (0.0, 0.0), 1, [0.8, 0.4, 0.2], quadrature="volume")
    # trace mass of the unit current is n! Vol(B) t^n
    assert np.allclose(lad.nu, 2 * math.pi, rtol=1e-9)
    assert lad.limit == pytest.approx(2 * math.pi, rel=1e-9)


def test_ladder_report_schema():
    lad = LelongLadder([0.4, 0.2], [1.0, 0.5], [2.0, 1.5], monotone=True)
    assert lad.to_csv().splitlines()[0] == "r,mass,nu"
    assert set(json.loads(lad.to_json())) == {"limit", "uncertainty", "monotone"}
    assert lad.uncertainty == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_richardson_is_exact_on_quadratics(a, b, c):
    ts = [0.8 * 0.5 ** k for k in range(4)]
    vals = [a + b * t + c * t * t for t in ts]
    lim, unc = extrapolate(vals, ts)
    assert lim == pytest.approx(a, abs=1e-9 * (1 + abs(a) + abs(b) + abs(c)))
    assert unc == pytest.approx(abs(vals[-1] - vals[-2]))


def _plane_weight(h=1 / 64, half=64):
    g = Grid.around((0.0, 0.0), h, half)
    return g, Current.unit(g), weight_field(WeightSpec(1, 2, (0.0, 0.0)), g), MollifierSpec(1, 3 * h)


def test_scaling_law_level_by_level():
    g, T, phi, spec = _plane_weight()
    levels = [math.log(t) for t in (0.8, 0.4, 0.2)]
    rep = scaling_check(T, phi, 1, 3.0, levels, mollifier=spec)
    assert rep["level_gap"] < 1e-10
    assert rep["gap"] <= rep["uncertainty"] + 1e-12


def test_dirac_number_of_log_weight():
    g, T, phi, spec = _plane_weight()
    lad = nu_m_ladder(T, phi, 1, [math.log(t) for t in (0.8, 0.4, 0.2)], mollifier=spec)
    assert np.allclose(lad.nu, 2 * math.pi, rtol=0.01)


def test_comparison_with_shifted_pole():
    g, T, phi, spec = _plane_weight()
    psi = weight_field(WeightSpec(1, 2, (g.h, 0.0)), g)
    rep = compare_weights(T, phi, psi, 1, [math.log(t) for t in (0.6, 0.4, 0.3)], mollifier=spec)
    assert math.isfinite(rep.l) and rep.holds


def test_reweighting_in_the_plane():
    g, T, phi, spec = _plane_weight()
    rep = reweight_check(T, phi, 1, lambda x: np.exp(2 * x), lambda x: 2 * math.exp(2 * x),
                         [math.log(0.5), math.log(0.3)], chi_at_minus_inf=0.0, mollifier=spec)
    assert rep.max_gap < 0.01


def test_quad_regime_ladder_increases_with_r():
    g = Grid.centered(2, 41, 1.0)
    r2 = sum(x ** 2 for x in g.coords())
    T = Current.scalar(g, 1.0 + 0.3 * r2)
    w = weight_field(WeightSpec(2, 2, (0.0, 0.0)), g)
    lad = nu_m_ladder(T, w, 2, [t * t for t in (0.8, 0.4, 0.2)], regime="quad", scheme="pairing")
    assert lad.monotone
    assert all(b <= a for a, b in zip(lad.nu, lad.nu[1:]))


def test_adjoint_identity():
    g = Grid.centered(4, 9, 1.0)
    r2 = sum(x ** 2 for x in g.coords())
    T = Current.from_form(g, wedge(dx(4, 4), dxi(4, 4)), np.where(r2 < 0.64, (0.64 - r2) ** 2, 0.0))
    Y = base_grid(g, 1).coords()
    rep = adjoint_check(T, 1, {((0, 1, 2), (0, 1, 2)): 1 + Y[0] * Y[1] ** 2 - Y[2]})
    assert rep["rel_gap"] < 1e-10
