import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from superhess.grid import (Grid, Measure, MollifierSpec, ScalarField, ball_mask, hessian_dd, integrate, mollify,
                            pseudo_ball_mask, read_field, read_mask, write_field, write_mask)
from superhess.mconvex import WeightSpec, weight_field


def test_quadratic_hessian_is_identity():
    g = Grid.centered(3, 11, 1.0)
    u = ScalarField(g, sum(x ** 2 for x in g.coords()) / 2)
    H = hessian_dd(u)
    assert np.allclose(H.values[H.mask], np.eye(3), atol=1e-12)


def test_bilinear_hessian_offdiagonal():
    g = Grid.centered(2, 9, 1.0)
    X = g.coords()
    H = hessian_dd(ScalarField(g, X[0] * X[1]))
    assert np.allclose(H.values[H.mask], [[0, 1], [1, 0]], atol=1e-12)


def test_mollified_abs_lies_above():
    g = Grid.centered(2, 81, 1.0)
    r = g.radius((0, 0))
    u = ScalarField(g, r)
    prev = None
    for j in (1, 2, 4):
        v = mollify(u, MollifierSpec(j, 0.2))
        ok = v.mask
        assert np.all(v.values[ok] >= r[ok] - 1e-12)
        gap = float(np.max(v.values[ok] - r[ok]))
        if prev is not None:
            assert gap < prev
        prev = gap


def test_mollified_pole_is_finite_with_min_at_pole():
    g = Grid.centered(3, 21, 1.0)
    phi = weight_field(WeightSpec(1, 3, (0.0, 0.0, 0.0)), g)
    v = mollify(phi, MollifierSpec(1, 0.3))
    assert np.all(np.isfinite(v.values[v.mask]))
    idx = np.unravel_index(np.argmin(np.where(v.mask, v.values, np.inf)), g.shape)
    assert idx == g.node_of((0, 0, 0))


def test_ball_area():
    g = Grid.centered(2, 241, 1.2)
    mu = Measure(g, (g.radius((0, 0)) < 1.0).astype(float))
    assert integrate(mu) == pytest.approx(math.pi, rel=0.01)


def test_quad_pseudo_ball_is_euclidean_ball():
    g = Grid.centered(2, 21, 1.0)
    phi = weight_field(WeightSpec(2, 2, (0.1, 0.0)), g)
    assert np.array_equal(pseudo_ball_mask(phi, 0.5 ** 2), ball_mask(g, (0.1, 0.0), 0.5))


def test_field_file_round_trip(tmp_path):
    g = Grid.centered(2, 7, 1.0)
    u = ScalarField(g, np.arange(49.0).reshape(7, 7) / 3)
    write_field(tmp_path / "u.sfield", u)
    v = read_field(tmp_path / "u.sfield")
    assert v.grid == g and np.array_equal(v.values, u.values)
    m = g.radius((0, 0)) < 0.7
    write_mask(tmp_path / "m.txt", g, m)
    assert np.array_equal(read_mask(tmp_path / "m.txt"), m)


def test_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        Grid.centered(5, 7, 1.0)
    with pytest.raises(ValueError):
        Grid.centered(2, 3, 1.0)


def test_mollifier_radius_below_spacing():
    g = Grid.centered(2, 11, 1.0)
    with pytest.raises(ValueError):
        mollify(ScalarField(g, np.zeros(g.shape)), MollifierSpec(1, 0.1))


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_affine_fields_mollify_and_differentiate_exactly(c, b):
    g = Grid.centered(2, 15, 1.0)
    X = g.coords()
    u = ScalarField(g, c + b[0] * X[0] + b[1] * X[1])
    v = mollify(u, MollifierSpec(1, 0.3))
    assert np.allclose(v.values[v.mask], u.values[v.mask], atol=1e-9 * (1 + abs(c)))
    H = hessian_dd(u)
    assert np.allclose(H.values[H.mask], 0.0, atol=1e-9)
