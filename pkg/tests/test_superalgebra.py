import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from superhess.superalgebra import (FormValue, apply_J, beta, beta_power, dx, dxi, form_from_matrix,
                                    is_m_positive_form, mixed_pairing, mixed_pairing_generic, sigma_pairing,
                                    sigma_pairing_generic, top_form, weak_positivity_audit, wedge)


def test_beta_squared_in_two_dimensions():
    b2 = wedge(beta(2), beta(2))
    assert b2.coeff((0, 1), (0, 1)) != 0
    assert b2.allclose(top_form(2).scale(2.0))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_beta_power_is_factorial_times_top(n):
    assert beta_power(n, n).allclose(top_form(n).scale(math.factorial(n)))


def test_J_on_generators():
    assert apply_J(dx(1, 2)) == dxi(1, 2)
    assert apply_J(dxi(1, 2)) == dx(1, 2).scale(-1.0)


def test_sigma_oracles():
    assert sigma_pairing(np.diag([2.0, 0.0]), 1) == pytest.approx(1.0, abs=1e-15)
    assert sigma_pairing(np.diag([1.0, 2.0, 3.0]), 2) == pytest.approx(11 / 3, rel=1e-14)
    assert sigma_pairing_generic(np.diag([1.0, 2.0, 3.0]), 2) == pytest.approx(11 / 3, rel=1e-14)


def test_mixed_oracle():
    As = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    assert mixed_pairing(As) == pytest.approx(0.5, abs=1e-15)
    assert mixed_pairing_generic(As) == pytest.approx(0.5, abs=1e-15)


def test_m_positivity():
    assert not is_m_positive_form(np.diag([1.0, -2.0]), 2)
    assert is_m_positive_form(np.diag([1.0, -2.0]), 1) is False
    assert is_m_positive_form(np.diag([3.0, -1.0]), 1)
    x = np.array([0.3, -0.2, 0.5, 0.1])
    e = x / np.linalg.norm(x)
    H = (np.eye(4) - 2 * np.outer(e, e)) / np.dot(x, x)  # Hessian of log|x| in R^4
    assert is_m_positive_form(H, 2)


def test_audit_finds_violation():
    rep = weak_positivity_audit(form_from_matrix(np.diag([1.0, -3.0])), trials=64, seed=1)
    assert rep.violated


def test_audit_positive_form_clean():
    rep = weak_positivity_audit(beta_power(3, 2), trials=64, seed=2)
    assert not rep.violated


def test_text_round_trip():
    f = wedge(form_from_matrix(np.array([[1.0, 0.5], [0.5, 2.0]])), beta(2)).scale(0.25)
    assert FormValue.from_text(f.to_text()).allclose(f)


def test_wedge_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        wedge(beta(2), beta(3))


sym = st.integers(2, 4).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-3, 3, allow_nan=False)).map(lambda B: B + B.T))


@settings(max_examples=60, deadline=None)
@given(sym, st.data())
def test_fast_sigma_matches_generic(A, data):
    n = A.shape[0]
    j = data.draw(st.integers(1, n))
    lam = np.abs(np.linalg.eigvalsh(A))
    scale = max(1e-300, math.comb(n, j) ** -1 * sum(math.prod(c) for c in _combos(lam, j)))
    assert abs(sigma_pairing(A, j) - sigma_pairing_generic(A, j)) <= 1e-11 * max(scale, 1.0)


def _combos(lam, j):
    from itertools import combinations
    return combinations(lam, j)


@settings(max_examples=30, deadline=None)
@given(sym)
def test_mixed_on_equal_entries_is_sigma(A):
    n = A.shape[0]
    k = n if n < 4 else 2
    val = mixed_pairing([A] * k)
    assert val == pytest.approx(sigma_pairing(A, k), rel=1e-9, abs=1e-9 * (1 + np.abs(A).max()) ** k)


@settings(max_examples=30, deadline=None)
@given(st.lists(arrays(np.float64, (3, 3), elements=st.floats(-2, 2, allow_nan=False)), min_size=3, max_size=3))
def test_mixed_is_symmetric(Bs):
    As = [B + B.T for B in Bs]
    a = mixed_pairing(As)
    b = mixed_pairing([As[2], As[0], As[1]])
    assert a == pytest.approx(b, rel=1e-10, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(sym)
def test_J_fixes_symmetric_forms(A):
    f = form_from_matrix(A)
    assert apply_J(f).allclose(f)
    g = wedge(f, f)
    assert apply_J(g).allclose(g)


@settings(max_examples=20, deadline=None)
@given(sym, sym)
def test_even_forms_commute(A, B):
    if A.shape != B.shape:
        return
    a, b = form_from_matrix(A), form_from_matrix(B)
    assert wedge(a, b).allclose(wedge(b, a))
