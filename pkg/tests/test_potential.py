import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from superhess.grid import Grid, MollifierSpec, ScalarField
from superhess.hessmeasure import Current
from superhess.potential import (NewtonKernel, kernel_consistency, local_potential, newton_convolve,
                                 residual, trace_by_beta, trace_constant, trace_potential)
from superhess.superalgebra import beta_power, form_from_matrix


@pytest.mark.parametrize("n,p,val", [(3, 1, 24), (3, 2, 6), (4, 1, 432), (4, 2, 144), (4, 3, 24)])
def test_trace_constants(n, p, val):
    assert trace_constant(n, p) * math.factorial(n) == val


def test_fft_matches_direct():
    g = Grid.centered(3, 9, 1.0)
    f = np.zeros(g.shape)
    f[3:6, 3:6, 4] = np.arange(9).reshape(3, 3)
    assert np.max(np.abs(newton_convolve(f, g, "fft") - newton_convolve(f, g, "direct"))) < 1e-12


def test_kernel_laplacian_has_unit_mass():
    g = Grid.centered(3, 41, 1.0)
    assert kernel_consistency(g, MollifierSpec(1, 0.3)) == pytest.approx(1.0, abs=0.02)


def _bump(g, R):
    r2 = sum(x ** 2 for x in g.coords())
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(r2 < R * R, np.exp(-1 / np.maximum(R * R - r2, 1e-300) + 1 / (R * R)), 0.0)


def test_unit_atom_gives_scaled_kernel():
    g = Grid.centered(3, 11, 1.0)
    dens = np.zeros(g.shape)
    c = g.node_of((0, 0, 0))
    dens[c] = 1.0 / g.cell_volume
    T = Current.from_form(g, beta_power(3, 2), dens)
    eta = ScalarField(g, np.ones(g.shape))
    P = local_potential(T, eta)
    r = g.radius((0, 0, 0))
    off = r > 0
    tau = T.trace_density()[c] * g.cell_volume
    expect = trace_constant(3, 1) * tau * NewtonKernel(3).value(r[off])
    assert np.allclose(P.u.values[off], expect, rtol=1e-12)
    assert np.allclose(trace_by_beta(P.U, 1)[off], expect, rtol=1e-12)


def test_dual_paths_agree_and_potential_is_weakly_negative():
    g = Grid.centered(4, 11, 1.0)
    T = Current.from_form(g, beta_power(4, 2), _bump(g, 0.7))
    eta = ScalarField(g, np.ones(g.shape))
    P = local_potential(T, eta, seed=3)
    u2 = trace_potential(T, eta).values
    assert np.max(np.abs(P.u.values - u2)) <= 1e-10 * np.max(np.abs(u2))
    assert P.audit_min >= -1e-12


def test_residual_is_small_inside():
    g = Grid.centered(3, 33, 1.0)
    T = Current.from_form(g, form_from_matrix(np.eye(3)), _bump(g, 0.6))
    eta = ScalarField(g, np.ones(g.shape) * (g.radius((0, 0, 0)) < 0.8))
    R = residual(T, eta, local_potential(T, eta))
    inner = g.radius((0, 0, 0)) < 0.3
    assert R.sup_norm(inner) < 1.5


def test_rejects_support_touching_boundary():
    g = Grid.centered(3, 9, 1.0)
    T = Current.from_form(g, beta_power(3, 1), np.ones(g.shape))
    with pytest.raises(ValueError):
        local_potential(T, ScalarField(g, np.ones(g.shape)))


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(1, 2))
def test_potential_is_linear_in_the_current(c, p):
    g = Grid.centered(3, 9, 1.0)
    b = _bump(g, 0.6)
    eta = ScalarField(g, np.ones(g.shape))
    u1 = trace_potential(Current.from_form(g, beta_power(3, 3 - p), b), eta).values
    u2 = trace_potential(Current.from_form(g, beta_power(3, 3 - p), c * b), eta).values
    assert np.allclose(u2, c * u1, rtol=1e-12, atol=1e-14)
    assert np.all(u1 <= 0)
