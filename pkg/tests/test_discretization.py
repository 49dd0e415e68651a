import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocyclelab.discretization import (DelayParams, SampledFunction, build_delay_model,
                                       build_parabolic_model, parabolic_load, parabolic_modes_of,
                                       simpson_weights)
from cocyclelab.errors import BadParams
from conftest import delay_params, parabolic_params


@pytest.mark.parametrize("scheme", ["upwind", "upwind2"])
def test_delay_x_mode_eigenvalue(scheme):
    m = build_delay_model(delay_params(n_grid=16, scheme=scheme))
    lam = np.linalg.eigvals(m.A)
    assert np.min(np.abs(lam + 1.0)) < 1e-12
    assert np.all(lam.real < 0)


def test_delay_output_functional():
    p = delay_params(n_grid=16)
    m = build_delay_model(p)
    ones = np.ones(m.n)
    assert abs(m.C @ ones - 1.0) < 1e-14
    # history part alone misses the s = 0 end weight h/2
    hist = ones.copy()
    hist[0] = 0.0
    assert abs(m.C @ hist - 1.0) <= p.h


def test_delay_zero_kernel_and_input():
    m = build_delay_model(delay_params(rho=0.0))
    assert np.all(m.C == 0)
    mb = build_delay_model(delay_params(b=-1))
    e = np.zeros(mb.n)
    e[0] = -1.0
    np.testing.assert_array_equal(mb.B * 1.0, e)


def test_delay_mass_is_trapezoid():
    p = delay_params(tau=2.0, n_grid=10)
    M = build_delay_model(p).M
    assert M[0, 0] == 1.0 and M[1, 1] == pytest.approx(p.h / 2)
    assert np.trace(M) - 1.0 == pytest.approx(2.0 - p.h / 2)


@pytest.mark.parametrize("scheme", ["upwind", "upwind2"])
def test_delay_transport_exact_on_linear_history(scheme):
    # d phi/ds of phi(s) = s is 1 at every history node for both one-sided rules
    p = delay_params(n_grid=12, scheme=scheme)
    m = build_delay_model(p)
    u = np.concatenate([[0.0], p.nodes])
    np.testing.assert_allclose((m.A @ u)[1:], 1.0, atol=1e-12)


def test_delay_params_validation():
    with pytest.raises(BadParams):
        delay_params(lam=-1.0)
    with pytest.raises(BadParams):
        delay_params(b=2)
    with pytest.raises(BadParams):
        delay_params(n_grid=4)
    with pytest.raises(BadParams):
        DelayParams(1.0, 1, 1.0, SampledFunction.constant(1.0, -0.5, 0.0))


def test_parabolic_diagonal():
    m = build_parabolic_model(parabolic_params(n_modes=4))
    k = np.arange(4)
    np.testing.assert_allclose(np.diag(m.A), -2 - np.pi ** 2 * k ** 2)
    assert np.count_nonzero(m.A - np.diag(np.diag(m.A))) == 0


def test_parabolic_output_for_unit_weight():
    m = build_parabolic_model(parabolic_params(n_modes=8))
    e0 = np.zeros(8)
    e0[0] = 1.0
    np.testing.assert_allclose(m.C, e0, atol=1e-10)


def test_parabolic_load_alternates():
    p = parabolic_params(alpha=1.0, n_modes=6)
    np.testing.assert_allclose(parabolic_load(p), [1, -1, 1, -1, 1, -1])
    m = build_parabolic_model(p)
    np.testing.assert_allclose(m.M @ m.B, parabolic_load(p))


def test_parabolic_modes_roundtrip():
    p = parabolic_params(n_modes=6)
    coef = np.array([0.3, -1.0, 0.0, 0.5, 0.0, 0.2])
    u = lambda x: np.cos(np.pi * np.outer(x, np.arange(6))) @ coef
    np.testing.assert_allclose(parabolic_modes_of(p, u), coef, atol=1e-10)


def test_simpson_integrates_cubics():
    x, w = simpson_weights(8, 0.0, 2.0)
    assert w @ x ** 3 == pytest.approx(4.0, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(-2.0, 2.0), st.integers(8, 80))
def test_constant_history_output(tau, c, n):
    # a constant history and constant kernel are integrated exactly
    p = DelayParams(1.0, 1, tau, SampledFunction.constant(c, -tau, 0.0), n)
    m = build_delay_model(p)
    assert m.C @ np.full(m.n, 2.0) == pytest.approx(2.0 * c * tau, abs=1e-12)
